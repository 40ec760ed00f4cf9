// Copyright 2026 The MITKD Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <vector>

#include "mitkd/numerics/tensor.hpp"

namespace mitkd::num {

/// Ordered record of executed differentiable operations.
///
/// Operations record onto the tape that is active on the calling thread (see
/// Tape::Scope). Without an active tape operations run in inference mode and
/// produce tensors that do not require grad.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(BackwardFn fn) { entries_.push_back(std::move(fn)); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Seeds d(loss)/d(loss) = 1 and replays every entry once, newest first.
  /// The tape is consumed: entries are released after the pass.
  void backward(const Tensor& loss);
  void clear() { entries_.clear(); }

  static Tape* active();

  /// Makes a tape active for the lifetime of the scope (thread-local, nestable).
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  /// Suspends recording for the lifetime of the guard.
  class NoGrad {
   public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

   private:
    Tape* previous_;
  };

 private:
  std::vector<BackwardFn> entries_;
};

inline void backward(const Tensor& loss, Tape& tape) { tape.backward(loss); }

}  // namespace mitkd::num
