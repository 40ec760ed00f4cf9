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

#include "mitkd/numerics/tape.hpp"

#include <algorithm>

namespace mitkd::num {
namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape::NoGrad::NoGrad() : previous_(g_active_tape) { g_active_tape = nullptr; }
Tape::NoGrad::~NoGrad() { g_active_tape = previous_; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward on a loss that was not produced through a tape");
  }
  Tensor seed = loss;
  std::span<double> g = seed.mutable_grad();
  std::fill(g.begin(), g.end(), 1.0);

  std::vector<BackwardFn> entries = std::move(entries_);
  entries_.clear();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    (*it)();
    *it = nullptr;  // release captured intermediates as soon as they are consumed
  }
}

}  // namespace mitkd::num
