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

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mitkd/numerics/tensor.hpp"

namespace mitkd::num {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Decoupled: applied to the parameter directly, never folded into the moments.
  double weight_decay = 0.01;
};

struct AdamMoments {
  std::vector<double> first;
  std::vector<double> second;
  std::uint64_t step = 0;
};

/// Optimizer state. Moments are keyed by parameter name, so a step may update
/// any subset of the registered parameters (multi-task heads rely on this).
class AdamState {
 public:
  explicit AdamState(AdamOptions options = {}) : options_(options) {}

  const AdamOptions& options() const { return options_; }
  std::uint64_t step() const { return step_; }
  const AdamMoments* moments(const std::string& name) const;

 private:
  friend void adam_step(std::span<const NamedTensor>, AdamState&, double);

  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::map<std::string, AdamMoments> moments_;
};

/// Elementwise Adam update of one parameter vector with bias correction at `moments.step + 1`.
void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments,
                 const AdamOptions& options, double learning_rate);

/// One optimizer step over every parameter that currently holds a gradient.
/// Parameters without a gradient buffer are left untouched, moments included.
void adam_step(std::span<const NamedTensor> params, AdamState& state, double learning_rate);

inline constexpr double kWarmupFraction = 0.10;

/// Linear warmup to `peak_lr` over the first 10% of steps, then linear decay to 0.
double lr_schedule(std::uint64_t step, std::uint64_t total_steps, double peak_lr);

}  // namespace mitkd::num
