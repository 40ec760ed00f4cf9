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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "mitkd/numerics/tape.hpp"
#include "mitkd/numerics/tensor.hpp"

namespace mitkd::testing {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdTolerance = 1e-4;

struct GradCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true gradient is
/// zero from turning finite-difference round-off into a huge ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares tape gradients of `loss_fn` with central differences at up to `samples`
/// randomly chosen coordinates across `params` (every coordinate when samples == 0).
inline GradCheck check_gradients(const std::function<num::Tensor()>& loss_fn, const std::vector<num::Tensor>& params,
                                 std::size_t samples = 0, std::uint64_t seed = 1) {
  for (const auto& p : params) p.zero_grad();
  {
    num::Tape tape;
    num::Tape::Scope scope(tape);
    tape.backward(loss_fn());
  }
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].numel(); ++i) coords.emplace_back(t, i);
  }
  if (samples > 0 && samples < coords.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(samples);
  }
  GradCheck out;
  num::Tape::NoGrad no_grad;
  for (const auto& [t, i] : coords) {
    num::Tensor p = params[t];
    const double analytic = p.has_grad() ? p.grad()[i] : 0.0;
    const double original = p.data()[i];
    p.mutable_data()[i] = original + kFdStep;
    const double up = loss_fn().item();
    p.mutable_data()[i] = original - kFdStep;
    const double down = loss_fn().item();
    p.mutable_data()[i] = original;
    const double numeric = (up - down) / (2.0 * kFdStep);
    out.max_relative_error = std::max(out.max_relative_error, relative_error(analytic, numeric));
    ++out.checked;
  }
  return out;
}

inline num::Tensor random_tensor(num::Shape shape, std::uint64_t seed, double scale = 1.0, bool requires_grad = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> data(num::shape_numel(shape));
  for (auto& x : data) x = dist(rng);
  return num::Tensor(std::move(shape), std::move(data), requires_grad);
}

}  // namespace mitkd::testing
