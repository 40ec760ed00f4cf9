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

#include "mitkd/numerics/adam.hpp"

#include <cmath>

namespace mitkd::num {

const AdamMoments* AdamState::moments(const std::string& name) const {
  auto it = moments_.find(name);
  return it == moments_.end() ? nullptr : &it->second;
}

void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments,
                 const AdamOptions& options, double learning_rate) {
  if (param.size() != grad.size()) {
    throw DimensionError("adam_update: parameter has " + std::to_string(param.size()) + " values, gradient has " +
                         std::to_string(grad.size()));
  }
  if (moments.first.empty()) {
    moments.first.assign(param.size(), 0.0);
    moments.second.assign(param.size(), 0.0);
  }
  moments.step += 1;
  const double b1 = options.beta1;
  const double b2 = options.beta2;
  const double t = static_cast<double>(moments.step);
  const double correction1 = 1.0 - std::pow(b1, t);
  const double correction2 = 1.0 - std::pow(b2, t);
  const double decay = learning_rate * options.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    double& m = moments.first[i];
    double& v = moments.second[i];
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    param[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + options.epsilon) + decay * param[i];
  }
}

void adam_step(std::span<const NamedTensor> params, AdamState& state, double learning_rate) {
  state.step_ += 1;
  for (const NamedTensor& p : params) {
    if (!p.tensor.has_grad()) continue;
    Tensor t = p.tensor;
    AdamMoments& slot = state.moments_[p.name];
    adam_update(t.mutable_data(), t.grad(), slot, state.options_, learning_rate);
  }
}

double lr_schedule(std::uint64_t step, std::uint64_t total_steps, double peak_lr) {
  if (total_steps == 0) throw ContractError("lr_schedule: total_steps must be positive");
  if (step > total_steps) {
    throw ContractError("lr_schedule: step " + std::to_string(step) + " exceeds total " + std::to_string(total_steps));
  }
  const double s = static_cast<double>(step);
  const double total = static_cast<double>(total_steps);
  const double warmup = kWarmupFraction * total;
  if (s < warmup) return peak_lr * s / warmup;
  if (total <= warmup) return peak_lr;
  return peak_lr * (total - s) / (total - warmup);
}

}  // namespace mitkd::num
