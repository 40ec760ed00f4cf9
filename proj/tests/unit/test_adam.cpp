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

#include <cmath>

#include <gtest/gtest.h>

#include "mitkd/numerics/adam.hpp"
#include "mitkd/numerics/ops.hpp"
#include "mitkd/numerics/tape.hpp"

namespace mitkd::num {
namespace {

// Scalar Adam with decoupled decay, kept deliberately separate from the library loop.
struct ScalarAdam {
  double m = 0, v = 0, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.0;
  int t = 0;
  double step(double p, double g, double lr) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return p - lr * (mh / (std::sqrt(vh) + eps) + wd * p);
  }
};

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{3.0, -0.2, 1e-3};
  AdamMoments moments;
  adam_update(p, g, moments, AdamOptions{.weight_decay = 0.0}, 0.01);
  EXPECT_NEAR(p[0], 1.0 - 0.01, 1e-8);
  EXPECT_NEAR(p[1], -2.0 + 0.01, 1e-8);
  EXPECT_NEAR(p[2], 0.5 - 0.01, 1e-6);
}

TEST(Adam, ZeroGradientWithoutDecayIsAFixedPoint) {
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{0.0, 0.0};
  AdamMoments moments;
  for (int i = 0; i < 3; ++i) adam_update(p, g, moments, AdamOptions{.weight_decay = 0.0}, 0.1);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], -2.0);
}

TEST(Adam, QuadraticTrajectoryMatchesScalarReference) {
  // Minimize 0.5 * a * (x - c)^2 for three steps, with and without decay.
  const double a = 2.5, c = 0.7, lr = 0.05;
  for (double wd : {0.0, 0.01}) {
    ScalarAdam ref;
    ref.wd = wd;
    double x_ref = -1.3;
    const Tensor x = Tensor::scalar(-1.3, true);
    AdamState state(AdamOptions{.weight_decay = wd});
    const std::vector<NamedTensor> params{{"x", x}};
    for (int s = 0; s < 3; ++s) {
      x.zero_grad();
      Tape tape;
      {
        Tape::Scope scope(tape);
        const Tensor d = add(x, Tensor::scalar(-c));
        tape.backward(scale(mul(d, d), 0.5 * a));
      }
      adam_step(params, state, lr);
      x_ref = ref.step(x_ref, a * (x_ref - c), lr);
      EXPECT_NEAR(x.item(), x_ref, 1e-12) << "step " << s << " decay " << wd;
    }
    EXPECT_EQ(state.step(), 3u);
    EXPECT_EQ(state.moments("x")->step, 3u);
  }
}

TEST(Adam, ParametersWithoutGradientAreUntouched) {
  const Tensor used = Tensor::full({2}, 1.0, true);
  const Tensor idle = Tensor::full({2}, 1.0, true);
  AdamState state;
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum(used));
  }
  const std::vector<NamedTensor> params{{"used", used}, {"idle", idle}};
  adam_step(params, state, 0.1);
  EXPECT_NE(used.data()[0], 1.0);
  EXPECT_EQ(idle.data()[0], 1.0);
  EXPECT_EQ(state.moments("idle"), nullptr);
}

TEST(Adam, MomentShapesMatchParameters) {
  const Tensor w = Tensor::full({3, 2}, 0.5, true);
  AdamState state;
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum(mul(w, w)));
  }
  const std::vector<NamedTensor> params{{"w", w}};
  adam_step(params, state, 0.1);
  ASSERT_NE(state.moments("w"), nullptr);
  EXPECT_EQ(state.moments("w")->first.size(), w.numel());
  EXPECT_EQ(state.moments("w")->second.size(), w.numel());
}

TEST(LrSchedule, RampStartsAtZero) { EXPECT_EQ(lr_schedule(0, 1000, 1e-3), 0.0); }

TEST(LrSchedule, PeaksAfterTenPercentOfSteps) { EXPECT_DOUBLE_EQ(lr_schedule(100, 1000, 1e-3), 1e-3); }

TEST(LrSchedule, DecaysToZeroAtTheEnd) { EXPECT_EQ(lr_schedule(1000, 1000, 1e-3), 0.0); }

TEST(LrSchedule, IsLinearOnBothSides) {
  EXPECT_DOUBLE_EQ(lr_schedule(50, 1000, 1e-3), 0.5e-3);
  EXPECT_DOUBLE_EQ(lr_schedule(550, 1000, 1e-3), 0.5e-3);
}

TEST(LrSchedule, ZeroTotalIsAContractError) { EXPECT_THROW(lr_schedule(0, 0, 1e-3), ContractError); }

}  // namespace
}  // namespace mitkd::num
