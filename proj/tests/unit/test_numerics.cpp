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
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "mitkd/numerics/ops.hpp"
#include "mitkd/numerics/random.hpp"
#include "mitkd/numerics/tape.hpp"

namespace mitkd::num {
namespace {

using testing::random_tensor;

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor({r, c}, std::move(v)); }

void expect_values(const Tensor& t, const std::vector<double>& expected, double tol) {
  ASSERT_EQ(t.numel(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(t.data()[i], expected[i], tol) << "index " << i;
}

// Naive reference, written independently of the library kernel.
std::vector<double> triple_loop(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a.data()[i * k + p] * b.data()[p * n + j];
    }
  }
  return c;
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  expect_values(matmul(mat(2, 2, {1, 0, 0, 1}), mat(2, 2, {1, 2, 3, 4})), {1, 2, 3, 4}, 0.0);
}

TEST(Matmul, ProjectorKeepsFirstRow) {
  expect_values(matmul(mat(2, 2, {1, 0, 0, 0}), mat(2, 2, {5, 6, 7, 8})), {5, 6, 0, 0}, 0.0);
}

TEST(Matmul, MatchesTripleLoopOracle) {
  const Tensor a = random_tensor({3, 4}, 11, 1.0, false);
  const Tensor b = random_tensor({4, 2}, 12, 1.0, false);
  const Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{3, 2}));
  expect_values(c, triple_loop(a, b), 1e-12);
}

TEST(Matmul, BatchedSlicesMatchPerSliceOracle) {
  const Tensor a = random_tensor({2, 3, 5}, 13, 1.0, false);
  const Tensor b = random_tensor({2, 5, 4}, 14, 1.0, false);
  const Tensor c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 3, 4}));
  for (std::size_t s = 0; s < 2; ++s) {
    const Tensor as({3, 5}, {a.data().begin() + s * 15, a.data().begin() + (s + 1) * 15});
    const Tensor bs({5, 4}, {b.data().begin() + s * 20, b.data().begin() + (s + 1) * 20});
    const auto ref = triple_loop(as, bs);
    for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(c.data()[s * 12 + i], ref[i], 1e-12);
  }
}

TEST(Matmul, TransposedVariantMatchesExplicitTranspose) {
  const Tensor a = random_tensor({3, 4}, 15, 1.0, false);
  const Tensor b = random_tensor({5, 4}, 16, 1.0, false);
  const Tensor c = matmul_transposed(a, b);
  expect_values(c, triple_loop(a, transpose(b)), 1e-12);
}

TEST(Matmul, InnerMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(shape_string({2, 3})), std::string::npos) << msg;
    EXPECT_NE(msg.find(shape_string({4, 2})), std::string::npos) << msg;
  }
}

TEST(Softmax, UniformLogits) { expect_values(softmax_rows(mat(1, 2, {0, 0})), {0.5, 0.5}, 1e-15); }

TEST(Softmax, AnalyticLogRatio) {
  expect_values(softmax_rows(mat(1, 2, {std::log(1.0), std::log(3.0)})), {0.25, 0.75}, 1e-15);
}

TEST(Softmax, MaskedEntriesAreExactlyZero) {
  const Tensor p = softmax_rows(mat(1, 3, {5, 5, 5}), RowMask{{1, 1, 0}, 3});
  EXPECT_NEAR(p.data()[0], 0.5, 1e-15);
  EXPECT_NEAR(p.data()[1], 0.5, 1e-15);
  EXPECT_EQ(p.data()[2], 0.0);
}

TEST(Softmax, FullyMaskedRowIsDegenerate) {
  EXPECT_THROW(softmax_rows(mat(2, 2, {1, 2, 3, 4}), RowMask{{1, 0, 0, 0}, 2}), DegenerateRowError);
}

TEST(Softmax, LargeLogitsStayFinite) {
  const Tensor p = softmax_rows(mat(1, 3, {1000, 999, -1000}));
  for (double v : p.data()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(p.data()[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
}

// Property: over random logits and random masks with at least one kept entry per row,
// unmasked entries are positive and sum to one, masked entries are exactly zero.
TEST(SoftmaxProperty, RowsAreStochasticOverKeptEntries) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 1 + rng() % 6, width = 1 + rng() % 9;
    const Tensor x = random_tensor({rows, width}, rng(), 5.0, false);
    RowMask mask{std::vector<std::uint8_t>(rows * width), width};
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < width; ++c) mask.keep[r * width + c] = rng() % 3 != 0;
      mask.keep[r * width + rng() % width] = 1;
    }
    const Tensor p = softmax_rows(x, mask);
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < width; ++c) {
        const double v = p.data()[r * width + c];
        if (mask.keep[r * width + c]) {
          EXPECT_GT(v, 0.0);
          total += v;
        } else {
          EXPECT_EQ(v, 0.0);
        }
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, MaskRowsBroadcastOverBlocks) {
  // [batch 1 x heads 2 x query 2 x key 3], padding mask [1 x 3].
  const Tensor x = Tensor::zeros({1, 2, 2, 3});
  const Tensor p = softmax_rows(x, RowMask{{1, 1, 0}, 3});
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_NEAR(p.data()[r * 3], 0.5, 1e-15);
    EXPECT_EQ(p.data()[r * 3 + 2], 0.0);
  }
}

TEST(KlDivergence, IdenticalRowsGiveZero) {
  const Tensor p = mat(1, 2, {0.3, 0.7});
  EXPECT_NEAR(kl_divergence_rows(p, p).item(), 0.0, 1e-15);
}

TEST(KlDivergence, PointMassAgainstUniformIsLn2) {
  EXPECT_NEAR(kl_divergence_rows(mat(1, 2, {1, 0}), mat(1, 2, {0.5, 0.5})).item(), std::log(2.0), 1e-15);
}

TEST(KlDivergence, ZeroTargetIsClampedNotThrown) {
  const double kl = kl_divergence_rows(mat(1, 2, {0.5, 0.5}), mat(1, 2, {1.0, 0.0})).item();
  EXPECT_TRUE(std::isfinite(kl));
  EXPECT_NEAR(kl, 0.5 * std::log(0.5) + 0.5 * (std::log(0.5) - std::log(kKlEpsilon)), 1e-12);
}

TEST(KlDivergence, MatchesDirectSummationOracle) {
  const std::size_t rows = 7, width = 5;
  const Tensor p = softmax_rows(random_tensor({rows, width}, 31, 2.0, false));
  const Tensor q = softmax_rows(random_tensor({rows, width}, 32, 2.0, false));
  double oracle = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const double pi = p.data()[r * width + c], qi = q.data()[r * width + c];
      oracle += pi * (std::log(pi) - std::log(qi));
    }
  }
  EXPECT_NEAR(kl_divergence_rows(p, q).item(), oracle / rows, 1e-12);
}

TEST(KlDivergence, RowMaskSelectsRowsForTheMean) {
  const Tensor p = mat(2, 2, {1, 0, 0.5, 0.5});
  const Tensor q = mat(2, 2, {0.5, 0.5, 0.5, 0.5});
  const std::vector<std::uint8_t> keep{1, 0};
  EXPECT_NEAR(kl_divergence_rows(p, q, keep).item(), std::log(2.0), 1e-15);
}

TEST(KlDivergence, ConstantTargetReceivesNoGradient) {
  const Tensor p = softmax_rows(random_tensor({3, 4}, 33, 1.0, false));
  const Tensor logits = random_tensor({3, 4}, 34);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(kl_divergence_rows(p, softmax_rows(logits)));
  }
  EXPECT_FALSE(p.has_grad());
  ASSERT_TRUE(logits.has_grad());
}

TEST(LayerNorm, ConstantRowCollapsesToZero) {
  const Tensor y = layer_norm(Tensor::full({1, 4}, 3.5), Tensor::full({4}, 1.0), Tensor::zeros({4}));
  expect_values(y, {0, 0, 0, 0}, 1e-12);
}

TEST(LayerNorm, NormalizedRowIsNearlyUnchanged) {
  const Tensor y = layer_norm(mat(1, 2, {1, -1}), Tensor::full({2}, 1.0), Tensor::zeros({2}));
  const double s = 1.0 / std::sqrt(1.0 + kLayerNormEpsilon);
  expect_values(y, {s, -s}, 1e-12);
}

TEST(LayerNorm, RandomRowHasZeroMeanUnitVariance) {
  const std::size_t d = 64;
  const Tensor x = random_tensor({1, d}, 41, 3.0, false);
  const Tensor y = layer_norm(x, Tensor::full({d}, 1.0), Tensor::zeros({d}));
  const auto moments = [d](const Tensor& t) {
    const double m = std::accumulate(t.data().begin(), t.data().end(), 0.0) / d;
    double var = 0.0;
    for (double v : t.data()) var += (v - m) * (v - m);
    return std::pair{m, var / d};
  };
  const auto [m, var] = moments(y);
  const double input_var = moments(x).second;
  EXPECT_LT(std::abs(m), 1e-9);
  // The epsilon shrinks the variance to v / (v + eps).
  EXPECT_NEAR(var, input_var / (input_var + kLayerNormEpsilon), 1e-12);
}

TEST(Gelu, ZeroAtOrigin) { EXPECT_EQ(gelu(Tensor::scalar(0.0)).item(), 0.0); }

TEST(Gelu, MatchesTanhFormula) {
  const Tensor x = mat(1, 3, {-2.0, 0.5, 3.0});
  std::vector<double> expected;
  for (double v : x.data()) {
    expected.push_back(0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (v + 0.044715 * v * v * v))));
  }
  expect_values(gelu(x), expected, 1e-15);
}

TEST(CrossEntropy, UniformLogitsGiveLn2) {
  const std::vector<int> labels{0};
  EXPECT_NEAR(cross_entropy_loss(mat(1, 2, {0, 0}), labels).item(), std::log(2.0), 1e-15);
}

TEST(CrossEntropy, StableForLargeLogits) {
  const std::vector<int> labels{1};
  EXPECT_NEAR(cross_entropy_loss(mat(1, 2, {1000, 0}), labels).item(), 1000.0, 1e-9);
}

TEST(Embedding, OneHotIdsReproduceRows) {
  const Tensor table = random_tensor({5, 3}, 51, 1.0, false);
  const std::vector<int> ids{4, 0, 2};
  const Tensor rows = embedding_lookup(table, ids);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(rows.data()[r * 3 + c], table.data()[ids[r] * 3 + c]);
  }
}

TEST(Embedding, OutOfRangeIdThrows) {
  const std::vector<int> bad{5};
  const std::vector<int> negative{-1};
  EXPECT_THROW(embedding_lookup(Tensor::zeros({5, 3}), bad), IndexError);
  EXPECT_THROW(embedding_lookup(Tensor::zeros({5, 3}), negative), IndexError);
}

TEST(Shapes, ConcatThenSplitRoundTrips) {
  const Tensor a = random_tensor({2, 3}, 61, 1.0, false);
  const Tensor b = random_tensor({2, 2}, 62, 1.0, false);
  const std::vector<Tensor> parts{a, b};
  const Tensor c = concat(parts, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 5}));
  const std::vector<std::size_t> sizes{3, 2};
  const auto back = split(c, sizes, 1);
  expect_values(back[0], {a.data().begin(), a.data().end()}, 0.0);
  expect_values(back[1], {b.data().begin(), b.data().end()}, 0.0);
}

TEST(Shapes, TransposeTwiceIsIdentity) {
  const Tensor a = random_tensor({3, 4}, 63, 1.0, false);
  const Tensor t = transpose(a);
  EXPECT_EQ(t.shape(), (Shape{4, 3}));
  EXPECT_EQ(t.data()[1 * 3 + 2], a.data()[2 * 4 + 1]);
  expect_values(transpose(t), {a.data().begin(), a.data().end()}, 0.0);
}

TEST(Shapes, ReshapeRejectsCountMismatch) { EXPECT_THROW(reshape(Tensor::zeros({2, 3}), {4, 2}), DimensionError); }

TEST(Backward, SumGivesOnes) {
  const Tensor w = random_tensor({2, 3}, 71);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum(w));
  }
  for (double g : w.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, HalfSquaredNormGivesParameter) {
  const Tensor w = random_tensor({2, 3}, 72);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(scale(sum(mul(w, w)), 0.5));
  }
  for (std::size_t i = 0; i < w.numel(); ++i) EXPECT_NEAR(w.grad()[i], w.data()[i], 1e-15);
}

TEST(Backward, NonScalarLossIsAContractError) {
  const Tensor w = random_tensor({2, 3}, 73);
  Tape tape;
  Tape::Scope scope(tape);
  const Tensor y = scale(w, 2.0);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Tape, ReplaysEntriesNewestFirstExactlyOnce) {
  Tape tape;
  std::vector<int> order;
  for (int i = 0; i < 5; ++i) tape.record([&order, i] { order.push_back(i); });
  tape.backward(Tensor::scalar(0.0, true));
  EXPECT_EQ(order, (std::vector<int>{4, 3, 2, 1, 0}));
  EXPECT_TRUE(tape.empty());
}

TEST(Tape, NoGradSuspendsRecording) {
  const Tensor w = random_tensor({2, 2}, 74);
  Tape tape;
  Tape::Scope scope(tape);
  {
    Tape::NoGrad guard;
    const Tensor y = matmul(w, w);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(tape.empty());
  const Tensor z = matmul(w, w);
  EXPECT_TRUE(z.requires_grad());
  EXPECT_FALSE(tape.empty());
}

TEST(Random, DerivedSeedsAreStableAndLabelSensitive) {
  EXPECT_EQ(derive_seed(7, "alpha"), derive_seed(7, "alpha"));
  EXPECT_NE(derive_seed(7, "alpha"), derive_seed(7, "beta"));
  EXPECT_NE(derive_seed(7, "alpha"), derive_seed(8, "alpha"));
  EXPECT_NE(derive_seed(7, "alpha", 0), derive_seed(7, "alpha", 1));
}

TEST(Random, ShuffleIsAPermutation) {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  Rng rng(3);
  shuffle(v, rng);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Random, Uniform01StaysInHalfOpenInterval) {
  Rng rng(4);
  for (int i = 0; i < 10000; ++i) {
    const double u = uniform01(rng);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

}  // namespace
}  // namespace mitkd::num
