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
#include <random>
#include <span>
#include <vector>

#include "mitkd/numerics/tensor.hpp"

namespace mitkd::num {

/// Lower bound applied to q before taking its log in kl_divergence_rows.
inline constexpr double kKlEpsilon = 1e-12;
inline constexpr double kLayerNormEpsilon = 1e-5;

/// Boolean mask over the last axis of a row-structured tensor.
///
/// `keep` holds `rows x width` flags. When the masked tensor has more rows than
/// the mask, consecutive blocks of `tensor_rows / rows` tensor rows share one
/// mask row. An attention tensor [batch x heads x query x key] masked by a
/// [batch x key] padding mask is the intended case.
struct RowMask {
  std::vector<std::uint8_t> keep;
  std::size_t width = 0;

  bool empty() const { return keep.empty(); }
  std::size_t rows() const { return width == 0 ? 0 : keep.size() / width; }
};

// Matrix products. Leading axes of `a` are flattened when `b` is a matrix;
// equal-rank operands are multiplied slice by slice over their leading axes.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ over the last two axes.
Tensor matmul_transposed(const Tensor& a, const Tensor& b);
/// x[... x in] · weight[in x out] + bias[out], fused.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
/// x[... x n] + bias[n]
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
/// [a x b x c x d] -> [a x c x b x d]; moves between token-major and head-major layouts.
Tensor swap_middle_axes(const Tensor& x);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
std::vector<Tensor> split(const Tensor& x, std::span<const std::size_t> sizes, std::size_t axis);

/// GELU, tanh approximation.
Tensor gelu(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double epsilon = kLayerNormEpsilon);

/// Softmax over the last axis. Masked entries are exactly zero.
/// Throws DegenerateRowError when a row has no unmasked entry.
Tensor softmax_rows(const Tensor& x, const RowMask& mask = {});

/// Mean over selected rows of sum_i p_i (log p_i - log max(q_i, kKlEpsilon)), with 0 log 0 = 0.
///
/// `row_mask` selects which rows enter the mean (one flag per row, empty means
/// all). Gradients reach whichever operands require grad; the distillation
/// objective keeps p constant.
Tensor kl_divergence_rows(const Tensor& p, const Tensor& q,
                          std::span<const std::uint8_t> row_mask = {});

/// Mean log-sum-exp cross-entropy of logits [n x classes] against integer labels.
Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels);

/// Gathers rows of table [rows x d]. Throws IndexError for ids outside [0, rows).
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);

/// Inverted dropout. rate == 0 returns x unchanged.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

}  // namespace mitkd::num
