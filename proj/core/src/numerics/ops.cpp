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

#include "mitkd/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <numbers>

#include "mitkd/numerics/tape.hpp"

namespace mitkd::num {
namespace {

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void record(Tape::BackwardFn fn) { Tape::active()->record(std::move(fn)); }

// C[m x n] (+)= op(A) · op(B); A is stored [m x k] (or [k x m] when transposed), B [k x n] (or [n x k]).
// Every shape goes through Eigen's packed GEMM kernel.
void gemm(const double* a, bool trans_a, const double* b, bool trans_b, double* c, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (!accumulate) std::fill_n(c, m * n, 0.0);
  if (k == 0) return;
  using Eigen::Index;
  const auto M = static_cast<Index>(m);
  const auto K = static_cast<Index>(k);
  const auto N = static_cast<Index>(n);
  Eigen::internal::gemm_blocking_space<Eigen::RowMajor, double, double, Eigen::Dynamic, Eigen::Dynamic, Eigen::Dynamic>
      blocking(M, N, K, 1, true);
  const auto run = [&]<int LhsOrder, int RhsOrder>(Index lda, Index ldb) {
    Eigen::internal::general_matrix_matrix_product<Index, double, LhsOrder, false, double, RhsOrder, false,
                                                   Eigen::RowMajor, 1>::run(M, N, K, a, lda, b, ldb, c, 1, N, 1.0,
                                                                            blocking, nullptr);
  };
  if (!trans_a && !trans_b) {
    run.template operator()<Eigen::RowMajor, Eigen::RowMajor>(K, N);
  } else if (!trans_a && trans_b) {
    run.template operator()<Eigen::RowMajor, Eigen::ColMajor>(K, K);
  } else if (trans_a && !trans_b) {
    run.template operator()<Eigen::ColMajor, Eigen::RowMajor>(M, N);
  } else {
    run.template operator()<Eigen::ColMajor, Eigen::ColMajor>(M, K);
  }
}

struct GemmPlan {
  std::size_t batch = 1;
  std::size_t m = 0, k = 0, n = 0;
  bool shared_b = false;
  Shape out_shape;
};

// Resolves shapes for a · b (transposed_b: a · bᵀ) over the last two axes.
GemmPlan plan_matmul(const Tensor& a, const Tensor& b, bool transposed_b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto fail = [&]() {
    return DimensionError(std::string(op) + ": incompatible shapes " + shape_string(sa) + " and " + shape_string(sb));
  };
  if (sa.size() < 2 || sb.size() < 2) throw fail();
  GemmPlan plan;
  plan.k = sa.back();
  const std::size_t b_inner = transposed_b ? sb[sb.size() - 1] : sb[sb.size() - 2];
  plan.n = transposed_b ? sb[sb.size() - 2] : sb[sb.size() - 1];
  if (b_inner != plan.k) throw fail();
  if (sb.size() == 2) {
    plan.shared_b = true;
    plan.m = a.numel() / plan.k;
    plan.out_shape = Shape(sa.begin(), sa.end() - 1);
    plan.out_shape.push_back(plan.n);
    return plan;
  }
  if (sa.size() != sb.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin())) throw fail();
  plan.m = sa[sa.size() - 2];
  plan.batch = a.numel() / (plan.m * plan.k);
  plan.out_shape = Shape(sa.begin(), sa.end() - 1);
  plan.out_shape.push_back(plan.n);
  return plan;
}

Tensor matmul_impl(const Tensor& a, const Tensor& b, bool transposed_b, const char* op) {
  const GemmPlan plan = plan_matmul(a, b, transposed_b, op);
  std::vector<double> out(shape_numel(plan.out_shape));
  const std::size_t a_stride = plan.m * plan.k;
  const std::size_t b_stride = plan.shared_b ? 0 : plan.k * plan.n;
  const std::size_t c_stride = plan.m * plan.n;
  for (std::size_t s = 0; s < plan.batch; ++s) {
    gemm(a.data().data() + s * a_stride, false, b.data().data() + s * b_stride, transposed_b,
         out.data() + s * c_stride, plan.m, plan.k, plan.n, false);
  }
  const bool grad = tracking({&a, &b});
  Tensor result(plan.out_shape, std::move(out), grad);
  if (grad) {
    record([a, b, result, plan, transposed_b, a_stride, b_stride, c_stride]() mutable {
      if (!result.has_grad()) return;
      const double* dc = result.grad().data();
      if (a.requires_grad()) {
        double* da = a.mutable_grad().data();
        for (std::size_t s = 0; s < plan.batch; ++s) {
          // dA = dC · op(B)ᵀ
          gemm(dc + s * c_stride, false, b.data().data() + s * b_stride, !transposed_b, da + s * a_stride, plan.m,
               plan.n, plan.k, true);
        }
      }
      if (b.requires_grad()) {
        double* db = b.mutable_grad().data();
        for (std::size_t s = 0; s < plan.batch; ++s) {
          if (transposed_b) {
            // d(Bᵀ) = Aᵀ dC  =>  dB = dCᵀ A, shape [n x k]
            gemm(dc + s * c_stride, true, a.data().data() + s * a_stride, false, db + s * b_stride, plan.n, plan.m,
                 plan.k, true);
          } else {
            gemm(a.data().data() + s * a_stride, true, dc + s * c_stride, false, db + s * b_stride, plan.k, plan.m,
                 plan.n, true);
          }
        }
      }
    });
  }
  return result;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                         " differ");
  }
}

std::size_t last_dim(const Tensor& x) { return x.rank() == 0 ? 1 : x.shape().back(); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, false, "matmul"); }

Tensor matmul_transposed(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, true, "matmul_transposed"); }

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() < 1 || weight.rank() != 2 || bias.rank() != 1 || x.shape().back() != weight.dim(0) ||
      bias.numel() != weight.dim(1)) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + ", weight " + shape_string(weight.shape()) +
                         ", bias " + shape_string(bias.shape()));
  }
  const std::size_t in = weight.dim(0);
  const std::size_t out_dim = weight.dim(1);
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<double> out(rows * out_dim);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(bias.data().data(), out_dim, out.data() + r * out_dim);
  gemm(x.data().data(), false, weight.data().data(), false, out.data(), rows, in, out_dim, true);
  const bool grad = tracking({&x, &weight, &bias});
  Tensor result(std::move(out_shape), std::move(out), grad);
  if (grad) {
    record([x, weight, bias, result, rows, in, out_dim]() mutable {
      if (!result.has_grad()) return;
      const double* dy = result.grad().data();
      if (x.requires_grad()) gemm(dy, false, weight.data().data(), true, x.mutable_grad().data(), rows, out_dim, in, true);
      if (weight.requires_grad()) {
        gemm(x.data().data(), true, dy, false, weight.mutable_grad().data(), in, rows, out_dim, true);
      }
      if (bias.requires_grad()) {
        double* db = bias.mutable_grad().data();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < out_dim; ++j) db[j] += dy[r * out_dim + j];
        }
      }
    });
  }
  return result;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose: need rank >= 2, got " + shape_string(x.shape()));
  Shape shape = x.shape();
  const std::size_t rows = shape[shape.size() - 2];
  const std::size_t cols = shape.back();
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
  const std::size_t slices = x.numel() / (rows * cols);
  std::vector<double> out(x.numel());
  const double* src = x.data().data();
  for (std::size_t s = 0; s < slices; ++s) {
    const std::size_t off = s * rows * cols;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[off + j * rows + i] = src[off + i * cols + j];
  }
  const bool grad = tracking({&x});
  Tensor result(shape, std::move(out), grad);
  if (grad) {
    record([x, result, rows, cols, slices]() mutable {
      if (!result.has_grad()) return;
      const double* dy = result.grad().data();
      double* dx = x.mutable_grad().data();
      for (std::size_t s = 0; s < slices; ++s) {
        const std::size_t off = s * rows * cols;
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) dx[off + i * cols + j] += dy[off + j * rows + i];
      }
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  const bool grad = tracking({&a, &b});
  Tensor result(a.shape(), std::move(out), grad);
  if (grad) {
    record([a, b, result]() mutable {
      if (!result.has_grad()) return;
      auto dy = result.grad();
      if (a.requires_grad()) {
        auto da = a.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (b.requires_grad()) {
        auto db = b.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
      }
    });
  }
  return result;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = bias.numel();
  if (bias.rank() != 1 || x.rank() == 0 || x.shape().back() != n) {
    throw DimensionError("add_bias: shapes " + shape_string(x.shape()) + " and " + shape_string(bias.shape()) +
                         " are incompatible");
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const std::size_t rows = x.numel() / n;
  const double* bv = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bv[j];
  const bool grad = tracking({&x, &bias});
  Tensor result(x.shape(), std::move(out), grad);
  if (grad) {
    record([x, bias, result, rows, n]() mutable {
      if (!result.has_grad()) return;
      auto dy = result.grad();
      if (x.requires_grad()) {
        auto dx = x.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      }
      if (bias.requires_grad()) {
        auto db = bias.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) db[j] += dy[r * n + j];
      }
    });
  }
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  const bool grad = tracking({&a, &b});
  Tensor result(a.shape(), std::move(out), grad);
  if (grad) {
    record([a, b, result]() mutable {
      if (!result.has_grad()) return;
      auto dy = result.grad();
      if (a.requires_grad()) {
        auto da = a.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * b.data()[i];
      }
      if (b.requires_grad()) {
        auto db = b.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * a.data()[i];
      }
    });
  }
  return result;
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  const bool grad = tracking({&x});
  Tensor result(x.shape(), std::move(out), grad);
  if (grad) {
    record([x, result, factor]() mutable {
      if (!result.has_grad()) return;
      auto dy = result.grad();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor;
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const bool grad = tracking({&x});
  Tensor result = Tensor::scalar(total, grad);
  if (grad) {
    record([x, result]() mutable {
      if (!result.has_grad()) return;
      const double g = result.grad()[0];
      for (double& d : x.mutable_grad()) d += g;
    });
  }
  return result;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  const bool grad = tracking({&x});
  Tensor result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), grad);
  if (grad) {
    record([x, result]() mutable {
      if (!result.has_grad()) return;
      auto dy = result.grad();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    });
  }
  return result;
}

Tensor swap_middle_axes(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("swap_middle_axes: need rank 4, got " + shape_string(x.shape()));
  const std::size_t A = x.dim(0), B = x.dim(1), C = x.dim(2), D = x.dim(3);
  std::vector<double> out(x.numel());
  const double* src = x.data().data();
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        std::copy_n(src + ((a * B + b) * C + c) * D, D, out.data() + ((a * C + c) * B + b) * D);
  const bool grad = tracking({&x});
  Tensor result({A, C, B, D}, std::move(out), grad);
  if (grad) {
    record([x, result, A, B, C, D]() mutable {
      if (!result.has_grad()) return;
      const double* dy = result.grad().data();
      double* dx = x.mutable_grad().data();
      for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c) {
            const double* from = dy + ((a * C + c) * B + b) * D;
            double* to = dx + ((a * B + b) * C + c) * D;
            for (std::size_t d = 0; d < D; ++d) to[d] += from[d];
          }
    });
  }
  return result;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_string(first));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  bool grad = false;
  for (const Tensor& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != first.size()) throw DimensionError("concat: rank mismatch " + shape_string(probe) + " vs " + shape_string(first));
    probe[axis] = first[axis];
    if (probe != first) throw DimensionError("concat: shapes " + shape_string(p.shape()) + " and " + shape_string(first) + " disagree off-axis");
    out_shape[axis] += p.shape()[axis];
    widths.push_back(p.shape()[axis] * inner);
    grad = grad || tracking({&p});
  }
  const std::size_t row = out_shape[axis] * inner;
  std::vector<double> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t idx = 0; idx < parts.size(); ++idx) {
    const double* src = parts[idx].data().data();
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(src + o * widths[idx], widths[idx], out.data() + o * row + offset);
    offset += widths[idx];
  }
  Tensor result(out_shape, std::move(out), grad);
  if (grad) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    record([inputs, result, widths, outer, row]() mutable {
      if (!result.has_grad()) return;
      const double* dy = result.grad().data();
      std::size_t off = 0;
      for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
        if (inputs[idx].requires_grad()) {
          double* dx = inputs[idx].mutable_grad().data();
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < widths[idx]; ++j) dx[o * widths[idx] + j] += dy[o * row + off + j];
        }
        off += widths[idx];
      }
    });
  }
  return result;
}

std::vector<Tensor> split(const Tensor& x, std::span<const std::size_t> sizes, std::size_t axis) {
  const Shape& shape = x.shape();
  if (axis >= shape.size()) throw DimensionError("split: axis out of range for " + shape_string(shape));
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  if (total != shape[axis]) {
    throw DimensionError("split: sizes sum to " + std::to_string(total) + " but axis has " + std::to_string(shape[axis]) +
                         " in " + shape_string(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t row = shape[axis] * inner;
  std::vector<Tensor> outs;
  std::size_t offset = 0;
  for (std::size_t s : sizes) {
    const std::size_t width = s * inner;
    Shape out_shape = shape;
    out_shape[axis] = s;
    std::vector<double> out(outer * width);
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(x.data().data() + o * row + offset, width, out.data() + o * width);
    const bool grad = tracking({&x});
    Tensor piece(out_shape, std::move(out), grad);
    if (grad) {
      record([x, piece, outer, row, offset, width]() mutable {
        if (!piece.has_grad()) return;
        const double* dy = piece.grad().data();
        double* dx = x.mutable_grad().data();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < width; ++j) dx[o * row + offset + j] += dy[o * width + j];
      });
    }
    outs.push_back(std::move(piece));
    offset += width;
  }
  return outs;
}

Tensor gelu(const Tensor& x) {
  // tanh form, evaluated as x * sigmoid(2u) with u = sqrt(2/pi) (x + 0.044715 x^3)
  constexpr double k = 0.79788456080286535588;
  constexpr double c = 0.044715;
  const std::size_t n = x.numel();
  const double* xv = x.data().data();
  std::vector<double> sig(n), out(n);
  for (std::size_t i = 0; i < n; ++i) {
    sig[i] = 1.0 / (1.0 + std::exp(-2.0 * k * (xv[i] + c * xv[i] * xv[i] * xv[i])));
    out[i] = xv[i] * sig[i];
  }
  const bool grad = tracking({&x});
  Tensor result(x.shape(), std::move(out), grad);
  if (grad) {
    record([x, result, sig = std::move(sig), n]() mutable {
      if (!result.has_grad()) return;
      const double* xv = x.data().data();
      const double* dy = result.grad().data();
      double* dx = x.mutable_grad().data();
      // d/dx [x s(z)] = s + x s (1 - s) dz/dx, z = 2k (x + c x^3)
      for (std::size_t i = 0; i < n; ++i) {
        const double s = sig[i];
        dx[i] += dy[i] * (s + xv[i] * s * (1.0 - s) * (2.0 * k * (1.0 + 3.0 * c * xv[i] * xv[i])));
      }
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double epsilon) {
  const std::size_t d = last_dim(x);
  if (x.rank() == 0 || d < 2 || gain.numel() != d || bias.numel() != d || gain.rank() != 1 || bias.rank() != 1) {
    throw DimensionError("layer_norm: input " + shape_string(x.shape()) + " with gain " + shape_string(gain.shape()) +
                         " and bias " + shape_string(bias.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> normed(x.numel());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.numel());
  const double* src = x.data().data();
  const double* g = gain.data().data();
  const double* b = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = src + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + epsilon);
    inv_std[r] = rstd;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mu) * rstd;
      normed[r * d + j] = xh;
      out[r * d + j] = g[j] * xh + b[j];
    }
  }
  const bool grad = tracking({&x, &gain, &bias});
  Tensor result(x.shape(), std::move(out), grad);
  if (grad) {
    record([x, gain, bias, result, normed = std::move(normed), inv_std = std::move(inv_std), rows, d]() mutable {
      if (!result.has_grad()) return;
      const double* dy = result.grad().data();
      if (gain.requires_grad()) {
        auto dg = gain.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) dg[j] += dy[r * d + j] * normed[r * d + j];
      }
      if (bias.requires_grad()) {
        auto db = bias.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) db[j] += dy[r * d + j];
      }
      if (x.requires_grad()) {
        auto dx = x.mutable_grad();
        const double* g = gain.data().data();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dy[r * d + j] * g[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * normed[r * d + j];
          }
          mean_dxh *= inv_d;
          mean_dxh_xh *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dy[r * d + j] * g[j];
            dx[r * d + j] += inv_std[r] * (dxh - mean_dxh - normed[r * d + j] * mean_dxh_xh);
          }
        }
      }
    });
  }
  return result;
}

Tensor softmax_rows(const Tensor& x, const RowMask& mask) {
  const std::size_t n = last_dim(x);
  const std::size_t rows = x.numel() / n;
  std::size_t block = 0;
  if (!mask.empty()) {
    if (mask.width != n || mask.keep.size() % n != 0 || rows % mask.rows() != 0) {
      throw DimensionError("softmax_rows: mask of " + std::to_string(mask.rows()) + " x " + std::to_string(mask.width) +
                           " does not tile input " + shape_string(x.shape()));
    }
    block = rows / mask.rows();
  }
  std::vector<double> out(x.numel(), 0.0);
  const double* src = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::uint8_t* keep = mask.empty() ? nullptr : mask.keep.data() + (r / block) * n;
    const double* row = src + r * n;
    double* y = out.data() + r * n;
    double hi = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (keep && !keep[j]) continue;
      any = true;
      hi = std::max(hi, row[j]);
    }
    if (!any) throw DegenerateRowError("softmax_rows: row " + std::to_string(r) + " is fully masked");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = keep && !keep[j] ? 0.0 : std::exp(row[j] - hi);
      total += y[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
  }
  const bool grad = tracking({&x});
  Tensor result(x.shape(), std::move(out), grad);
  if (grad) {
    record([x, result, rows, n]() mutable {
      if (!result.has_grad()) return;
      const double* dy = result.grad().data();
      const double* y = result.data().data();
      double* dx = x.mutable_grad().data();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += y[r * n + j] * dy[r * n + j];
        for (std::size_t j = 0; j < n; ++j) dx[r * n + j] += y[r * n + j] * (dy[r * n + j] - dot);
      }
    });
  }
  return result;
}

Tensor kl_divergence_rows(const Tensor& p, const Tensor& q, std::span<const std::uint8_t> row_mask) {
  require_same_shape(p, q, "kl_divergence_rows");
  const std::size_t n = last_dim(p);
  const std::size_t rows = p.numel() / n;
  if (!row_mask.empty() && row_mask.size() != rows) {
    throw DimensionError("kl_divergence_rows: row mask has " + std::to_string(row_mask.size()) + " flags for " +
                         std::to_string(rows) + " rows of " + shape_string(p.shape()));
  }
  std::size_t selected = 0;
  double total = 0.0;
  const double* pv = p.data().data();
  const double* qv = q.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    if (!row_mask.empty() && !row_mask[r]) continue;
    ++selected;
    double row_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double pi = pv[r * n + j];
      if (pi <= 0.0) continue;
      row_sum += pi * (std::log(pi) - std::log(std::max(qv[r * n + j], kKlEpsilon)));
    }
    total += row_sum;
  }
  if (selected == 0) throw ContractError("kl_divergence_rows: no rows selected");
  const double inv_rows = 1.0 / static_cast<double>(selected);
  const bool grad = tracking({&p, &q});
  Tensor result = Tensor::scalar(total * inv_rows, grad);
  if (grad) {
    std::vector<std::uint8_t> rows_kept(row_mask.begin(), row_mask.end());
    record([p, q, result, rows_kept = std::move(rows_kept), rows, n, inv_rows]() mutable {
      if (!result.has_grad()) return;
      const double g = result.grad()[0] * inv_rows;
      const double* pv = p.data().data();
      const double* qv = q.data().data();
      for (std::size_t r = 0; r < rows; ++r) {
        if (!rows_kept.empty() && !rows_kept[r]) continue;
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t i = r * n + j;
          if (pv[i] <= 0.0) continue;
          if (q.requires_grad() && qv[i] > kKlEpsilon) q.mutable_grad()[i] -= g * pv[i] / qv[i];
          if (p.requires_grad()) {
            p.mutable_grad()[i] += g * (std::log(pv[i]) - std::log(std::max(qv[i], kKlEpsilon)) + 1.0);
          }
        }
      }
    });
  }
  return result;
}

Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("cross_entropy_loss: logits " + shape_string(logits.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t rows = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  std::vector<double> probs(logits.numel());
  double total = 0.0;
  const double* z = logits.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw IndexError("cross_entropy_loss: label " + std::to_string(labels[r]) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    const double* row = z + r * classes;
    const double hi = *std::max_element(row, row + classes);
    double s = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      probs[r * classes + j] = std::exp(row[j] - hi);
      s += probs[r * classes + j];
    }
    for (std::size_t j = 0; j < classes; ++j) probs[r * classes + j] /= s;
    total += hi + std::log(s) - row[labels[r]];
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  const bool grad = tracking({&logits});
  Tensor result = Tensor::scalar(total * inv_rows, grad);
  if (grad) {
    std::vector<int> targets(labels.begin(), labels.end());
    record([logits, result, probs = std::move(probs), targets = std::move(targets), rows, classes, inv_rows]() mutable {
      if (!result.has_grad()) return;
      const double g = result.grad()[0] * inv_rows;
      auto dz = logits.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < classes; ++j) {
          const double onehot = static_cast<int>(j) == targets[r] ? 1.0 : 0.0;
          dz[r * classes + j] += g * (probs[r * classes + j] - onehot);
        }
      }
    });
  }
  return result;
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw DimensionError("embedding_lookup: table must be a matrix, got " + shape_string(table.shape()));
  if (ids.empty()) throw DimensionError("embedding_lookup: no ids");
  const std::size_t rows = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw IndexError("embedding_lookup: id " + std::to_string(ids[i]) + " outside [0, " + std::to_string(rows) + ")");
    }
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  const bool grad = tracking({&table});
  Tensor result({ids.size(), d}, std::move(out), grad);
  if (grad) {
    std::vector<int> index(ids.begin(), ids.end());
    record([table, result, index = std::move(index), d]() mutable {
      if (!result.has_grad()) return;
      const double* dy = result.grad().data();
      double* dt = table.mutable_grad().data();
      for (std::size_t i = 0; i < index.size(); ++i) {
        double* row = dt + static_cast<std::size_t>(index[i]) * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += dy[i * d + j];
      }
    });
  }
  return result;
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ContractError("dropout: rate must be below 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> factor(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    factor[i] = u < rate ? 0.0 : keep_scale;
    out[i] = x.data()[i] * factor[i];
  }
  const bool grad = tracking({&x});
  Tensor result(x.shape(), std::move(out), grad);
  if (grad) {
    record([x, result, factor = std::move(factor)]() mutable {
      if (!result.has_grad()) return;
      auto dy = result.grad();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor[i];
    });
  }
  return result;
}

}  // namespace mitkd::num
