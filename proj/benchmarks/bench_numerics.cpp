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

#include <benchmark/benchmark.h>

#include <random>

#include "mitkd/numerics/ops.hpp"
#include "mitkd/numerics/tape.hpp"

namespace {

using mitkd::num::Tensor;

Tensor random_tensor(mitkd::num::Shape shape, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(mitkd::num::shape_numel(shape));
  for (double& x : v) x = normal(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

void BM_MatmulForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor a = random_tensor({512, n}, 1);
  Tensor b = random_tensor({n, 4 * n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(mitkd::num::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * 512 * static_cast<std::int64_t>(n * 4 * n));
}
BENCHMARK(BM_MatmulForward)->Arg(32)->Arg(64)->Arg(96);

void BM_SoftmaxRows(benchmark::State& state) {
  Tensor x = random_tensor({16, 4, 32, 32}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(mitkd::num::softmax_rows(x));
}
BENCHMARK(BM_SoftmaxRows);

void BM_LayerNormBackward(benchmark::State& state) {
  Tensor x = random_tensor({512, 64}, 4, true);
  Tensor g = Tensor::full({64}, 1.0, true);
  Tensor b = Tensor::zeros({64}, true);
  for (auto _ : state) {
    mitkd::num::Tape tape;
    mitkd::num::Tape::Scope scope(tape);
    Tensor loss = mitkd::num::sum(mitkd::num::layer_norm(x, g, b));
    tape.backward(loss);
  }
}
BENCHMARK(BM_LayerNormBackward);

}  // namespace
