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

#include "mitkd/model/encoder.hpp"
#include "mitkd/numerics/ops.hpp"
#include "mitkd/numerics/tape.hpp"

namespace {

using mitkd::model::ModelConfig;

mitkd::model::Batch random_batch(std::size_t batch, std::size_t len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> sym(4, 67);
  mitkd::model::Batch b;
  b.batch_size = batch;
  b.seq_len = len;
  for (std::size_t i = 0; i < batch * len; ++i) b.token_ids.push_back(i % len == 0 ? 1 : sym(rng));
  b.mask.assign(batch * len, 1);
  return b;
}

ModelConfig config_for(int which) {
  if (which == 0) return ModelConfig::reference_student();
  if (which == 1) return ModelConfig::reference_teacher();
  return ModelConfig::reference_large_teacher();
}

void BM_EncoderForward(benchmark::State& state) {
  auto model = mitkd::model::init_model(config_for(static_cast<int>(state.range(0))), 7);
  auto batch = random_batch(16, 32, 1);
  for (auto _ : state) benchmark::DoNotOptimize(mitkd::model::forward(model, batch));
}
BENCHMARK(BM_EncoderForward)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_ClassifierTrainStep(benchmark::State& state) {
  auto model = mitkd::model::init_model(config_for(static_cast<int>(state.range(0))), 7);
  model.add_classification_head("task", 2, 3);
  auto batch = random_batch(static_cast<std::size_t>(state.range(1)), 32, 1);
  std::vector<int> labels(batch.batch_size, 1);
  mitkd::num::Rng rng(5);
  for (auto _ : state) {
    mitkd::num::Tape tape;
    mitkd::num::Tape::Scope scope(tape);
    mitkd::model::ForwardOptions opts;
    opts.dropout_rng = &rng;
    auto logits = mitkd::model::classification_logits(model, "task", batch, opts);
    auto loss = mitkd::num::cross_entropy_loss(logits, labels);
    tape.backward(loss);
    model.zero_grad();
  }
}
BENCHMARK(BM_ClassifierTrainStep)->Args({0, 16})->Args({0, 32})->Args({1, 16})->Unit(benchmark::kMillisecond);

}  // namespace
