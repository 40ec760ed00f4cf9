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

#include "mitkd/mtl/mtl.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mitkd/corpus/masking.hpp"
#include "mitkd/errors.hpp"
#include "mitkd/numerics/adam.hpp"
#include "mitkd/numerics/ops.hpp"
#include "mitkd/numerics/tape.hpp"

namespace mitkd::mtl {

const char* to_string(LossScaling scaling) { return scaling == LossScaling::kNone ? "none" : "log2-classes"; }

LossScaling loss_scaling_from_string(const std::string& name) {
  if (name == "log2-classes") return LossScaling::kLog2Classes;
  if (name == "none") return LossScaling::kNone;
  throw ConfigError("unknown loss scaling '" + name + "' (expected log2-classes or none)");
}

void MtlConfig::validate() const {
  if (tasks.empty()) throw ConfigError("mtl: task list is empty");
  if (!(sampling_temperature > 0.0)) throw ConfigError("mtl: sampling_temperature must be positive");
  if (steps == 0) throw ConfigError("mtl: steps must be at least 1");
  if (batch_size == 0) throw ConfigError("mtl: batch_size must be at least 1");
  if (!(peak_lr >= 0.0)) throw ConfigError("mtl: peak_lr must be non-negative");
}

void PretrainConfig::validate() const {
  if (steps == 0) throw ConfigError("pretrain: steps must be at least 1");
  if (batch_size == 0) throw ConfigError("pretrain: batch_size must be at least 1");
  if (!(peak_lr >= 0.0)) throw ConfigError("pretrain: peak_lr must be non-negative");
}

std::vector<double> task_sampling_distribution(std::span<const std::size_t> train_sizes, double tau) {
  if (!(tau > 0.0)) throw ConfigError("sampling temperature must be positive");
  if (train_sizes.empty()) throw num::ContractError("task_sampling_distribution: no tasks");
  std::vector<double> p;
  p.reserve(train_sizes.size());
  double total = 0.0;
  for (std::size_t n : train_sizes) {
    if (n == 0) throw num::ContractError("task_sampling_distribution: every task needs at least one example");
    p.push_back(std::pow(static_cast<double>(n), 1.0 / tau));
    total += p.back();
  }
  for (double& v : p) v /= total;
  return p;
}

num::Tensor scale_loss(const num::Tensor& loss, int n_classes) {
  if (n_classes < 2) throw num::ContractError("scale_loss: n_classes must be at least 2");
  if (n_classes == 2) return loss;
  return num::scale(loss, 1.0 / std::log2(static_cast<double>(n_classes)));
}

std::size_t sample_task(std::span<const double> distribution, num::Rng& rng) {
  const double u = num::uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < distribution.size(); ++i) {
    acc += distribution[i];
    if (u < acc) return i;
  }
  return distribution.size() - 1;
}

void attach_task_heads(model::EncoderModel& model, std::span<const corpus::TaskSpec> tasks, std::uint64_t seed) {
  for (const auto& spec : tasks) {
    model.add_classification_head(spec.id, spec.n_classes, num::derive_seed(seed, "head:" + spec.id));
  }
}

namespace {

// One optimizer step on whatever the loss closure touches.
template <typename LossFn>
double train_step(model::EncoderModel& m, num::AdamState& state, double lr, LossFn&& loss_fn) {
  m.zero_grad();
  num::Tape tape;
  num::Tensor loss;
  {
    num::Tape::Scope scope(tape);
    loss = loss_fn();
  }
  tape.backward(loss);
  num::adam_step(m.all_parameters(), state, lr);
  return loss.item();
}

}  // namespace

model::EncoderModel mtl_train(const model::EncoderModel& teacher, const MtlConfig& config,
                              std::span<const TrainingTask> data, std::uint64_t seed,
                              const model::StepObserver& observer) {
  config.validate();
  model::EncoderModel m = teacher.clone();

  std::vector<const corpus::DatasetSplit*> splits;
  std::vector<std::size_t> sizes;
  for (const auto& spec : config.tasks) {
    if (!m.has_head(spec.id)) throw ConfigError("mtl: task '" + spec.id + "' has no head on the teacher");
    const auto it = std::find_if(data.begin(), data.end(),
                                 [&](const TrainingTask& t) { return t.spec && t.spec->id == spec.id; });
    if (it == data.end() || it->train == nullptr || it->train->examples.empty()) {
      throw ConfigError("mtl: task '" + spec.id + "' has no training examples");
    }
    splits.push_back(it->train);
    sizes.push_back(it->train->size());
  }
  const auto distribution = task_sampling_distribution(sizes, config.sampling_temperature);

  std::vector<model::EpochCursor> cursors;
  for (std::size_t t = 0; t < splits.size(); ++t) {
    cursors.emplace_back(splits[t]->size(), num::derive_seed(seed, "mtl-order", t));
  }
  num::Rng sampler(num::derive_seed(seed, "mtl-sampler"));
  num::Rng dropout_rng(num::derive_seed(seed, "mtl-dropout"));
  num::AdamState state;
  model::ForwardOptions options;
  options.dropout_rng = &dropout_rng;

  std::vector<int> labels;
  for (std::size_t step = 0; step < config.steps; ++step) {
    const std::size_t t = sample_task(distribution, sampler);
    const auto& spec = config.tasks[t];
    const auto idx = cursors[t].next(config.batch_size);
    const model::Batch batch = model::collate(splits[t]->examples, idx, &labels);
    const double lr = num::lr_schedule(step, config.steps, config.peak_lr);
    const double loss = train_step(m, state, lr, [&] {
      num::Tensor l = num::cross_entropy_loss(model::classification_logits(m, spec.id, batch, options), labels);
      return config.loss_scaling == LossScaling::kLog2Classes ? scale_loss(l, spec.n_classes) : l;
    });
    if (observer) observer({"mtl", step, {{"loss", loss}, {"lr", lr}, {"task", static_cast<double>(t)}}});
  }
  m.zero_grad();
  return m;
}

model::EncoderModel single_task_train(const model::EncoderModel& teacher, const corpus::TaskSpec& spec,
                                      const corpus::DatasetSplit& train, const SingleTaskHparams& hparams,
                                      std::uint64_t seed, const model::StepObserver& observer) {
  MtlConfig config;
  config.tasks = {spec};
  config.loss_scaling = LossScaling::kNone;
  config.steps = hparams.steps;
  config.batch_size = hparams.batch_size;
  config.peak_lr = hparams.peak_lr;
  const TrainingTask task{&spec, &train};
  return mtl_train(teacher, config, std::span<const TrainingTask>(&task, 1), seed, observer);
}

model::EncoderModel pretrain_mlm(const model::ModelConfig& config, std::span<const corpus::Sequence> corpus,
                                 const PretrainConfig& pretrain, std::uint64_t seed,
                                 const model::StepObserver& observer) {
  pretrain.validate();
  if (corpus.empty()) throw ConfigError("pretrain: corpus is empty");
  model::EncoderModel m = model::init_model(config, num::derive_seed(seed, "init"));
  m.add_mlm_head();
  const corpus::Vocab vocab{config.vocab_size - corpus::kNumSpecialTokens};
  model::EpochCursor cursor(corpus.size(), num::derive_seed(seed, "pretrain-order"));
  num::Rng dropout_rng(num::derive_seed(seed, "pretrain-dropout"));
  num::AdamState state;
  model::ForwardOptions options;
  options.dropout_rng = &dropout_rng;

  std::vector<corpus::Sequence> seqs;
  for (std::size_t step = 0; step < pretrain.steps; ++step) {
    seqs.clear();
    for (std::size_t i : cursor.next(pretrain.batch_size)) seqs.push_back(corpus[i]);
    model::MaskedBatch batch = corpus::make_masked_batch(seqs, num::derive_seed(seed, "pretrain-mask", step), vocab);
    if (batch.positions.empty()) continue;
    const double lr = num::lr_schedule(step, pretrain.steps, pretrain.peak_lr);
    const double loss = train_step(m, state, lr, [&] { return model::mlm_loss(m, batch, options); });
    if (observer) observer({"pretrain", step, {{"loss", loss}, {"lr", lr}}});
  }
  m.zero_grad();
  return m;
}

double mlm_probe_loss(const model::EncoderModel& m, std::span<const corpus::Sequence> sequences, std::uint64_t seed,
                      std::size_t batch_size) {
  num::Tape::NoGrad no_grad;
  const corpus::Vocab vocab{m.config().vocab_size - corpus::kNumSpecialTokens};
  double weighted = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0, b = 0; start < sequences.size(); start += batch_size, ++b) {
    const auto chunk = sequences.subspan(start, std::min(batch_size, sequences.size() - start));
    const auto batch = corpus::make_masked_batch(chunk, num::derive_seed(seed, "probe-mask", b), vocab);
    if (batch.positions.empty()) continue;
    weighted += model::mlm_loss(m, batch).item() * static_cast<double>(batch.positions.size());
    count += batch.positions.size();
  }
  if (count == 0) throw num::ContractError("mlm_probe_loss: no masked positions in the probe set");
  return weighted / static_cast<double>(count);
}

const char* to_string(TeacherKind kind) {
  switch (kind) {
    case TeacherKind::kVanilla: return "vanilla";
    case TeacherKind::kSingleTask: return "single-task";
    case TeacherKind::kMultiTask: return "mtl";
  }
  return "unknown";
}

TeacherKind teacher_kind_from_string(const std::string& name) {
  if (name == "vanilla") return TeacherKind::kVanilla;
  if (name == "single-task") return TeacherKind::kSingleTask;
  if (name == "mtl") return TeacherKind::kMultiTask;
  throw ConfigError("unknown teacher variant '" + name + "' (expected vanilla, single-task or mtl)");
}

}  // namespace mitkd::mtl
