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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mitkd/corpus/task.hpp"
#include "mitkd/model/encoder.hpp"
#include "mitkd/model/training.hpp"
#include "mitkd/numerics/tensor.hpp"

namespace mitkd::mtl {

enum class LossScaling { kLog2Classes, kNone };

const char* to_string(LossScaling scaling);
LossScaling loss_scaling_from_string(const std::string& name);

struct MtlConfig {
  std::vector<corpus::TaskSpec> tasks;
  double sampling_temperature = 1.0;
  LossScaling loss_scaling = LossScaling::kLog2Classes;
  std::size_t steps = 3000;
  std::size_t batch_size = 16;
  double peak_lr = 5e-4;

  /// Throws ConfigError for an empty task list, tau <= 0, zero steps or batch size.
  void validate() const;
};

/// Budget for single-task finetuning of a teacher.
struct SingleTaskHparams {
  std::size_t steps = 3000;
  std::size_t batch_size = 16;
  double peak_lr = 5e-4;
};

struct PretrainConfig {
  std::size_t steps = 4000;
  std::size_t batch_size = 32;
  double peak_lr = 1e-3;

  void validate() const;
};

/// p_i proportional to n_i^(1/tau). Throws ConfigError for tau <= 0 and ContractError for a zero size.
std::vector<double> task_sampling_distribution(std::span<const std::size_t> train_sizes, double tau);

/// loss / log2(n_classes). Throws ContractError for n_classes < 2.
num::Tensor scale_loss(const num::Tensor& loss, int n_classes);

/// Index into `distribution` chosen by inverse-CDF on one uniform draw.
std::size_t sample_task(std::span<const double> distribution, num::Rng& rng);

/// Attaches a fresh classification head named after each task id.
void attach_task_heads(model::EncoderModel& model, std::span<const corpus::TaskSpec> tasks, std::uint64_t seed);

/// Task id together with its training split. The split must outlive the call it is passed to.
struct TrainingTask {
  const corpus::TaskSpec* spec = nullptr;
  const corpus::DatasetSplit* train = nullptr;
};

/// Multi-task finetuning with one task per step; see MtlConfig. Each step updates the encoder
/// and the sampled task's head only. Heads are kept on the returned model.
/// Throws ConfigError when a configured task has no head or no training split.
model::EncoderModel mtl_train(const model::EncoderModel& teacher, const MtlConfig& config,
                              std::span<const TrainingTask> data, std::uint64_t seed,
                              const model::StepObserver& observer = {});

/// mtl_train restricted to `spec` without loss scaling.
model::EncoderModel single_task_train(const model::EncoderModel& teacher, const corpus::TaskSpec& spec,
                                      const corpus::DatasetSplit& train, const SingleTaskHparams& hparams,
                                      std::uint64_t seed, const model::StepObserver& observer = {});

/// Masked-LM pretraining from a fresh init drawn from `seed`. The returned model carries the MLM head.
model::EncoderModel pretrain_mlm(const model::ModelConfig& config, std::span<const corpus::Sequence> corpus,
                                 const PretrainConfig& pretrain, std::uint64_t seed,
                                 const model::StepObserver& observer = {});

/// Mean MLM loss over the sequences with masking fixed by `seed`; no gradients, dropout off.
double mlm_probe_loss(const model::EncoderModel& model, std::span<const corpus::Sequence> sequences,
                      std::uint64_t seed, std::size_t batch_size = 64);

enum class TeacherKind { kVanilla, kSingleTask, kMultiTask };

const char* to_string(TeacherKind kind);
TeacherKind teacher_kind_from_string(const std::string& name);

/// A prepared teacher and how it was made. `label` distinguishes variants that share a kind
/// (the larger vanilla teacher, for instance).
struct TeacherVariant {
  TeacherKind kind = TeacherKind::kVanilla;
  std::string label;
  model::EncoderModel model;
  /// Task ids the teacher was finetuned on; empty for vanilla teachers.
  std::vector<std::string> trained_tasks;
};

}  // namespace mitkd::mtl
