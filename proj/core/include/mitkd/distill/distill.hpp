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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mitkd/corpus/vocab.hpp"
#include "mitkd/model/encoder.hpp"
#include "mitkd/model/training.hpp"
#include "mitkd/mtl/mtl.hpp"
#include "mitkd/numerics/tensor.hpp"

namespace mitkd::distill {

enum class RelationType { kQQ, kKK, kVV };

const char* to_string(RelationType type);
RelationType relation_type_from_string(const std::string& name);

struct DistillConfig {
  int relation_heads = 8;
  /// Negative indices count from the end: -1 is the last layer.
  int teacher_layer = -1;
  int student_layer = -1;
  std::vector<RelationType> relation_types{RelationType::kQQ, RelationType::kKK, RelationType::kVV};
  std::size_t steps = 6000;
  std::size_t batch_size = 16;
  double peak_lr = 1e-3;
  /// Held-fixed corpus sample on which the loss is measured before and after training.
  std::size_t probe_size = 64;

  /// Throws ConfigError naming the violated constraint.
  void validate(const model::ModelConfig& teacher, const model::ModelConfig& student) const;
};

/// Resolves a possibly negative layer index against `num_layers`. Throws ConfigError when out of range.
int resolve_layer(int layer, int num_layers);

/// Relation distributions of one layer for a batch.
struct RelationSet {
  int relation_heads = 0;
  std::size_t batch_size = 0;
  std::size_t seq_len = 0;
  /// [batch x relation_heads x seq x seq], rows stochastic over unmasked keys.
  std::map<RelationType, num::Tensor> relations;
  /// [batch x seq], 1 for real tokens.
  std::vector<std::uint8_t> mask;
};

/// Merges the layer's attention heads, re-splits into `relation_heads` heads of width
/// hidden / relation_heads, and takes softmax(X X^T / sqrt(width)) over unmasked keys.
/// Throws ConfigError when relation_heads does not divide the hidden size.
RelationSet extract_relations(const model::LayerInternals& internals, int relation_heads,
                              std::span<const std::uint8_t> mask,
                              std::span<const RelationType> types = {});

/// Sum over relation types of the mean KL(teacher row || student row) over relation heads and
/// unmasked query positions. The teacher side is treated as constant.
/// Throws ContractError when the two sets disagree in heads, length, types or mask.
num::Tensor relation_kl(const RelationSet& teacher, const RelationSet& student);

/// Relation loss of `student` against `teacher` on one batch, without gradients.
double relation_loss(const model::EncoderModel& teacher, const model::EncoderModel& student, const model::Batch& batch,
                     const DistillConfig& config);

struct DistillResult {
  model::EncoderModel student;
  /// Probe loss before the first and after the last update.
  double initial_probe_loss = 0.0;
  double final_probe_loss = 0.0;
  /// Training-batch loss at every step, before that step's update.
  std::vector<double> step_losses;
};

/// Distills `teacher` into a fresh student drawn from `seed`. Neither model applies dropout,
/// and the teacher gets no gradients. Heads are not transferred. Throws ConfigError when the corpus holds
/// fewer sequences than one batch.
DistillResult distill(const mtl::TeacherVariant& teacher, const model::ModelConfig& student_config,
                      std::span<const corpus::Sequence> corpus, const DistillConfig& config, std::uint64_t seed,
                      const model::StepObserver& observer = {});

/// Same recipe starting from a given student instead of a fresh initialization.
DistillResult distill_from(const model::EncoderModel& teacher, const model::EncoderModel& initial_student,
                           std::span<const corpus::Sequence> corpus, const DistillConfig& config, std::uint64_t seed,
                           const model::StepObserver& observer = {});

}  // namespace mitkd::distill
