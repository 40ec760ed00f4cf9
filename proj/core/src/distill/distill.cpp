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

#include "mitkd/distill/distill.hpp"

#include <algorithm>
#include <cmath>

#include "mitkd/errors.hpp"
#include "mitkd/numerics/adam.hpp"
#include "mitkd/numerics/ops.hpp"
#include "mitkd/numerics/tape.hpp"

namespace mitkd::distill {

const char* to_string(RelationType type) {
  switch (type) {
    case RelationType::kQQ: return "QQ";
    case RelationType::kKK: return "KK";
    case RelationType::kVV: return "VV";
  }
  return "??";
}

RelationType relation_type_from_string(const std::string& name) {
  if (name == "QQ") return RelationType::kQQ;
  if (name == "KK") return RelationType::kKK;
  if (name == "VV") return RelationType::kVV;
  throw ConfigError("unknown relation type '" + name + "' (expected QQ, KK or VV)");
}

int resolve_layer(int layer, int num_layers) {
  const int resolved = layer < 0 ? num_layers + layer : layer;
  if (resolved < 0 || resolved >= num_layers) {
    throw ConfigError("layer index " + std::to_string(layer) + " is invalid for a " + std::to_string(num_layers) +
                      "-layer model");
  }
  return resolved;
}

void DistillConfig::validate(const model::ModelConfig& teacher, const model::ModelConfig& student) const {
  if (relation_heads < 1) throw ConfigError("distill: relation_heads must be positive");
  if (teacher.hidden_size % relation_heads != 0) {
    throw ConfigError("distill: relation_heads " + std::to_string(relation_heads) + " does not divide teacher hidden_size " +
                      std::to_string(teacher.hidden_size));
  }
  if (student.hidden_size % relation_heads != 0) {
    throw ConfigError("distill: relation_heads " + std::to_string(relation_heads) + " does not divide student hidden_size " +
                      std::to_string(student.hidden_size));
  }
  resolve_layer(teacher_layer, teacher.num_layers);
  resolve_layer(student_layer, student.num_layers);
  if (relation_types.empty()) throw ConfigError("distill: at least one relation type is required");
  for (std::size_t i = 0; i < relation_types.size(); ++i) {
    for (std::size_t j = i + 1; j < relation_types.size(); ++j) {
      if (relation_types[i] == relation_types[j]) throw ConfigError("distill: duplicate relation type");
    }
  }
  if (steps == 0) throw ConfigError("distill: steps must be at least 1");
  if (batch_size == 0) throw ConfigError("distill: batch_size must be at least 1");
  if (probe_size == 0) throw ConfigError("distill: probe_size must be at least 1");
  if (!(peak_lr >= 0.0)) throw ConfigError("distill: peak_lr must be non-negative");
}

namespace {

constexpr RelationType kAllTypes[] = {RelationType::kQQ, RelationType::kKK, RelationType::kVV};

const num::Tensor& projection(const model::LayerInternals& internals, RelationType type) {
  switch (type) {
    case RelationType::kQQ: return internals.queries;
    case RelationType::kKK: return internals.keys;
    case RelationType::kVV: return internals.values;
  }
  return internals.queries;
}

}  // namespace

RelationSet extract_relations(const model::LayerInternals& internals, int relation_heads,
                              std::span<const std::uint8_t> mask, std::span<const RelationType> types) {
  if (types.empty()) types = kAllTypes;
  const num::Tensor& q = internals.queries;
  if (!q.defined() || q.rank() != 4) throw num::DimensionError("extract_relations: internals must be rank-4 tensors");
  const std::size_t B = q.dim(0);
  const std::size_t L = q.dim(2);
  const std::size_t hidden = q.dim(1) * q.dim(3);
  if (relation_heads < 1 || hidden % static_cast<std::size_t>(relation_heads) != 0) {
    throw ConfigError("relation_heads " + std::to_string(relation_heads) + " does not divide hidden size " +
                      std::to_string(hidden));
  }
  if (mask.size() != B * L) {
    throw num::DimensionError("extract_relations: mask has " + std::to_string(mask.size()) + " entries for " +
                              std::to_string(B) + " x " + std::to_string(L) + " positions");
  }
  const auto A = static_cast<std::size_t>(relation_heads);
  const std::size_t width = hidden / A;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(width));

  RelationSet out;
  out.relation_heads = relation_heads;
  out.batch_size = B;
  out.seq_len = L;
  out.mask.assign(mask.begin(), mask.end());
  const num::RowMask key_mask{out.mask, L};
  for (RelationType type : types) {
    const num::Tensor& x = projection(internals, type);
    if (x.shape() != q.shape()) throw num::DimensionError("extract_relations: Q, K and V shapes differ");
    // [B, heads, L, dh] -> [B, L, hidden] -> [B, A, L, width]
    const num::Tensor merged = num::swap_middle_axes(x);
    const num::Tensor split = num::swap_middle_axes(num::reshape(merged, {B, L, A, width}));
    const num::Tensor logits = num::scale(num::matmul_transposed(split, split), inv_sqrt);
    out.relations[type] = num::softmax_rows(logits, key_mask);
  }
  return out;
}

num::Tensor relation_kl(const RelationSet& teacher, const RelationSet& student) {
  if (teacher.relation_heads != student.relation_heads || teacher.seq_len != student.seq_len ||
      teacher.batch_size != student.batch_size) {
    throw num::ContractError("relation_kl: teacher and student relation sets differ in heads, batch or length");
  }
  if (teacher.mask != student.mask) throw num::ContractError("relation_kl: teacher and student masks differ");
  if (teacher.relations.size() != student.relations.size()) {
    throw num::ContractError("relation_kl: teacher and student carry different relation types");
  }
  const std::size_t B = teacher.batch_size;
  const std::size_t L = teacher.seq_len;
  const auto A = static_cast<std::size_t>(teacher.relation_heads);
  std::vector<std::uint8_t> rows(B * A * L);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t a = 0; a < A; ++a) {
      std::copy_n(teacher.mask.begin() + static_cast<std::ptrdiff_t>(b * L), L,
                  rows.begin() + static_cast<std::ptrdiff_t>((b * A + a) * L));
    }
  }
  num::Tensor total;
  for (const auto& [type, p] : teacher.relations) {
    const auto it = student.relations.find(type);
    if (it == student.relations.end()) throw num::ContractError("relation_kl: student lacks relation type");
    const num::Tensor term = num::kl_divergence_rows(p, it->second, rows);
    total = total.defined() ? num::add(total, term) : term;
  }
  return total;
}

namespace {

RelationSet relations_of(const model::EncoderModel& m, const model::Batch& batch, int layer,
                         const DistillConfig& config) {
  const model::LayerInternals internals = model::layer_projections(m, batch, layer);
  return extract_relations(internals, config.relation_heads, batch.mask, config.relation_types);
}

RelationSet teacher_relations(const model::EncoderModel& teacher, const model::Batch& batch, int layer,
                              const DistillConfig& config) {
  num::Tape::NoGrad no_grad;
  return relations_of(teacher, batch, layer, config);
}

}  // namespace

double relation_loss(const model::EncoderModel& teacher, const model::EncoderModel& student, const model::Batch& batch,
                     const DistillConfig& config) {
  config.validate(teacher.config(), student.config());
  const int t_layer = resolve_layer(config.teacher_layer, teacher.config().num_layers);
  const int s_layer = resolve_layer(config.student_layer, student.config().num_layers);
  num::Tape::NoGrad no_grad;
  return relation_kl(relations_of(teacher, batch, t_layer, config), relations_of(student, batch, s_layer, config))
      .item();
}

DistillResult distill_from(const model::EncoderModel& teacher, const model::EncoderModel& initial_student,
                           std::span<const corpus::Sequence> corpus, const DistillConfig& config, std::uint64_t seed,
                           const model::StepObserver& observer) {
  config.validate(teacher.config(), initial_student.config());
  if (corpus.size() < config.batch_size) {
    throw ConfigError("distill: corpus holds " + std::to_string(corpus.size()) + " sequences, fewer than one batch of " +
                      std::to_string(config.batch_size));
  }
  const int t_layer = resolve_layer(config.teacher_layer, teacher.config().num_layers);
  const int s_layer = resolve_layer(config.student_layer, initial_student.config().num_layers);

  DistillResult result{initial_student.clone(), 0.0, 0.0, {}};
  model::EncoderModel& student = result.student;
  student.remove_heads();

  const std::vector<corpus::Sequence> probe_seqs(corpus.begin(),
                                                 corpus.begin() + static_cast<std::ptrdiff_t>(
                                                                      std::min(config.probe_size, corpus.size())));
  const model::Batch probe = model::make_batch(probe_seqs);
  result.initial_probe_loss = relation_loss(teacher, student, probe, config);

  model::EpochCursor cursor(corpus.size(), num::derive_seed(seed, "distill-order"));
  num::AdamState state;
  result.step_losses.reserve(config.steps);

  std::vector<corpus::Sequence> seqs;
  for (std::size_t step = 0; step < config.steps; ++step) {
    seqs.clear();
    for (std::size_t i : cursor.next(config.batch_size)) seqs.push_back(corpus[i]);
    const model::Batch batch = model::make_batch(seqs);
    const RelationSet target = teacher_relations(teacher, batch, t_layer, config);
    const double lr = num::lr_schedule(step, config.steps, config.peak_lr);

    student.zero_grad();
    num::Tape tape;
    num::Tensor loss;
    {
      num::Tape::Scope scope(tape);
      loss = relation_kl(target, relations_of(student, batch, s_layer, config));
    }
    tape.backward(loss);
    num::adam_step(student.parameters(), state, lr);
    result.step_losses.push_back(loss.item());
    if (observer) observer({"distill", step, {{"loss", loss.item()}, {"lr", lr}}});
  }
  student.zero_grad();
  result.final_probe_loss = relation_loss(teacher, student, probe, config);
  return result;
}

DistillResult distill(const mtl::TeacherVariant& teacher, const model::ModelConfig& student_config,
                      std::span<const corpus::Sequence> corpus, const DistillConfig& config, std::uint64_t seed,
                      const model::StepObserver& observer) {
  config.validate(teacher.model.config(), student_config);
  const model::EncoderModel student = model::init_model(student_config, num::derive_seed(seed, "student-init"));
  return distill_from(teacher.model, student, corpus, config, seed, observer);
}

}  // namespace mitkd::distill
