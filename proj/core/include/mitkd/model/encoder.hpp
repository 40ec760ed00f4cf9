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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mitkd/model/batch.hpp"
#include "mitkd/model/config.hpp"
#include "mitkd/numerics/random.hpp"
#include "mitkd/numerics/tensor.hpp"

namespace mitkd::model {

using num::NamedTensor;
using num::Tensor;

enum class HeadKind { kSequenceClassification, kMaskedTokenPrediction };

const char* to_string(HeadKind kind);
HeadKind head_kind_from_string(const std::string& name);

/// Classification heads read the CLS position; the MLM head reuses the token
/// embedding as its output projection and owns only a bias.
struct TaskHead {
  HeadKind kind = HeadKind::kSequenceClassification;
  int output_dim = 2;
  Tensor weight;  // [hidden x output_dim]; undefined for the MLM head
  Tensor bias;    // [output_dim]
};

/// Post-projection, pre-attention tensors of one layer, each [batch x heads x seq x head_dim].
/// These are the tensors the layer's attention consumed, not copies.
struct LayerInternals {
  int layer_index = 0;
  Tensor queries;
  Tensor keys;
  Tensor values;
  Tensor attention;  // [batch x heads x seq x seq] probabilities used by the layer
};

struct ForwardOptions {
  bool capture_internals = false;
  /// Training-mode dropout. Disabled when rng is null.
  num::Rng* dropout_rng = nullptr;
};

struct ForwardResult {
  Tensor hidden;  // [batch x seq x hidden]
  std::vector<LayerInternals> internals;
};

class EncoderModel {
 public:
  /// Zero-filled parameters with unit norm gains. init_model() draws real weights.
  explicit EncoderModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  /// Encoder parameters in canonical order.
  const std::vector<NamedTensor>& parameters() const { return params_; }
  const Tensor& parameter(const std::string& name) const;

  const std::map<std::string, TaskHead>& heads() const { return heads_; }
  bool has_head(const std::string& name) const { return heads_.count(name) > 0; }
  const TaskHead& head(const std::string& name) const;
  void add_classification_head(const std::string& name, int num_classes, std::uint64_t seed);
  void add_mlm_head();
  void set_head(const std::string& name, TaskHead head);
  void remove_heads() { heads_.clear(); }

  std::vector<NamedTensor> head_parameters(const std::string& name) const;
  /// Encoder parameters followed by every head's parameters (heads in name order).
  std::vector<NamedTensor> all_parameters() const;
  void zero_grad() const;

  /// Deep copy; the copy shares no storage with this model.
  EncoderModel clone() const;

 private:
  ModelConfig config_;
  std::vector<NamedTensor> params_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, TaskHead> heads_;
};

inline constexpr double kInitStddev = 0.02;
inline constexpr const char* kMlmHeadName = "mlm";

/// Weights ~ Normal(0, 0.02), biases 0, norm gains 1. Fully determined by (config, seed).
EncoderModel init_model(const ModelConfig& config, std::uint64_t seed);

/// Pre-norm transformer encoder. Attention logits at PAD keys are excluded from the softmax.
ForwardResult forward(const EncoderModel& model, const Batch& batch, const ForwardOptions& options = {});

/// Queries, keys and values of one layer, computing nothing past them. `attention` is left undefined.
/// Matches the corresponding entry of forward(..., capture_internals) exactly.
LayerInternals layer_projections(const EncoderModel& model, const Batch& batch, int layer,
                                 const ForwardOptions& options = {});

/// Mean cross-entropy over masked positions only. Requires the model to carry the MLM head.
Tensor mlm_loss(const EncoderModel& model, const MaskedBatch& batch, const ForwardOptions& options = {});

/// Head logits [batch x classes] from the CLS position's final hidden state.
/// The last layer is evaluated for the CLS query alone.
Tensor classification_logits(const EncoderModel& model, const std::string& head_name, const Batch& batch,
                             const ForwardOptions& options = {});

/// Class probabilities [batch x classes], computed without recording gradients.
Tensor classify(const EncoderModel& model, const std::string& head_name, const Batch& batch);

}  // namespace mitkd::model
