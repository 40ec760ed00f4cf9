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

#include "mitkd/model/encoder.hpp"

#include <cmath>

#include "mitkd/errors.hpp"
#include "mitkd/numerics/ops.hpp"
#include "mitkd/numerics/tape.hpp"

namespace mitkd::model {
namespace {

using num::Shape;

struct ParamSpec {
  std::string name;
  Shape shape;
  enum class Init { kNormal, kZero, kOne } init;
};

std::vector<ParamSpec> parameter_layout(const ModelConfig& c) {
  const auto h = static_cast<std::size_t>(c.hidden_size);
  const auto f = static_cast<std::size_t>(c.ffn_size);
  using I = ParamSpec::Init;
  std::vector<ParamSpec> specs;
  specs.push_back({"embeddings.token", {static_cast<std::size_t>(c.vocab_size), h}, I::kNormal});
  specs.push_back({"embeddings.position", {static_cast<std::size_t>(c.max_seq_len), h}, I::kNormal});
  for (int l = 0; l < c.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    specs.push_back({p + "attn_norm.gain", {h}, I::kOne});
    specs.push_back({p + "attn_norm.bias", {h}, I::kZero});
    for (const char* proj : {"query", "key", "value", "output"}) {
      specs.push_back({p + "attn." + proj + ".weight", {h, h}, I::kNormal});
      specs.push_back({p + "attn." + proj + ".bias", {h}, I::kZero});
    }
    specs.push_back({p + "ffn_norm.gain", {h}, I::kOne});
    specs.push_back({p + "ffn_norm.bias", {h}, I::kZero});
    specs.push_back({p + "ffn.up.weight", {h, f}, I::kNormal});
    specs.push_back({p + "ffn.up.bias", {f}, I::kZero});
    specs.push_back({p + "ffn.down.weight", {f, h}, I::kNormal});
    specs.push_back({p + "ffn.down.bias", {h}, I::kZero});
  }
  specs.push_back({"final_norm.gain", {h}, I::kOne});
  specs.push_back({"final_norm.bias", {h}, I::kZero});
  return specs;
}

std::string head_prefix(const std::string& name) { return "heads." + name + "."; }

// Parameter lookups on the hot path go through this cache of per-layer handles.
struct LayerParams {
  Tensor attn_norm_gain, attn_norm_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ffn_norm_gain, ffn_norm_bias;
  Tensor w_up, b_up, w_down, b_down;
};

LayerParams layer_params(const EncoderModel& m, int l) {
  const std::string p = "layers." + std::to_string(l) + ".";
  auto get = [&](const std::string& n) { return m.parameter(p + n); };
  return {get("attn_norm.gain"), get("attn_norm.bias"), get("attn.query.weight"), get("attn.query.bias"),
          get("attn.key.weight"),  get("attn.key.bias"),  get("attn.value.weight"), get("attn.value.bias"),
          get("attn.output.weight"), get("attn.output.bias"), get("ffn_norm.gain"), get("ffn_norm.bias"),
          get("ffn.up.weight"), get("ffn.up.bias"), get("ffn.down.weight"), get("ffn.down.bias")};
}

Tensor maybe_dropout(const Tensor& x, const ModelConfig& c, const ForwardOptions& options) {
  if (options.dropout_rng == nullptr || c.dropout_rate <= 0.0) return x;
  return num::dropout(x, c.dropout_rate, *options.dropout_rng);
}

std::vector<int> cls_rows(const Batch& batch) {
  std::vector<int> rows(batch.batch_size);
  for (std::size_t b = 0; b < batch.batch_size; ++b) rows[b] = static_cast<int>(b * batch.seq_len);
  return rows;
}

// What encode() has to produce. The default is every final hidden state.
struct EncodePlan {
  // Compute the last layer for the CLS query of each sequence only; encode() then returns [batch x hidden].
  bool cls_only = false;
  // Stop once this layer's projections exist; they are appended to the internals and encode() returns nothing.
  int stop_layer = -1;
};

// Final hidden states as a [batch*seq x hidden] matrix (or [batch x hidden] under cls_only).
Tensor encode(const EncoderModel& model, const Batch& batch, const ForwardOptions& options,
              std::vector<LayerInternals>* internals, const EncodePlan& plan = {}) {
  const ModelConfig& c = model.config();
  const std::size_t B = batch.batch_size;
  const std::size_t L = batch.seq_len;
  const auto H = static_cast<std::size_t>(c.hidden_size);
  const auto heads = static_cast<std::size_t>(c.num_heads);
  const std::size_t dh = H / heads;
  if (L > static_cast<std::size_t>(c.max_seq_len)) {
    throw LengthError("sequence length " + std::to_string(L) + " exceeds max_seq_len " + std::to_string(c.max_seq_len));
  }
  if (B == 0 || L == 0 || batch.token_ids.size() != B * L || batch.mask.size() != B * L) {
    throw num::DimensionError("forward: batch of " + std::to_string(B) + " x " + std::to_string(L) +
                              " with inconsistent token/mask buffers");
  }
  std::vector<int> positions(B * L);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i % L);

  Tensor x = num::add(num::embedding_lookup(model.parameter("embeddings.token"), batch.token_ids),
                      num::embedding_lookup(model.parameter("embeddings.position"), positions));
  x = maybe_dropout(x, c, options);

  num::RowMask key_mask{batch.mask, L};
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  auto to_heads = [&](const Tensor& t, std::size_t rows) {
    return num::swap_middle_axes(num::reshape(t, {B, rows, heads, dh}));
  };

  for (int l = 0; l < c.num_layers; ++l) {
    const LayerParams p = layer_params(model, l);
    const bool last = l + 1 == c.num_layers;
    const bool cls_only = plan.cls_only && last && internals == nullptr;
    const Tensor h = num::layer_norm(x, p.attn_norm_gain, p.attn_norm_bias);
    const Tensor k = to_heads(num::linear(h, p.wk, p.bk), L);
    const Tensor v = to_heads(num::linear(h, p.wv, p.bv), L);
    if (cls_only) {
      const auto rows = cls_rows(batch);
      const Tensor q = to_heads(num::linear(num::embedding_lookup(h, rows), p.wq, p.bq), 1);
      const Tensor probs = num::softmax_rows(num::scale(num::matmul_transposed(q, k), inv_sqrt_dh), key_mask);
      const Tensor context = num::reshape(num::swap_middle_axes(num::matmul(probs, v)), {B, H});
      Tensor xc = num::add(num::embedding_lookup(x, rows), maybe_dropout(num::linear(context, p.wo, p.bo), c, options));
      const Tensor h2 = num::layer_norm(xc, p.ffn_norm_gain, p.ffn_norm_bias);
      const Tensor down = num::linear(num::gelu(num::linear(h2, p.w_up, p.b_up)), p.w_down, p.b_down);
      xc = num::add(xc, maybe_dropout(down, c, options));
      return num::layer_norm(xc, model.parameter("final_norm.gain"), model.parameter("final_norm.bias"));
    }
    const Tensor q = to_heads(num::linear(h, p.wq, p.bq), L);
    if (l == plan.stop_layer) {
      if (internals != nullptr) internals->push_back({l, q, k, v, Tensor()});
      return Tensor();
    }
    const Tensor scores = num::scale(num::matmul_transposed(q, k), inv_sqrt_dh);
    const Tensor probs = num::softmax_rows(scores, key_mask);
    const Tensor context = num::reshape(num::swap_middle_axes(num::matmul(probs, v)), {B * L, H});
    const Tensor attn_out = num::linear(context, p.wo, p.bo);
    x = num::add(x, maybe_dropout(attn_out, c, options));

    const Tensor h2 = num::layer_norm(x, p.ffn_norm_gain, p.ffn_norm_bias);
    const Tensor up = num::gelu(num::linear(h2, p.w_up, p.b_up));
    const Tensor down = num::linear(up, p.w_down, p.b_down);
    x = num::add(x, maybe_dropout(down, c, options));

    if (internals != nullptr) internals->push_back({l, q, k, v, probs});
  }
  return num::layer_norm(x, model.parameter("final_norm.gain"), model.parameter("final_norm.bias"));
}

}  // namespace

const char* to_string(HeadKind kind) {
  return kind == HeadKind::kSequenceClassification ? "sequence-classification" : "masked-token-prediction";
}

HeadKind head_kind_from_string(const std::string& name) {
  if (name == "sequence-classification") return HeadKind::kSequenceClassification;
  if (name == "masked-token-prediction") return HeadKind::kMaskedTokenPrediction;
  throw LookupError("unknown head kind '" + name + "'");
}

EncoderModel::EncoderModel(ModelConfig config) : config_(config) {
  config_.validate();
  for (ParamSpec& spec : parameter_layout(config_)) {
    const double fill = spec.init == ParamSpec::Init::kOne ? 1.0 : 0.0;
    index_[spec.name] = params_.size();
    params_.push_back({spec.name, Tensor::full(spec.shape, fill, true)});
  }
}

const Tensor& EncoderModel::parameter(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("no parameter named '" + name + "'");
  return params_[it->second].tensor;
}

const TaskHead& EncoderModel::head(const std::string& name) const {
  auto it = heads_.find(name);
  if (it == heads_.end()) throw LookupError("model has no head named '" + name + "'");
  return it->second;
}

void EncoderModel::add_classification_head(const std::string& name, int num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("classification head '" + name + "' needs at least 2 classes");
  const auto h = static_cast<std::size_t>(config_.hidden_size);
  const auto n = static_cast<std::size_t>(num_classes);
  num::Rng rng(seed);
  std::normal_distribution<double> normal(0.0, kInitStddev);
  std::vector<double> w(h * n);
  for (double& v : w) v = normal(rng);
  TaskHead head;
  head.kind = HeadKind::kSequenceClassification;
  head.output_dim = num_classes;
  head.weight = Tensor({h, n}, std::move(w), true);
  head.bias = Tensor::zeros({n}, true);
  heads_[name] = std::move(head);
}

void EncoderModel::add_mlm_head() {
  TaskHead head;
  head.kind = HeadKind::kMaskedTokenPrediction;
  head.output_dim = config_.vocab_size;
  head.bias = Tensor::zeros({static_cast<std::size_t>(config_.vocab_size)}, true);
  heads_[kMlmHeadName] = std::move(head);
}

void EncoderModel::set_head(const std::string& name, TaskHead head) { heads_[name] = std::move(head); }

std::vector<NamedTensor> EncoderModel::head_parameters(const std::string& name) const {
  const TaskHead& h = head(name);
  std::vector<NamedTensor> out;
  if (h.weight.defined()) out.push_back({head_prefix(name) + "weight", h.weight});
  out.push_back({head_prefix(name) + "bias", h.bias});
  return out;
}

std::vector<NamedTensor> EncoderModel::all_parameters() const {
  std::vector<NamedTensor> out = params_;
  for (const auto& [name, head] : heads_) {
    for (NamedTensor& p : head_parameters(name)) out.push_back(std::move(p));
  }
  return out;
}

void EncoderModel::zero_grad() const {
  for (const NamedTensor& p : all_parameters()) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

EncoderModel EncoderModel::clone() const {
  EncoderModel copy(config_);
  for (std::size_t i = 0; i < params_.size(); ++i) copy.params_[i].tensor = params_[i].tensor.clone();
  for (const auto& [name, head] : heads_) {
    TaskHead h = head;
    if (head.weight.defined()) h.weight = head.weight.clone();
    h.bias = head.bias.clone();
    copy.heads_[name] = std::move(h);
  }
  return copy;
}

EncoderModel init_model(const ModelConfig& config, std::uint64_t seed) {
  EncoderModel model(config);
  num::Rng rng(seed);
  std::normal_distribution<double> normal(0.0, kInitStddev);
  const auto layout = parameter_layout(config);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].init != ParamSpec::Init::kNormal) continue;
    Tensor t = model.parameters()[i].tensor;
    for (double& v : t.mutable_data()) v = normal(rng);
  }
  return model;
}

ForwardResult forward(const EncoderModel& model, const Batch& batch, const ForwardOptions& options) {
  ForwardResult result;
  Tensor flat = encode(model, batch, options, options.capture_internals ? &result.internals : nullptr);
  result.hidden = num::reshape(flat, {batch.batch_size, batch.seq_len, static_cast<std::size_t>(model.config().hidden_size)});
  return result;
}

LayerInternals layer_projections(const EncoderModel& model, const Batch& batch, int layer,
                                 const ForwardOptions& options) {
  if (layer < 0 || layer >= model.config().num_layers) {
    throw LookupError("layer " + std::to_string(layer) + " outside a " + std::to_string(model.config().num_layers) +
                      "-layer model");
  }
  std::vector<LayerInternals> internals;
  EncodePlan plan;
  plan.stop_layer = layer;
  encode(model, batch, options, &internals, plan);
  return std::move(internals.back());
}

Tensor mlm_loss(const EncoderModel& model, const MaskedBatch& batch, const ForwardOptions& options) {
  if (batch.positions.empty()) throw num::ContractError("mlm_loss: batch has no masked positions");
  if (batch.positions.size() != batch.targets.size()) {
    throw num::DimensionError("mlm_loss: " + std::to_string(batch.positions.size()) + " positions for " +
                              std::to_string(batch.targets.size()) + " targets");
  }
  const TaskHead& head = model.head(kMlmHeadName);
  Tensor hidden = encode(model, batch.inputs, options, nullptr);
  std::vector<int> rows(batch.positions.begin(), batch.positions.end());
  Tensor gathered = num::embedding_lookup(hidden, rows);
  Tensor logits = num::add_bias(num::matmul_transposed(gathered, model.parameter("embeddings.token")), head.bias);
  return num::cross_entropy_loss(logits, batch.targets);
}

Tensor classification_logits(const EncoderModel& model, const std::string& head_name, const Batch& batch,
                             const ForwardOptions& options) {
  const TaskHead& head = model.head(head_name);
  if (head.kind != HeadKind::kSequenceClassification) {
    throw LookupError("head '" + head_name + "' is not a classification head");
  }
  EncodePlan plan;
  plan.cls_only = true;
  Tensor cls = encode(model, batch, options, nullptr, plan);
  return num::linear(cls, head.weight, head.bias);
}

Tensor classify(const EncoderModel& model, const std::string& head_name, const Batch& batch) {
  num::Tape::NoGrad no_grad;
  return num::softmax_rows(classification_logits(model, head_name, batch));
}

}  // namespace mitkd::model
