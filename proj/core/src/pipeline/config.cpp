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

#include "mitkd/pipeline/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <openssl/evp.h>

#include "mitkd/errors.hpp"

namespace mitkd::pipeline {

using nlohmann::json;

namespace {

// Reads an object's fields and rejects any key it was never asked about.
class ObjectReader {
 public:
  ObjectReader(const json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
    if (!doc_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = doc_.find(key);
    if (it == doc_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

json to_json(const mtl::PretrainConfig& c) {
  return {{"steps", c.steps}, {"batch_size", c.batch_size}, {"peak_lr", c.peak_lr}};
}

json to_json(const distill::DistillConfig& c) {
  json types = json::array();
  for (auto t : c.relation_types) types.push_back(distill::to_string(t));
  return {{"relation_heads", c.relation_heads}, {"teacher_layer", c.teacher_layer},
          {"student_layer", c.student_layer},   {"relation_types", types},
          {"steps", c.steps},                   {"batch_size", c.batch_size},
          {"peak_lr", c.peak_lr},               {"probe_size", c.probe_size}};
}

distill::DistillConfig distill_from_json(const json& doc, distill::DistillConfig base, const std::string& where) {
  ObjectReader r(doc, where);
  r.get("relation_heads", base.relation_heads);
  r.get("teacher_layer", base.teacher_layer);
  r.get("student_layer", base.student_layer);
  if (const json* types = r.child("relation_types")) {
    if (!types->is_array()) throw ConfigError(where + ".relation_types: expected an array");
    base.relation_types.clear();
    for (const auto& t : *types) base.relation_types.push_back(distill::relation_type_from_string(t.get<std::string>()));
  }
  r.get("steps", base.steps);
  r.get("batch_size", base.batch_size);
  r.get("peak_lr", base.peak_lr);
  r.get("probe_size", base.probe_size);
  r.finish();
  return base;
}

json suite_to_json(const corpus::TaskSuite& suite) {
  json in = json::array();
  json out = json::array();
  for (const auto& s : suite.in_family) in.push_back(pipeline::to_json(s));
  for (const auto& s : suite.out_family) out.push_back(pipeline::to_json(s));
  return {{"in_family", in}, {"out_family", out}};
}

template <typename T>
json vector_json(const std::vector<T>& xs) {
  json out = json::array();
  for (const auto& x : xs) out.push_back(x);
  return out;
}

}  // namespace

json to_json(const model::ModelConfig& c) {
  return {{"num_layers", c.num_layers}, {"hidden_size", c.hidden_size}, {"num_heads", c.num_heads},
          {"ffn_size", c.ffn_size},     {"max_seq_len", c.max_seq_len}, {"vocab_size", c.vocab_size},
          {"dropout_rate", c.dropout_rate}};
}

model::ModelConfig model_config_from_json(const json& doc) {
  model::ModelConfig c;
  ObjectReader r(doc, "model");
  r.get("num_layers", c.num_layers);
  r.get("hidden_size", c.hidden_size);
  r.get("num_heads", c.num_heads);
  r.get("ffn_size", c.ffn_size);
  r.get("max_seq_len", c.max_seq_len);
  r.get("vocab_size", c.vocab_size);
  r.get("dropout_rate", c.dropout_rate);
  r.finish();
  return c;
}

json to_json(const corpus::TaskSpec& s) {
  json doc = {{"id", s.id},
              {"family", corpus::to_string(s.family)},
              {"n_classes", s.n_classes},
              {"domain_tag", s.domain_tag},
              {"seed", s.seed}};
  switch (s.family) {
    case corpus::TaskFamily::kPatternPresence: doc["pattern"] = s.pattern; break;
    case corpus::TaskFamily::kSymbolParity: doc["symbol"] = s.symbol; break;
    case corpus::TaskFamily::kLexiconMajority: doc["lexicons"] = s.lexicons; break;
    case corpus::TaskFamily::kPairSubsequence:
      doc["first"] = s.first;
      doc["second"] = s.second;
      break;
  }
  return doc;
}

corpus::TaskSpec task_spec_from_json(const json& doc) {
  corpus::TaskSpec s;
  ObjectReader r(doc, "task");
  r.get("id", s.id);
  std::string family;
  r.get("family", family);
  s.family = corpus::task_family_from_string(family);
  r.get("n_classes", s.n_classes);
  r.get("domain_tag", s.domain_tag);
  r.get("seed", s.seed);
  r.get("pattern", s.pattern);
  r.get("symbol", s.symbol);
  r.get("lexicons", s.lexicons);
  r.get("first", s.first);
  r.get("second", s.second);
  r.finish();
  return s;
}

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig c;
  ObjectReader r(doc, "config");
  r.get("seed", c.seed);
  r.get("output_dir", c.output_dir);
  r.get("log_every", c.log_every);
  r.get("variants", c.variants);
  if (const json* j = r.child("corpus")) {
    ObjectReader cr(*j, "corpus");
    cr.get("num_sequences", c.corpus.num_sequences);
    cr.get("seq_len", c.corpus.seq_len);
    cr.get("content_symbols", c.corpus.content_symbols);
    cr.finish();
  }
  if (const json* j = r.child("tasks")) {
    ObjectReader tr(*j, "tasks");
    tr.get("train_size", c.tasks.train_size);
    tr.get("dev_size", c.tasks.dev_size);
    tr.get("seq_len", c.tasks.seq_len);
    if (const json* shape = tr.child("shape")) {
      ObjectReader sr(*shape, "tasks.shape");
      sr.get("in_family_per_family", c.tasks.shape.in_family_per_family);
      sr.get("out_family_per_family", c.tasks.shape.out_family_per_family);
      sr.get("lexicon_size", c.tasks.shape.lexicon_size);
      sr.finish();
    }
    if (const json* suite = tr.child("suite")) {
      ObjectReader sr(*suite, "tasks.suite");
      corpus::TaskSuite explicit_suite;
      for (const char* group : {"in_family", "out_family"}) {
        const json* list = sr.child(group);
        if (list == nullptr || !list->is_array()) throw ConfigError(std::string("tasks.suite.") + group + ": expected an array");
        auto& target = std::string(group) == "in_family" ? explicit_suite.in_family : explicit_suite.out_family;
        for (const auto& t : *list) target.push_back(task_spec_from_json(t));
      }
      sr.finish();
      c.tasks.explicit_suite = std::move(explicit_suite);
    }
    tr.finish();
  }
  if (const json* j = r.child("teacher")) c.teacher = model_config_from_json(*j);
  if (const json* j = r.child("student")) c.student = model_config_from_json(*j);
  if (const json* j = r.child("large_teacher")) {
    if (j->is_null()) {
      c.large_teacher.reset();
    } else {
      c.large_teacher = model_config_from_json(*j);
    }
  }
  if (const json* j = r.child("pretrain")) {
    ObjectReader pr(*j, "pretrain");
    pr.get("steps", c.pretrain.steps);
    pr.get("batch_size", c.pretrain.batch_size);
    pr.get("peak_lr", c.pretrain.peak_lr);
    pr.finish();
  }
  if (const json* j = r.child("mtl")) {
    ObjectReader mr(*j, "mtl");
    mr.get("sampling_temperature", c.mtl.sampling_temperature);
    std::string scaling = mtl::to_string(c.mtl.loss_scaling);
    mr.get("loss_scaling", scaling);
    c.mtl.loss_scaling = mtl::loss_scaling_from_string(scaling);
    mr.get("steps", c.mtl.steps);
    mr.get("batch_size", c.mtl.batch_size);
    mr.get("peak_lr", c.mtl.peak_lr);
    mr.finish();
  }
  if (const json* j = r.child("single_task")) {
    ObjectReader sr(*j, "single_task");
    sr.get("task", c.single_task.task);
    sr.get("steps", c.single_task.hparams.steps);
    sr.get("batch_size", c.single_task.hparams.batch_size);
    sr.get("peak_lr", c.single_task.hparams.peak_lr);
    sr.finish();
  }
  if (const json* j = r.child("distill")) c.distill = distill_from_json(*j, c.distill, "distill");
  if (const json* j = r.child("distill_overrides")) {
    if (!j->is_object()) throw ConfigError("distill_overrides: expected an object");
    for (const auto& [variant, override_doc] : j->items()) {
      c.distill_overrides[variant] = distill_from_json(override_doc, c.distill, "distill_overrides." + variant);
    }
  }
  if (const json* j = r.child("finetune")) {
    ObjectReader fr(*j, "finetune");
    fr.get("epochs", c.finetune.epochs);
    fr.get("batch_sizes", c.finetune.batch_sizes);
    fr.get("learning_rates", c.finetune.learning_rates);
    fr.finish();
  }
  if (const json* j = r.child("protocol")) {
    ObjectReader pr(*j, "protocol");
    pr.get("seeds", c.protocol.seeds);
    pr.get("low_resource_fractions", c.protocol.low_resource_fractions);
    pr.get("low_resource_tasks", c.protocol.low_resource_tasks);
    pr.finish();
  }
  r.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingPrerequisite("config file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

json config_to_json(const ExperimentConfig& c) {
  json doc;
  doc["seed"] = c.seed;
  doc["output_dir"] = c.output_dir;
  doc["log_every"] = c.log_every;
  doc["variants"] = c.variants;
  doc["corpus"] = {{"num_sequences", c.corpus.num_sequences},
                   {"seq_len", c.corpus.seq_len},
                   {"content_symbols", c.corpus.content_symbols}};
  json tasks = {{"train_size", c.tasks.train_size},
                {"dev_size", c.tasks.dev_size},
                {"seq_len", c.tasks.seq_len},
                {"shape",
                 {{"in_family_per_family", c.tasks.shape.in_family_per_family},
                  {"out_family_per_family", c.tasks.shape.out_family_per_family},
                  {"lexicon_size", c.tasks.shape.lexicon_size}}}};
  if (c.tasks.explicit_suite) tasks["suite"] = suite_to_json(*c.tasks.explicit_suite);
  doc["tasks"] = tasks;
  doc["teacher"] = to_json(c.teacher);
  doc["student"] = to_json(c.student);
  doc["large_teacher"] = c.large_teacher ? to_json(*c.large_teacher) : json(nullptr);
  doc["pretrain"] = to_json(c.pretrain);
  doc["mtl"] = {{"sampling_temperature", c.mtl.sampling_temperature},
                {"loss_scaling", mtl::to_string(c.mtl.loss_scaling)},
                {"steps", c.mtl.steps},
                {"batch_size", c.mtl.batch_size},
                {"peak_lr", c.mtl.peak_lr}};
  doc["single_task"] = {{"task", c.single_task.task},
                        {"steps", c.single_task.hparams.steps},
                        {"batch_size", c.single_task.hparams.batch_size},
                        {"peak_lr", c.single_task.hparams.peak_lr}};
  doc["distill"] = to_json(c.distill);
  json overrides = json::object();
  for (const auto& [variant, d] : c.distill_overrides) overrides[variant] = to_json(d);
  doc["distill_overrides"] = overrides;
  doc["finetune"] = {{"epochs", c.finetune.epochs},
                     {"batch_sizes", c.finetune.batch_sizes},
                     {"learning_rates", c.finetune.learning_rates}};
  doc["protocol"] = {{"seeds", c.protocol.seeds},
                     {"low_resource_fractions", c.protocol.low_resource_fractions},
                     {"low_resource_tasks", c.protocol.low_resource_tasks}};
  return doc;
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string canonical = config_to_json(config).dump();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(canonical.data(), canonical.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

bool ExperimentConfig::has_variant(const std::string& variant) const {
  return std::find(variants.begin(), variants.end(), variant) != variants.end();
}

const distill::DistillConfig& ExperimentConfig::distill_for(const std::string& variant) const {
  const auto it = distill_overrides.find(variant);
  return it == distill_overrides.end() ? distill : it->second;
}

const model::ModelConfig& ExperimentConfig::teacher_for(const std::string& variant) const {
  if (variant == kVariantVanillaLarge) {
    if (!large_teacher) throw ConfigError("variant 'vanilla-large' needs a large_teacher model config");
    return *large_teacher;
  }
  return teacher;
}

void ExperimentConfig::validate() const {
  const auto fail = [](const std::string& what) { throw ConfigError(what); };
  teacher.validate();
  student.validate();
  if (large_teacher) large_teacher->validate();
  const corpus::Vocab v = vocab();
  if (v.content_symbols < 1) fail("corpus.content_symbols must be positive");
  for (const auto* m : {&teacher, &student}) {
    if (m->vocab_size != v.size()) {
      fail("model vocab_size " + std::to_string(m->vocab_size) + " does not match the corpus vocabulary of " +
           std::to_string(v.size()));
    }
  }
  if (large_teacher && large_teacher->vocab_size != v.size()) fail("large_teacher vocab_size does not match the corpus");
  if (corpus.num_sequences == 0) fail("corpus.num_sequences must be positive");
  if (corpus.seq_len < 3) fail("corpus.seq_len must be at least 3");
  for (const auto* m : {&teacher, &student}) {
    if (corpus.seq_len > static_cast<std::size_t>(m->max_seq_len) ||
        tasks.seq_len > static_cast<std::size_t>(m->max_seq_len)) {
      fail("sequence lengths must not exceed max_seq_len " + std::to_string(m->max_seq_len));
    }
  }
  if (tasks.seq_len < 3) fail("tasks.seq_len must be at least 3");
  if (tasks.train_size == 0 || tasks.dev_size == 0) fail("tasks.train_size and tasks.dev_size must be positive");
  if (tasks.explicit_suite) tasks.explicit_suite->validate(v);
  pretrain.validate();
  {
    mtl::MtlConfig schedule = mtl;
    schedule.tasks = {corpus::TaskSpec{}};
    schedule.validate();
  }
  if (single_task.hparams.steps == 0 || single_task.hparams.batch_size == 0) {
    fail("single_task: steps and batch_size must be positive");
  }
  if (variants.empty()) fail("variants must not be empty");
  std::set<std::string> seen;
  for (const auto& variant : variants) {
    if (variant != kVariantVanilla && variant != kVariantSingleTask && variant != kVariantMtl &&
        variant != kVariantVanillaLarge) {
      fail("unknown variant '" + variant + "'");
    }
    if (!seen.insert(variant).second) fail("duplicate variant '" + variant + "'");
    distill_for(variant).validate(teacher_for(variant), student);
  }
  for (const auto& [variant, d] : distill_overrides) {
    if (!has_variant(variant)) fail("distill_overrides names unknown variant '" + variant + "'");
  }
  if (corpus.num_sequences < distill.batch_size) fail("corpus holds fewer sequences than one distillation batch");
  finetune.validate();
  if (protocol.seeds.empty()) fail("protocol.seeds must not be empty");
  std::set<std::uint64_t> seed_set(protocol.seeds.begin(), protocol.seeds.end());
  if (seed_set.size() != protocol.seeds.size()) fail("protocol.seeds must be distinct");
  for (double f : protocol.low_resource_fractions) {
    if (!(f > 0.0 && f < 1.0)) fail("protocol.low_resource_fractions must lie in (0, 1)");
  }
  if (log_every == 0) fail("log_every must be positive");
  if (tasks.explicit_suite) {
    const auto& suite = *tasks.explicit_suite;
    if (suite.in_family.empty()) fail("the task suite needs at least one in-family task");
    if (!single_task.task.empty()) {
      const bool found = std::any_of(suite.in_family.begin(), suite.in_family.end(),
                                     [&](const corpus::TaskSpec& s) { return s.id == single_task.task; });
      if (!found) fail("single_task.task '" + single_task.task + "' is not an in-family task");
    }
    for (const auto& id : protocol.low_resource_tasks) suite.find(id);
  }
}

}  // namespace mitkd::pipeline
