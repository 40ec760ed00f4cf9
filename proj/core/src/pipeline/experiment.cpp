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

#include "mitkd/pipeline/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

#include "mitkd/distill/distill.hpp"
#include "mitkd/errors.hpp"
#include "mitkd/eval/eval.hpp"
#include "mitkd/model/training.hpp"
#include "mitkd/mtl/mtl.hpp"

namespace mitkd::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kProbeSequences = 512;
constexpr std::size_t kHashDirChars = 16;

corpus::TaskSuite build_suite(const ExperimentConfig& c, const corpus::MarkovSource& source) {
  if (c.tasks.explicit_suite) return *c.tasks.explicit_suite;
  return corpus::make_default_suite(source, num::derive_seed(c.seed, "suite"), c.tasks.shape);
}

fs::path output_root(const ExperimentConfig& c, const std::optional<fs::path>& override_dir) {
  if (override_dir) return *override_dir;
  if (const char* env = std::getenv(kOutputEnvVar); env != nullptr && *env != '\0') return env;
  return c.output_dir;
}

std::string seed_name(std::uint64_t seed) { return "seed-" + std::to_string(seed); }

mtl::TeacherKind kind_of(const std::string& variant) {
  if (variant == kVariantSingleTask) return mtl::TeacherKind::kSingleTask;
  if (variant == kVariantMtl) return mtl::TeacherKind::kMultiTask;
  return mtl::TeacherKind::kVanilla;
}

double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

void require(const fs::path& path, const std::string& produced_by) {
  if (!fs::exists(path)) {
    throw MissingPrerequisite("missing prerequisite " + path.string() + " (run `" + produced_by + "` first)");
  }
}

}  // namespace

Experiment::Experiment(ExperimentConfig config, std::optional<fs::path> output_override)
    : config_(std::move(config)), source_(config_.seed, config_.vocab()) {
  config_.validate();
  hash_ = config_hash(config_);
  dir_ = output_root(config_, output_override) / hash_.substr(0, kHashDirChars);
  suite_ = build_suite(config_, source_);
  suite_.validate(config_.vocab());
  if (suite_.in_family.empty()) throw ConfigError("the task suite needs at least one in-family task");
  if (config_.single_task.task.empty()) {
    config_.single_task.task = suite_.in_family.front().id;
  } else if (suite_.is_out_family(config_.single_task.task)) {
    throw ConfigError("single_task.task '" + config_.single_task.task + "' is held out (out-family)");
  } else {
    suite_.find(config_.single_task.task);
  }
  for (const auto& id : config_.protocol.low_resource_tasks) suite_.find(id);
  metrics_ = std::make_unique<JsonlWriter>(metrics_path());
}

const std::vector<corpus::Sequence>& Experiment::corpus() const {
  if (corpus_.empty()) corpus_ = corpus::generate_corpus(source_, config_.corpus.num_sequences, config_.corpus.seq_len);
  return corpus_;
}

const std::vector<corpus::TaskData>& Experiment::task_data() const {
  if (task_data_.empty()) {
    for (const auto& spec : suite_.all()) {
      task_data_.push_back(corpus::generate_task_data(source_, spec, config_.tasks.train_size, config_.tasks.dev_size,
                                                      config_.tasks.seq_len));
    }
  }
  return task_data_;
}

const corpus::TaskData& Experiment::task(const std::string& id) const {
  for (const auto& t : task_data()) {
    if (t.spec.id == id) return t;
  }
  throw LookupError("no task with id '" + id + "'");
}

std::vector<std::string> Experiment::low_resource_tasks() const {
  if (!config_.protocol.low_resource_tasks.empty()) return config_.protocol.low_resource_tasks;
  std::vector<std::string> ids{suite_.in_family.front().id};
  for (const auto& s : suite_.out_family) ids.push_back(s.id);
  return ids;
}

fs::path Experiment::pretrained_path(bool large) const {
  return dir_ / "pretrain" / (large ? "large-teacher.ckpt" : "teacher.ckpt");
}
fs::path Experiment::teacher_path(const std::string& variant) const { return dir_ / ("teacher-" + variant) / "model.ckpt"; }
fs::path Experiment::student_path(const std::string& variant, std::uint64_t seed) const {
  return dir_ / ("student-" + variant) / (seed_name(seed) + ".ckpt");
}
fs::path Experiment::distill_summary_path(const std::string& variant) const {
  return dir_ / ("student-" + variant) / "distill.json";
}
fs::path Experiment::results_path() const { return dir_ / "eval" / "run_results.jsonl"; }
fs::path Experiment::metrics_path() const { return dir_ / "metrics.jsonl"; }
fs::path Experiment::report_dir() const { return dir_ / "report"; }

void Experiment::emit_metrics(const MetricsRecord& record) { metrics_->append(to_json(record)); }

void Experiment::log(const StageOptions& options, const std::string& line) const {
  if (options.verbose) std::cerr << "[mitkd " << hash_.substr(0, 8) << "] " << line << std::endl;
}

model::StepObserver Experiment::observer(const std::string& stage, const StageOptions& options) {
  return [this, stage, options](const model::StepLog& step) {
    if (step.step % config_.log_every != 0) return;
    emit_metrics({stage, step.step, step.values, wall_clock_seconds(), hash_});
    if (options.verbose && step.step % (config_.log_every * 20) == 0) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s step %zu loss %.5f", stage.c_str(), step.step,
                    step.values.count("loss") ? step.values.at("loss") : 0.0);
      log(options, buf);
    }
  };
}

void Experiment::write_resolved_config() const {
  fs::create_directories(dir_);
  const fs::path path = dir_ / "config.json";
  json doc = config_to_json(config_);
  doc["config_hash"] = hash_;
  std::ofstream out(path);
  out << doc.dump(2) << "\n";
}

void Experiment::export_data() const {
  const fs::path data_dir = dir_ / "data";
  fs::create_directories(data_dir);
  json suite_doc = {{"in_family", json::array()}, {"out_family", json::array()}};
  for (const auto& s : suite_.in_family) suite_doc["in_family"].push_back(to_json(s));
  for (const auto& s : suite_.out_family) suite_doc["out_family"].push_back(to_json(s));
  std::ofstream(data_dir / "suite.json") << suite_doc.dump(2) << "\n";
  for (const auto& t : task_data()) {
    std::ofstream train(data_dir / (t.spec.id + ".train.tsv"));
    corpus::export_split(t.train, train);
    std::ofstream dev(data_dir / (t.spec.id + ".dev.tsv"));
    corpus::export_split(t.dev, dev);
  }
}

void Experiment::pretrain(const StageOptions& options) {
  write_resolved_config();
  export_data();
  const auto probe = source_.sample_many(num::derive_seed(config_.seed, "probe-corpus"), kProbeSequences,
                                         config_.corpus.seq_len);
  std::vector<bool> sizes{false};
  if (config_.has_variant(kVariantVanillaLarge)) sizes.push_back(true);
  for (bool large : sizes) {
    const fs::path path = pretrained_path(large);
    if (fs::exists(path) && !options.force) {
      log(options, "pretrain: " + path.string() + " exists, skipping");
      continue;
    }
    const std::string stage = large ? "pretrain-large" : "pretrain";
    const model::ModelConfig& cfg = large ? *config_.large_teacher : config_.teacher;
    const std::uint64_t seed = num::derive_seed(config_.seed, stage);
    log(options, stage + ": " + model::describe(cfg) + ", " + std::to_string(config_.pretrain.steps) + " steps");
    model::EncoderModel untrained = model::init_model(cfg, num::derive_seed(seed, "init"));
    untrained.add_mlm_head();
    const double before = mtl::mlm_probe_loss(untrained, probe, config_.seed);
    const model::EncoderModel m = mtl::pretrain_mlm(cfg, corpus(), config_.pretrain, seed, observer(stage, options));
    const double after = mtl::mlm_probe_loss(m, probe, config_.seed);
    emit_metrics({stage + "-summary", config_.pretrain.steps,
                  {{"mlm_probe_loss_initial", before}, {"mlm_probe_loss_final", after}}, wall_clock_seconds(), hash_});
    save_checkpoint(m, path,
                    {{"stage", stage}, {"mlm_probe_loss_initial", before}, {"mlm_probe_loss_final", after},
                     {"config_hash", hash_}});
    log(options, stage + ": MLM probe loss " + std::to_string(before) + " -> " + std::to_string(after));
  }
}

void Experiment::prepare_teacher(const std::string& variant, const StageOptions& options) {
  if (!config_.has_variant(variant)) throw ConfigError("variant '" + variant + "' is not enabled in this config");
  const fs::path path = teacher_path(variant);
  if (fs::exists(path) && !options.force) {
    log(options, "prepare-teacher " + variant + ": " + path.string() + " exists, skipping");
    return;
  }
  const bool large = variant == kVariantVanillaLarge;
  const fs::path source_path = pretrained_path(large);
  require(source_path, "pretrain");
  Checkpoint pretrained = load_checkpoint(source_path);
  const mtl::TeacherKind kind = kind_of(variant);
  json meta = {{"variant", variant}, {"kind", mtl::to_string(kind)}, {"config_hash", hash_}};
  const auto probe = source_.sample_many(num::derive_seed(config_.seed, "probe-corpus"), kProbeSequences,
                                         config_.corpus.seq_len);

  model::EncoderModel teacher = std::move(pretrained.model);
  std::vector<corpus::TaskSpec> trained;
  const std::uint64_t heads_seed = num::derive_seed(config_.seed, "teacher-heads");
  if (kind == mtl::TeacherKind::kSingleTask) {
    const corpus::TaskData& data = task(config_.single_task.task);
    trained = {data.spec};
    mtl::attach_task_heads(teacher, trained, heads_seed);
    log(options, "prepare-teacher single-task on " + data.spec.id);
    teacher = mtl::single_task_train(teacher, data.spec, data.train, config_.single_task.hparams,
                                     num::derive_seed(config_.seed, "single-task"), observer("single-task", options));
  } else if (kind == mtl::TeacherKind::kMultiTask) {
    mtl::MtlConfig mc = config_.mtl;
    mc.tasks = suite_.in_family;
    trained = mc.tasks;
    mtl::attach_task_heads(teacher, trained, heads_seed);
    std::vector<mtl::TrainingTask> data;
    for (const auto& spec : mc.tasks) {
      const corpus::TaskData& t = task(spec.id);
      data.push_back({&t.spec, &t.train});
    }
    log(options, "prepare-teacher mtl on " + std::to_string(mc.tasks.size()) + " in-family tasks");
    teacher = mtl::mtl_train(teacher, mc, data, num::derive_seed(config_.seed, "mtl"), observer("mtl", options));
  }

  json trained_ids = json::array();
  json accuracies = json::object();
  std::map<std::string, double> summary;
  for (const auto& spec : trained) {
    trained_ids.push_back(spec.id);
    const auto& t = task(spec.id);
    const double acc = model::accuracy(teacher, spec.id, t.dev.examples);
    accuracies[spec.id] = {{"dev_accuracy", acc}, {"majority_baseline", corpus::majority_baseline(t.dev, spec.n_classes)}};
    summary["dev_accuracy/" + spec.id] = acc;
    log(options, "teacher " + variant + " dev accuracy on " + spec.id + ": " + std::to_string(acc));
  }
  meta["trained_tasks"] = trained_ids;
  meta["dev_accuracy"] = accuracies;
  if (teacher.has_head(model::kMlmHeadName)) {
    const double probe_loss = mtl::mlm_probe_loss(teacher, probe, config_.seed);
    meta["mlm_probe_loss"] = probe_loss;
    summary["mlm_probe_loss"] = probe_loss;
  }
  emit_metrics({"teacher-" + variant, 0, summary, wall_clock_seconds(), hash_});
  save_checkpoint(teacher, path, meta);
}

void Experiment::distill(const std::string& variant, const StageOptions& options) {
  if (!config_.has_variant(variant)) throw ConfigError("variant '" + variant + "' is not enabled in this config");
  const fs::path tpath = teacher_path(variant);
  require(tpath, "prepare-teacher --variant " + variant);
  Checkpoint teacher_ck = load_checkpoint(tpath);
  mtl::TeacherVariant teacher{kind_of(variant), variant, std::move(teacher_ck.model),
                              teacher_ck.metadata.value("trained_tasks", std::vector<std::string>{})};
  const distill::DistillConfig& dc = config_.distill_for(variant);

  json per_seed = json::array();
  std::vector<double> ratios;
  for (std::uint64_t seed : config_.protocol.seeds) {
    const fs::path path = student_path(variant, seed);
    json meta;
    if (fs::exists(path) && !options.force) {
      log(options, "distill " + variant + ": " + path.string() + " exists, skipping");
      meta = load_checkpoint(path).metadata;
    } else {
      const std::string stage = "distill/" + variant + "/" + seed_name(seed);
      log(options, stage + ": " + std::to_string(dc.steps) + " steps");
      distill::DistillResult r = distill::distill(teacher, config_.student, corpus(), dc,
                                                  num::derive_seed(config_.seed, "distill", seed),
                                                  observer(stage, options));
      meta = {{"teacher_variant", variant},
              {"teacher_kind", mtl::to_string(teacher.kind)},
              {"seed", seed},
              {"steps", dc.steps},
              {"initial_probe_loss", r.initial_probe_loss},
              {"final_probe_loss", r.final_probe_loss},
              {"initial_step_loss", r.step_losses.front()},
              {"final_step_loss", r.step_losses.back()},
              {"config_hash", hash_}};
      emit_metrics({stage + "-summary", dc.steps,
                    {{"initial_probe_loss", r.initial_probe_loss}, {"final_probe_loss", r.final_probe_loss}},
                    wall_clock_seconds(), hash_});
      save_checkpoint(r.student, path, meta);
      log(options, stage + ": probe loss " + std::to_string(r.initial_probe_loss) + " -> " +
                       std::to_string(r.final_probe_loss));
    }
    per_seed.push_back(meta);
    ratios.push_back(meta.at("final_probe_loss").get<double>() / meta.at("initial_probe_loss").get<double>());
  }
  const json summary = {{"variant", variant},
                        {"config_hash", hash_},
                        {"seeds", per_seed},
                        {"median_final_to_initial_ratio", median(ratios)}};
  std::ofstream(distill_summary_path(variant)) << summary.dump(2) << "\n";
}

void Experiment::evaluate(const StageOptions& options) {
  eval::StudentMap students;
  std::map<std::string, std::vector<std::string>> teacher_tasks;
  for (const auto& variant : config_.variants) {
    const fs::path tpath = teacher_path(variant);
    require(tpath, "prepare-teacher --variant " + variant);
    for (std::uint64_t seed : config_.protocol.seeds) {
      const fs::path path = student_path(variant, seed);
      require(path, "distill --variant " + variant);
    }
  }
  for (const auto& variant : config_.variants) {
    teacher_tasks[variant] = load_checkpoint(teacher_path(variant)).metadata.value("trained_tasks", std::vector<std::string>{});
    for (std::uint64_t seed : config_.protocol.seeds) {
      Checkpoint ck = load_checkpoint(student_path(variant, seed));
      const auto recorded = ck.metadata.value("teacher_variant", std::string());
      if (recorded != variant) {
        throw IntegrityError("student " + student_path(variant, seed).string() + " records teacher variant '" + recorded +
                             "', expected '" + variant + "'");
      }
      students[variant].push_back(std::move(ck.model));
    }
  }
  eval::check_out_domain_hygiene(suite_, teacher_tasks);

  if (options.force && fs::exists(results_path())) fs::remove(results_path());
  std::map<std::string, eval::RunResult> done;
  const auto key_of = [](const eval::RunResult& r) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "|%.6f|%llu", r.fraction, static_cast<unsigned long long>(r.seed));
    return r.variant + "|" + r.task_id + buf;
  };
  if (fs::exists(results_path())) {
    for (const auto& doc : read_jsonl(results_path())) {
      if (doc.value("config_hash", std::string()) != hash_) {
        throw FormatError(results_path().string() + " holds records of another config hash");
      }
      const auto r = run_result_from_json(doc);
      done[key_of(r)] = r;
    }
  }
  JsonlWriter results(results_path());
  eval::ProtocolOptions po;
  po.seeds = config_.protocol.seeds;
  po.hparams = config_.finetune;
  po.threads = options.threads;
  po.resume = [&](const eval::RunResult& key) -> std::optional<eval::RunResult> {
    const auto it = done.find(key_of(key));
    if (it == done.end()) return std::nullopt;
    return it->second;
  };
  std::size_t completed = 0;
  po.on_result = [&](const eval::RunResult& r) {
    results.append(to_json(r, hash_));
    ++completed;
    char buf[200];
    std::snprintf(buf, sizeof buf, "evaluate %s %s @%.2f seed %llu: %.4f (%.1fs)", r.variant.c_str(), r.task_id.c_str(),
                  r.fraction, static_cast<unsigned long long>(r.seed), r.dev_accuracy, r.seconds);
    log(options, buf);
  };

  std::vector<eval::ProtocolTask> all_tasks;
  std::vector<eval::ProtocolTask> low_tasks;
  const auto low_ids = low_resource_tasks();
  for (const auto& t : task_data()) {
    const eval::ProtocolTask pt{&t.spec, &t.train, &t.dev, suite_.is_out_family(t.spec.id)};
    all_tasks.push_back(pt);
    if (std::find(low_ids.begin(), low_ids.end(), t.spec.id) != low_ids.end()) low_tasks.push_back(pt);
  }
  po.fractions = {1.0};
  eval::run_protocol(students, all_tasks, po);
  if (!config_.protocol.low_resource_fractions.empty() && !low_tasks.empty()) {
    po.fractions = config_.protocol.low_resource_fractions;
    eval::run_protocol(students, low_tasks, po);
  }
  emit_metrics({"evaluate", completed, {{"cells_computed", static_cast<double>(completed)}}, wall_clock_seconds(), hash_});
}

void Experiment::report(const StageOptions& options) const {
  require(results_path(), "evaluate");
  render_report(dir_);
  log(options, "report written to " + report_dir().string());
}

void Experiment::run_all(const StageOptions& options) {
  pretrain(options);
  for (const auto& variant : config_.variants) prepare_teacher(variant, options);
  for (const auto& variant : config_.variants) distill(variant, options);
  evaluate(options);
  report(options);
}

}  // namespace mitkd::pipeline
