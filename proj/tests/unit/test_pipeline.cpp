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

#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "scratch_dir.hpp"
#include "mitkd/corpus/markov.hpp"
#include "mitkd/errors.hpp"
#include "mitkd/pipeline/experiment.hpp"

namespace mitkd::pipeline {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::ScratchDir;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

model::EncoderModel sample_model() {
  model::EncoderModel m = model::init_model({2, 16, 2, 32, 12, 24, 0.1}, 3);
  m.add_classification_head("task-a", 3, 4);
  m.add_mlm_head();
  return m;
}

model::Batch random_batch(std::uint64_t seed) {
  return model::make_batch(corpus::MarkovSource(seed, corpus::Vocab{20}).sample_many(seed, 3, 8));
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  ScratchDir dir("ckpt");
  const auto m = sample_model();
  save_checkpoint(m, dir.path() / "a.ckpt", {{"note", "x"}});
  const Checkpoint loaded = load_checkpoint(dir.path() / "a.ckpt");
  save_checkpoint(loaded.model, dir.path() / "b.ckpt", loaded.metadata);
  EXPECT_EQ(slurp(dir.path() / "a.ckpt"), slurp(dir.path() / "b.ckpt"));
  EXPECT_EQ(loaded.metadata.at("note"), "x");
  EXPECT_EQ(loaded.model.config(), m.config());
  EXPECT_EQ(loaded.model.heads().size(), 2u);
}

TEST(Checkpoint, ReloadedModelGivesBitIdenticalOutputs) {
  std::stringstream buf;
  const auto m = sample_model();
  write_checkpoint(buf, m);
  const Checkpoint c = read_checkpoint(buf);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto batch = random_batch(100 + seed);
    const auto a = model::forward(m, batch).hidden, b = model::forward(c.model, batch).hidden;
    ASSERT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
    const auto la = model::classification_logits(m, "task-a", batch);
    const auto lb = model::classification_logits(c.model, "task-a", batch);
    ASSERT_TRUE(std::equal(la.data().begin(), la.data().end(), lb.data().begin()));
  }
}

TEST(Checkpoint, HeaderLayoutIsMagicVersionLength) {
  std::stringstream buf;
  write_checkpoint(buf, sample_model());
  const std::string bytes = buf.str();
  ASSERT_GT(bytes.size(), 9u);
  EXPECT_EQ(bytes.substr(0, 4), "MITK");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  const std::uint32_t len = static_cast<unsigned char>(bytes[5]) | static_cast<unsigned char>(bytes[6]) << 8 |
                            static_cast<unsigned char>(bytes[7]) << 16 | static_cast<std::uint32_t>(
                                                                             static_cast<unsigned char>(bytes[8]))
                                                                             << 24;
  const json header = json::parse(bytes.substr(9, len));
  std::size_t values = 0;
  for (const auto& entry : header.at("tensors")) {
    std::size_t n = 1;
    for (auto d : entry.at("shape")) n *= d.get<std::size_t>();
    values += n;
  }
  EXPECT_EQ(bytes.size(), 9u + len + 8u * values);
}

TEST(Checkpoint, CorruptMagicIsAFormatError) {
  std::stringstream buf;
  write_checkpoint(buf, sample_model());
  std::string bytes = buf.str();
  bytes[0] = 'X';
  std::stringstream in(bytes);
  EXPECT_THROW(read_checkpoint(in), FormatError);
}

TEST(Checkpoint, UnknownVersionIsAFormatError) {
  std::stringstream buf;
  write_checkpoint(buf, sample_model());
  std::string bytes = buf.str();
  bytes[4] = 9;
  std::stringstream in(bytes);
  EXPECT_THROW(read_checkpoint(in), FormatError);
}

TEST(Checkpoint, TruncatedPayloadIsAnIntegrityError) {
  std::stringstream buf;
  write_checkpoint(buf, sample_model());
  const std::string bytes = buf.str();
  std::stringstream in(bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(read_checkpoint(in), IntegrityError);
  std::stringstream extra(bytes + "junk");
  EXPECT_THROW(read_checkpoint(extra), IntegrityError);
}

TEST(Checkpoint, MissingFileIsAMissingPrerequisite) {
  try {
    load_checkpoint("/nonexistent/dir/model.ckpt");
    FAIL();
  } catch (const MissingPrerequisite& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/model.ckpt"), std::string::npos);
  }
}

TEST(Config, DefaultsValidateAndRoundTrip) {
  const ExperimentConfig c;
  EXPECT_NO_THROW(c.validate());
  const ExperimentConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 64u);
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(config_from_json(json{{"sead", 1}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"teacher", {{"layers", 2}}}}), ConfigError);
}

TEST(Config, CrossModuleConstraintsAreChecked) {
  json doc = config_to_json(ExperimentConfig{});
  doc["distill"]["relation_heads"] = 3;
  EXPECT_THROW(config_from_json(doc).validate(), ConfigError);
  doc = config_to_json(ExperimentConfig{});
  doc["student"]["vocab_size"] = 40;
  EXPECT_THROW(config_from_json(doc).validate(), ConfigError);
  doc = config_to_json(ExperimentConfig{});
  doc["variants"] = json::array({"vanilla", "bogus"});
  EXPECT_THROW(config_from_json(doc).validate(), ConfigError);
}

// Walks every leaf of the canonical document, so any field added later is covered too.
void collect_leaves(const json& doc, const json::json_pointer& at, std::vector<json::json_pointer>& out) {
  if (doc.is_object()) {
    for (const auto& [k, v] : doc.items()) collect_leaves(v, at / k, out);
  } else if (doc.is_array() && !doc.empty()) {
    for (std::size_t i = 0; i < doc.size(); ++i) collect_leaves(doc[i], at / i, out);
  } else {
    out.push_back(at);
  }
}

// Property: changing any single field changes the hash.
TEST(ConfigProperty, EveryFieldFeedsTheHash) {
  const ExperimentConfig base;
  const json doc = config_to_json(base);
  const std::string h0 = config_hash(base);
  std::vector<json::json_pointer> leaves;
  collect_leaves(doc, json::json_pointer(), leaves);
  ASSERT_GT(leaves.size(), 40u);
  for (const auto& ptr : leaves) {
    json changed = doc;
    json& v = changed[ptr];
    if (v.is_boolean()) {
      v = !v.get<bool>();
    } else if (v.is_number_unsigned()) {
      v = v.get<std::uint64_t>() + 1;
    } else if (v.is_number_integer()) {
      v = v.get<std::int64_t>() + 1;
    } else if (v.is_number_float()) {
      v = v.get<double>() * 0.5;
    } else if (v.is_string()) {
      if (ptr.to_string().find("variants") != std::string::npos) continue;
      if (ptr.to_string().find("relation_types") != std::string::npos) continue;
      if (ptr.to_string().find("loss_scaling") != std::string::npos) {
        v = "none";
      } else {
        v = v.get<std::string>() + "x";
      }
    } else {
      continue;
    }
    ExperimentConfig c;
    try {
      c = config_from_json(changed);
    } catch (const ConfigError&) {
      continue;
    }
    EXPECT_NE(config_hash(c), h0) << ptr.to_string();
  }
}

TEST(Metrics, JsonlLinesParseIndependently) {
  ScratchDir dir("metrics");
  JsonlWriter w(dir.path() / "m.jsonl");
  w.append(to_json(MetricsRecord{"pretrain", 3, {{"loss", 1.25}}, 10.0, "abc"}));
  w.append(to_json(MetricsRecord{"distill", 4, {{"loss", 0.5}, {"lr", 1e-3}}, 11.0, "abc"}));
  std::ifstream in(dir.path() / "m.jsonl");
  std::string line;
  std::vector<MetricsRecord> records;
  while (std::getline(in, line)) records.push_back(metrics_record_from_json(json::parse(line)));
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[1].stage, "distill");
  EXPECT_EQ(records[1].metrics.at("lr"), 1e-3);
  EXPECT_EQ(read_jsonl(dir.path() / "m.jsonl").size(), 2u);
}

TEST(Metrics, BadLineIsAFormatErrorNamingTheLine) {
  ScratchDir dir("badjsonl");
  std::ofstream(dir.path() / "m.jsonl") << "{\"a\":1}\n{broken\n";
  try {
    read_jsonl(dir.path() / "m.jsonl");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

TEST(Metrics, RunResultRoundTrips) {
  eval::RunResult r;
  r.variant = "mtl";
  r.task_id = "out-pair-0";
  r.protocol = eval::Protocol::kLowResource;
  r.fraction = 0.1;
  r.seed = 3;
  r.dev_accuracy = 0.123456789012345678;
  r.selected = eval::GridPoint{5, 32, 3e-4};
  r.majority_baseline = 0.5;
  r.train_size = 200;
  const auto back = run_result_from_json(to_json(r, "h"));
  EXPECT_EQ(back.dev_accuracy, r.dev_accuracy);
  EXPECT_EQ(back.selected, r.selected);
  EXPECT_EQ(back.protocol, r.protocol);
  EXPECT_EQ(back.fraction, r.fraction);
}

void write_results(const fs::path& dir, const std::vector<std::pair<eval::RunResult, std::string>>& rows) {
  fs::create_directories(dir / "eval");
  JsonlWriter w(dir / "eval" / "run_results.jsonl");
  for (const auto& [r, h] : rows) w.append(to_json(r, h));
}

eval::RunResult make_run(const std::string& v, const std::string& task, eval::Protocol p, std::uint64_t seed,
                         double acc) {
  eval::RunResult r;
  r.variant = v;
  r.task_id = task;
  r.protocol = p;
  r.seed = seed;
  r.dev_accuracy = acc;
  r.majority_baseline = 0.5;
  r.selected = eval::GridPoint{3, 16, 1e-3};
  return r;
}

TEST(Report, MissingResultsIsAMissingPrerequisite) {
  ScratchDir dir("noreport");
  EXPECT_THROW(render_report(dir.path()), MissingPrerequisite);
}

TEST(Report, MixedHashesAreRefused) {
  ScratchDir dir("mixed");
  write_results(dir.path(), {{make_run("a", "t", eval::Protocol::kInDomain, 1, 0.6), "h1"},
                             {make_run("b", "t", eval::Protocol::kInDomain, 1, 0.7), "h2"}});
  EXPECT_THROW(render_report(dir.path()), FormatError);
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

TEST(Report, CsvHasOneRowPerRunAndMeansRecompute) {
  ScratchDir dir("report");
  std::vector<std::pair<eval::RunResult, std::string>> rows;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> acc(0.4, 0.95);
  for (const char* v : {"vanilla", "mtl", "single-task"}) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      rows.push_back({make_run(v, "in-a", eval::Protocol::kInDomain, seed, acc(rng)), "hash"});
      rows.push_back({make_run(v, "out-a", eval::Protocol::kOutDomain, seed, acc(rng)), "hash"});
      rows.push_back({make_run(v, "out-b", eval::Protocol::kOutDomain, seed, acc(rng)), "hash"});
    }
  }
  write_results(dir.path(), rows);
  render_report(dir.path());
  const auto csv = read_csv(dir.path() / "report" / "results.csv");
  ASSERT_EQ(csv.size(), rows.size() + 1);
  // Independent re-aggregation from the CSV columns.
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> agg;
  for (std::size_t i = 1; i < csv.size(); ++i) {
    auto& cell = agg[{csv[i][0], csv[i][2]}];
    cell.first += std::stod(csv[i][5]);
    cell.second += 1;
  }
  const json summary = json::parse(slurp(dir.path() / "report" / "summary.json"));
  EXPECT_EQ(summary.at("config_hash"), "hash");
  std::size_t checked = 0;
  for (const auto& cell : summary.at("cells")) {
    const auto& [total, n] = agg.at({cell.at("variant").get<std::string>(), cell.at("protocol").get<std::string>()});
    EXPECT_NEAR(cell.at("mean").get<double>(), total / n, 1e-9);
    ++checked;
  }
  EXPECT_EQ(checked, agg.size());
  const std::string text = slurp(dir.path() / "report" / "report.txt");
  EXPECT_NE(text.find("in-domain"), std::string::npos);
  EXPECT_NE(text.find("out-domain"), std::string::npos);
  EXPECT_NE(text.find("pooled sd"), std::string::npos);
}

class SmokeExperiment : public ::testing::Test {
 protected:
  static ExperimentConfig smoke() { return load_config(testing::smoke_config_path()); }
  static StageOptions quiet() { return {.verbose = false}; }
};

TEST_F(SmokeExperiment, StagesFailWithMissingPrerequisites) {
  ScratchDir dir("prereq");
  Experiment e(smoke(), dir.path());
  EXPECT_THROW(e.prepare_teacher("mtl", quiet()), MissingPrerequisite);
  EXPECT_THROW(e.distill("mtl", quiet()), MissingPrerequisite);
  EXPECT_THROW(e.evaluate(quiet()), MissingPrerequisite);
  EXPECT_THROW(e.report(quiet()), MissingPrerequisite);
}

TEST_F(SmokeExperiment, OutputOverrideAndHashDirectory) {
  ScratchDir dir("layout");
  Experiment e(smoke(), dir.path());
  EXPECT_EQ(e.dir().parent_path(), dir.path());
  EXPECT_EQ(e.dir().filename().string(), e.hash().substr(0, 16));
  EXPECT_EQ(e.teacher_path("mtl"), e.dir() / "teacher-mtl" / "model.ckpt");
  EXPECT_EQ(e.student_path("vanilla", 2), e.dir() / "student-vanilla" / "seed-2.ckpt");
}

TEST_F(SmokeExperiment, OutFamilySingleTaskIsRejected) {
  ExperimentConfig c = smoke();
  ScratchDir dir("badsingle");
  const Experiment probe(c, dir.path());
  c.single_task.task = probe.suite().out_family.front().id;
  EXPECT_THROW(Experiment(c, dir.path()), ConfigError);
}

TEST_F(SmokeExperiment, ResumedRunMatchesUninterruptedRun) {
  ScratchDir a("resume-a"), b("resume-b");
  Experiment full(smoke(), a.path());
  full.run_all(quiet());

  Experiment partial(smoke(), b.path());
  partial.pretrain(quiet());
  partial.prepare_teacher("mtl", quiet());
  // A fresh process picks up from the persisted checkpoints.
  Experiment resumed(smoke(), b.path());
  resumed.run_all(quiet());

  for (const auto& entry : fs::recursive_directory_iterator(full.dir())) {
    if (entry.path().extension() != ".ckpt") continue;
    const fs::path rel = fs::relative(entry.path(), full.dir());
    EXPECT_EQ(slurp(entry.path()), slurp(resumed.dir() / rel)) << rel;
  }
  EXPECT_EQ(slurp(full.dir() / "report" / "results.csv").size(), slurp(resumed.dir() / "report" / "results.csv").size());
  EXPECT_EQ(json::parse(slurp(full.dir() / "report" / "summary.json")),
            json::parse(slurp(resumed.dir() / "report" / "summary.json")));
}

TEST_F(SmokeExperiment, MetricsCarryOneConfigHash) {
  ScratchDir dir("hash");
  Experiment e(smoke(), dir.path());
  e.pretrain(quiet());
  e.prepare_teacher("single-task", quiet());
  const auto records = read_jsonl(e.metrics_path());
  ASSERT_FALSE(records.empty());
  for (const auto& r : records) EXPECT_EQ(r.at("config_hash"), e.hash());
  const json meta = load_checkpoint(e.teacher_path("single-task")).metadata;
  EXPECT_EQ(meta.at("kind"), "single-task");
  EXPECT_EQ(meta.at("trained_tasks").size(), 1u);
}

TEST_F(SmokeExperiment, ExportedSplitsMatchGeneratedData) {
  ScratchDir dir("export");
  Experiment e(smoke(), dir.path());
  e.export_data();
  const auto& t = e.task_data().front();
  std::ostringstream expected;
  corpus::export_split(t.train, expected);
  EXPECT_EQ(slurp(e.dir() / "data" / (t.spec.id + ".train.tsv")), expected.str());
}

}  // namespace
}  // namespace mitkd::pipeline
