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

#include "mitkd/pipeline/metrics.hpp"

#include <chrono>
#include <fstream>

#include "mitkd/errors.hpp"

namespace mitkd::pipeline {

using nlohmann::json;

json to_json(const MetricsRecord& r) {
  return {{"stage", r.stage},
          {"step", r.step},
          {"metrics", r.metrics},
          {"timestamp", r.timestamp},
          {"config_hash", r.config_hash}};
}

MetricsRecord metrics_record_from_json(const json& doc) {
  MetricsRecord r;
  r.stage = doc.at("stage").get<std::string>();
  r.step = doc.at("step").get<std::size_t>();
  r.metrics = doc.at("metrics").get<std::map<std::string, double>>();
  r.timestamp = doc.at("timestamp").get<double>();
  r.config_hash = doc.at("config_hash").get<std::string>();
  return r;
}

JsonlWriter::JsonlWriter(std::filesystem::path path) : path_(std::move(path)) {}

void JsonlWriter::append(const json& doc) {
  const std::string line = doc.dump() + "\n";
  std::lock_guard lock(mutex_);
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot append to " + path_.string());
  out << line;
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path_.string());
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingPrerequisite("missing file: " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

double wall_clock_seconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

json to_json(const eval::RunResult& r, const std::string& config_hash) {
  json doc = {{"variant", r.variant},
              {"task", r.task_id},
              {"protocol", eval::to_string(r.protocol)},
              {"fraction", r.fraction},
              {"seed", r.seed},
              {"dev_accuracy", r.dev_accuracy},
              {"majority_baseline", r.majority_baseline},
              {"train_size", r.train_size},
              {"seconds", r.seconds},
              {"config_hash", config_hash}};
  if (r.selected) {
    doc["selected"] = {{"epochs", r.selected->epochs},
                       {"batch_size", r.selected->batch_size},
                       {"learning_rate", r.selected->learning_rate}};
  } else {
    doc["selected"] = nullptr;
  }
  return doc;
}

eval::RunResult run_result_from_json(const json& doc) {
  eval::RunResult r;
  r.variant = doc.at("variant").get<std::string>();
  r.task_id = doc.at("task").get<std::string>();
  r.protocol = eval::protocol_from_string(doc.at("protocol").get<std::string>());
  r.fraction = doc.at("fraction").get<double>();
  r.seed = doc.at("seed").get<std::uint64_t>();
  r.dev_accuracy = doc.at("dev_accuracy").get<double>();
  r.majority_baseline = doc.at("majority_baseline").get<double>();
  r.train_size = doc.at("train_size").get<std::size_t>();
  r.seconds = doc.value("seconds", 0.0);
  const auto& sel = doc.at("selected");
  if (!sel.is_null()) {
    r.selected = eval::GridPoint{sel.at("epochs").get<std::size_t>(), sel.at("batch_size").get<std::size_t>(),
                                 sel.at("learning_rate").get<double>()};
  }
  return r;
}

}  // namespace mitkd::pipeline
