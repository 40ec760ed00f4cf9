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
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mitkd/eval/eval.hpp"

namespace mitkd::pipeline {

struct MetricsRecord {
  std::string stage;
  std::size_t step = 0;
  std::map<std::string, double> metrics;
  /// Seconds since the Unix epoch. Excluded from determinism comparisons.
  double timestamp = 0.0;
  std::string config_hash;
};

nlohmann::json to_json(const MetricsRecord& record);
MetricsRecord metrics_record_from_json(const nlohmann::json& doc);

/// Appends one JSON object per line. Safe to share between threads.
class JsonlWriter {
 public:
  explicit JsonlWriter(std::filesystem::path path);
  void append(const nlohmann::json& doc);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

/// Parses every non-empty line. Throws FormatError naming the first bad line.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

double wall_clock_seconds();

nlohmann::json to_json(const eval::RunResult& result, const std::string& config_hash);
eval::RunResult run_result_from_json(const nlohmann::json& doc);

}  // namespace mitkd::pipeline
