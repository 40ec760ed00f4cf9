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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mitkd/corpus/markov.hpp"
#include "mitkd/corpus/suite.hpp"
#include "mitkd/corpus/task.hpp"
#include "mitkd/pipeline/checkpoint.hpp"
#include "mitkd/pipeline/config.hpp"
#include "mitkd/pipeline/metrics.hpp"

namespace mitkd::pipeline {

/// Environment variable that replaces the configured output directory.
inline constexpr const char* kOutputEnvVar = "MITKD_OUT";

struct StageOptions {
  /// Recompute outputs that already exist.
  bool force = false;
  /// Worker threads for evaluation cells.
  std::size_t threads = 1;
  /// Progress lines on standard error.
  bool verbose = true;
};

/// One experiment directory, `<output>/<config hash>/`, and the stages that fill it.
///
/// Every stage is resumable: it skips outputs that already exist unless forced, and
/// fails with MissingPrerequisite (naming the expected path) when an input is absent.
class Experiment {
 public:
  /// Validates the config. `output_override` (or MITKD_OUT when unset) replaces config.output_dir.
  explicit Experiment(ExperimentConfig config, std::optional<std::filesystem::path> output_override = std::nullopt);

  const ExperimentConfig& config() const { return config_; }
  const std::string& hash() const { return hash_; }
  const std::filesystem::path& dir() const { return dir_; }

  const corpus::MarkovSource& source() const { return source_; }
  const corpus::TaskSuite& suite() const { return suite_; }
  const std::vector<corpus::Sequence>& corpus() const;
  const std::vector<corpus::TaskData>& task_data() const;
  const corpus::TaskData& task(const std::string& id) const;
  /// Tasks swept over the low-resource fractions.
  std::vector<std::string> low_resource_tasks() const;

  std::filesystem::path pretrained_path(bool large) const;
  std::filesystem::path teacher_path(const std::string& variant) const;
  std::filesystem::path student_path(const std::string& variant, std::uint64_t seed) const;
  std::filesystem::path distill_summary_path(const std::string& variant) const;
  std::filesystem::path results_path() const;
  std::filesystem::path metrics_path() const;
  std::filesystem::path report_dir() const;

  void pretrain(const StageOptions& options = {});
  void prepare_teacher(const std::string& variant, const StageOptions& options = {});
  void distill(const std::string& variant, const StageOptions& options = {});
  void evaluate(const StageOptions& options = {});
  void report(const StageOptions& options = {}) const;
  void run_all(const StageOptions& options = {});

  /// Writes every task split in the documented export format under data/.
  void export_data() const;

  void emit_metrics(const MetricsRecord& record);

 private:
  model::StepObserver observer(const std::string& stage, const StageOptions& options);
  void write_resolved_config() const;
  void log(const StageOptions& options, const std::string& line) const;

  ExperimentConfig config_;
  std::string hash_;
  std::filesystem::path dir_;
  corpus::MarkovSource source_;
  corpus::TaskSuite suite_;
  mutable std::vector<corpus::Sequence> corpus_;
  mutable std::vector<corpus::TaskData> task_data_;
  std::unique_ptr<JsonlWriter> metrics_;
};

/// Renders report/results.csv, report/report.txt and report/summary.json from eval/run_results.jsonl.
/// Throws MissingPrerequisite when no results exist and FormatError when records carry mixed config hashes.
void render_report(const std::filesystem::path& experiment_dir);

}  // namespace mitkd::pipeline
