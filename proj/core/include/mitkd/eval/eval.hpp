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
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mitkd/corpus/suite.hpp"
#include "mitkd/corpus/task.hpp"
#include "mitkd/model/encoder.hpp"

namespace mitkd::eval {

struct GridPoint {
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double learning_rate = 0.0;

  bool operator==(const GridPoint&) const = default;
};

struct FinetuneHparams {
  std::vector<std::size_t> epochs{3, 5};
  std::vector<std::size_t> batch_sizes{16, 32};
  std::vector<double> learning_rates{1e-4, 3e-4, 1e-3};

  /// Throws ConfigError for an empty or non-positive grid axis.
  void validate() const;
  /// Cartesian product in epochs-major, then batch size, then learning rate order.
  std::vector<GridPoint> grid() const;
};

enum class Protocol { kInDomain, kOutDomain, kLowResource };

const char* to_string(Protocol protocol);
Protocol protocol_from_string(const std::string& name);

/// Outcome of one protocol cell.
struct RunResult {
  std::string variant;
  std::string task_id;
  Protocol protocol = Protocol::kInDomain;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  double dev_accuracy = 0.0;
  /// Selected grid point. Unset when the constant majority predictor won selection.
  std::optional<GridPoint> selected;
  /// Largest class share of the dev split.
  double majority_baseline = 0.0;
  std::size_t train_size = 0;
  /// Wall-clock seconds spent on the cell. Informational; not part of any determinism contract.
  double seconds = 0.0;

  /// No better than always predicting the dev majority class.
  bool at_floor() const { return dev_accuracy <= majority_baseline + 1e-12; }
};

/// Finetunes a fresh head (plus the encoder) at every grid point and keeps the best dev accuracy.
/// The constant predictor of the training majority class is a candidate as well, so a run never
/// reports less than that predictor. Ties keep the earlier candidate, grid order first.
/// Fills task_id, seed, dev_accuracy, selected, majority_baseline and train_size.
RunResult finetune_student(const model::EncoderModel& student, const corpus::TaskSpec& task,
                           const corpus::DatasetSplit& train, const corpus::DatasetSplit& dev,
                           const FinetuneHparams& hparams, std::uint64_t seed);

/// Dev accuracy after finetuning at one grid point.
double finetune_at(const model::EncoderModel& student, const corpus::TaskSpec& task,
                   const corpus::DatasetSplit& train, const corpus::DatasetSplit& dev, const GridPoint& point,
                   std::uint64_t seed);

struct ProtocolTask {
  const corpus::TaskSpec* spec = nullptr;
  const corpus::DatasetSplit* train = nullptr;
  const corpus::DatasetSplit* dev = nullptr;
  bool out_family = false;
};

/// Students per variant: one model shared by every seed, or one model per seed (seed order).
using StudentMap = std::map<std::string, std::vector<model::EncoderModel>>;

struct ProtocolOptions {
  std::vector<double> fractions{0.01, 0.10, 0.50, 1.0};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4};
  FinetuneHparams hparams;
  /// Worker threads for independent cells. 1 runs everything on the calling thread.
  std::size_t threads = 1;
  /// Returns a previously computed result for the cell described by `key`, if any.
  std::function<std::optional<RunResult>(const RunResult& key)> resume;
  /// Called once per freshly computed cell, serialized across workers.
  std::function<void(const RunResult&)> on_result;
};

/// Every variant x task x fraction x seed cell, in that nesting order regardless of threading.
/// Throws ConfigError when the students differ in ModelConfig, a student list has the wrong length,
/// or there are no variants, tasks, fractions or seeds.
std::vector<RunResult> run_protocol(const StudentMap& students, std::span<const ProtocolTask> tasks,
                                    const ProtocolOptions& options);

/// Throws ConfigError when a teacher was finetuned on a task the suite holds out.
void check_out_domain_hygiene(const corpus::TaskSuite& suite,
                              const std::map<std::string, std::vector<std::string>>& teacher_tasks);

/// Label for a protocol group: "in-domain", "out-domain" or "low-resource@<fraction>".
std::string protocol_label(Protocol protocol, double fraction);

struct SummaryCell {
  std::string variant;
  std::string protocol;
  std::size_t runs = 0;
  double mean = 0.0;
  /// Sample standard deviation over all runs of the cell (seeds and tasks).
  double sd = 0.0;
  /// Sample standard deviation of the per-seed means (task-averaged).
  double seed_sd = 0.0;
};

struct Summary {
  std::vector<RunResult> runs;
  std::vector<SummaryCell> cells;
  /// Variants sorted by out-domain mean, best first; ties by name.
  std::vector<std::string> ordering;

  const SummaryCell* find(const std::string& variant, const std::string& protocol) const;
  std::vector<std::string> protocols() const;
};

Summary summarize(std::span<const RunResult> runs);

struct Comparison {
  std::string protocol;
  std::string first;
  std::string second;
  double difference = 0.0;  // first - second
  double pooled_sd = 0.0;   // sqrt((seed_sd_first^2 + seed_sd_second^2) / 2)
  bool conclusive = false;  // nonzero and at least one pooled sd
};

/// Pairwise comparisons per protocol, pairs in summary ordering. Needs at least two variants.
std::vector<Comparison> compare_variants(const Summary& summary);

/// Task cells (task x protocol label) where every variant and seed hit the constant-predictor floor.
std::vector<std::pair<std::string, std::string>> floor_cells(const Summary& summary);

}  // namespace mitkd::eval
