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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mitkd/corpus/suite.hpp"
#include "mitkd/distill/distill.hpp"
#include "mitkd/eval/eval.hpp"
#include "mitkd/model/config.hpp"
#include "mitkd/mtl/mtl.hpp"

namespace mitkd::pipeline {

struct CorpusSettings {
  std::size_t num_sequences = 20000;
  std::size_t seq_len = 32;
  int content_symbols = 64;
};

struct TaskSettings {
  std::size_t train_size = 2000;
  std::size_t dev_size = 500;
  std::size_t seq_len = 32;
  /// Drawn from the Markov source when `explicit_suite` is empty.
  corpus::SuiteShape shape;
  std::optional<corpus::TaskSuite> explicit_suite;
};

struct SingleTaskSettings {
  /// In-family task the single-task teacher is finetuned on.
  std::string task;
  mtl::SingleTaskHparams hparams;
};

/// Protocol settings. Low-resource fractions run on `low_resource_tasks` only; every task runs at 1.0.
struct ProtocolSettings {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4};
  std::vector<double> low_resource_fractions{0.01, 0.10, 0.50};
  /// Empty selects the first in-family task and every out-family task.
  std::vector<std::string> low_resource_tasks;
};

/// The teacher variants an experiment compares. `vanilla-large` distills the larger pretrained teacher.
inline constexpr const char* kVariantVanilla = "vanilla";
inline constexpr const char* kVariantSingleTask = "single-task";
inline constexpr const char* kVariantMtl = "mtl";
inline constexpr const char* kVariantVanillaLarge = "vanilla-large";

struct ExperimentConfig {
  std::uint64_t seed = 2024;
  std::string output_dir = "runs";
  CorpusSettings corpus;
  TaskSettings tasks;
  model::ModelConfig teacher = model::ModelConfig::reference_teacher();
  model::ModelConfig student = model::ModelConfig::reference_student();
  std::optional<model::ModelConfig> large_teacher = model::ModelConfig::reference_large_teacher();
  mtl::PretrainConfig pretrain;
  /// Task list is filled from the suite's in-family tasks; only the schedule fields are read from JSON.
  mtl::MtlConfig mtl;
  SingleTaskSettings single_task;
  distill::DistillConfig distill;
  /// Per-variant overrides merged over `distill`.
  std::map<std::string, distill::DistillConfig> distill_overrides;
  eval::FinetuneHparams finetune;
  ProtocolSettings protocol;
  std::vector<std::string> variants{kVariantVanilla, kVariantSingleTask, kVariantMtl, kVariantVanillaLarge};
  std::size_t log_every = 50;

  /// Checks every cross-module constraint. Throws ConfigError naming the first violation.
  void validate() const;

  corpus::Vocab vocab() const { return corpus::Vocab{corpus.content_symbols}; }
  const distill::DistillConfig& distill_for(const std::string& variant) const;
  /// Teacher architecture distilled by `variant`.
  const model::ModelConfig& teacher_for(const std::string& variant) const;
  bool has_variant(const std::string& variant) const;
};

/// Parses a config document. Unknown keys are rejected. Throws ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully resolved document: every field spelled out, so equal configs serialize identically.
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Lowercase hex SHA-256 of the canonical serialization.
std::string config_hash(const ExperimentConfig& config);

nlohmann::json to_json(const model::ModelConfig& config);
model::ModelConfig model_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const corpus::TaskSpec& spec);
corpus::TaskSpec task_spec_from_json(const nlohmann::json& doc);

}  // namespace mitkd::pipeline
