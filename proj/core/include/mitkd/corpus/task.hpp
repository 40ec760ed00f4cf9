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
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mitkd/corpus/markov.hpp"
#include "mitkd/corpus/vocab.hpp"

namespace mitkd::corpus {

enum class TaskFamily { kPatternPresence, kSymbolParity, kLexiconMajority, kPairSubsequence };

const char* to_string(TaskFamily family);
TaskFamily task_family_from_string(const std::string& name);

/// A parameterized synthetic classification task. Symbols are token ids.
///
///  - pattern-presence: 1 iff `pattern` occurs contiguously.
///  - symbol-parity: count of `symbol` modulo 2.
///  - lexicon-majority: index of the lexicon with the strictly largest token count (ties are unlabeled).
///  - pair-subsequence: 1 iff `first` occurs somewhere before `second`.
struct TaskSpec {
  std::string id;
  TaskFamily family = TaskFamily::kPatternPresence;
  std::vector<int> pattern;
  int symbol = -1;
  std::vector<std::vector<int>> lexicons;
  int first = -1;
  int second = -1;
  int n_classes = 2;
  std::string domain_tag;
  std::uint64_t seed = 0;

  bool operator==(const TaskSpec&) const = default;

  /// Throws ConfigError for malformed parameters.
  void validate(const Vocab& vocab) const;
};

/// Label under the family rule, or -1 when the rule leaves the sequence unlabeled.
int label_of(const TaskSpec& spec, const Sequence& tokens);

struct Example {
  Sequence token_ids;
  int label = 0;

  bool operator==(const Example&) const = default;
};

enum class SplitRole { kTrain, kDev };

struct DatasetSplit {
  std::vector<Example> examples;
  SplitRole role = SplitRole::kTrain;

  std::size_t size() const { return examples.size(); }
};

struct TaskData {
  TaskSpec spec;
  DatasetSplit train;
  DatasetSplit dev;
};

inline constexpr std::size_t kGenerationAttemptsPerExample = 2000;

/// Draws chain samples and labels them by the family rule, rejection-sampling
/// to an exactly balanced label histogram. Train and dev use disjoint streams.
/// Throws GenerationError when a class quota cannot be filled within
/// kGenerationAttemptsPerExample * size draws.
std::pair<DatasetSplit, DatasetSplit> generate_task(const MarkovSource& source, const TaskSpec& spec,
                                                    std::size_t train_size, std::size_t dev_size,
                                                    std::size_t seq_len);
TaskData generate_task_data(const MarkovSource& source, const TaskSpec& spec, std::size_t train_size,
                            std::size_t dev_size, std::size_t seq_len);

/// Seeded shuffle, keep the first max(1, floor(n * fraction)). Equal seeds give nested prefixes.
DatasetSplit subsample(const DatasetSplit& split, double fraction, std::uint64_t seed);
std::size_t subsample_count(std::size_t n, double fraction);

/// One example per line: space-separated token ids, a tab, the label.
void export_split(const DatasetSplit& split, std::ostream& out);

std::vector<int> label_histogram(const DatasetSplit& split, int n_classes);
/// Largest class share in the split (accuracy of the constant majority predictor).
double majority_baseline(const DatasetSplit& split, int n_classes);

}  // namespace mitkd::corpus
