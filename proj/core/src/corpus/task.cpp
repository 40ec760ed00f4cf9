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

#include "mitkd/corpus/task.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include "mitkd/errors.hpp"
#include "mitkd/numerics/random.hpp"

namespace mitkd::corpus {

const char* to_string(TaskFamily family) {
  switch (family) {
    case TaskFamily::kPatternPresence: return "pattern-presence";
    case TaskFamily::kSymbolParity: return "symbol-parity";
    case TaskFamily::kLexiconMajority: return "lexicon-majority";
    case TaskFamily::kPairSubsequence: return "pair-subsequence";
  }
  return "unknown";
}

TaskFamily task_family_from_string(const std::string& name) {
  for (auto f : {TaskFamily::kPatternPresence, TaskFamily::kSymbolParity, TaskFamily::kLexiconMajority,
                 TaskFamily::kPairSubsequence}) {
    if (name == to_string(f)) return f;
  }
  throw ConfigError("unknown task family '" + name + "'");
}

void TaskSpec::validate(const Vocab& vocab) const {
  const auto fail = [&](const std::string& what) { throw ConfigError("task '" + id + "': " + what); };
  if (id.empty()) throw ConfigError("task id must not be empty");
  if (n_classes < 2) fail("n_classes must be at least 2");
  const auto check_symbol = [&](int s) {
    if (!vocab.is_content(s)) fail("symbol " + std::to_string(s) + " is not a content symbol");
  };
  switch (family) {
    case TaskFamily::kPatternPresence:
      if (pattern.empty()) fail("pattern must not be empty");
      for (int s : pattern) check_symbol(s);
      if (n_classes != 2) fail("pattern-presence is binary");
      break;
    case TaskFamily::kSymbolParity:
      check_symbol(symbol);
      if (n_classes != 2) fail("symbol-parity is binary");
      break;
    case TaskFamily::kLexiconMajority: {
      if (static_cast<int>(lexicons.size()) != n_classes) fail("lexicon-majority needs one lexicon per class");
      std::set<int> seen;
      for (const auto& lex : lexicons) {
        if (lex.empty()) fail("lexicons must not be empty");
        for (int s : lex) {
          check_symbol(s);
          if (!seen.insert(s).second) fail("lexicons must be disjoint");
        }
      }
      break;
    }
    case TaskFamily::kPairSubsequence:
      check_symbol(first);
      check_symbol(second);
      if (first == second) fail("pair-subsequence needs two distinct symbols");
      if (n_classes != 2) fail("pair-subsequence is binary");
      break;
  }
}

int label_of(const TaskSpec& spec, const Sequence& tokens) {
  switch (spec.family) {
    case TaskFamily::kPatternPresence: {
      const auto it = std::search(tokens.begin(), tokens.end(), spec.pattern.begin(), spec.pattern.end());
      return it != tokens.end() ? 1 : 0;
    }
    case TaskFamily::kSymbolParity:
      return static_cast<int>(std::count(tokens.begin(), tokens.end(), spec.symbol) % 2);
    case TaskFamily::kLexiconMajority: {
      std::vector<long> counts(spec.lexicons.size(), 0);
      for (int t : tokens) {
        for (std::size_t c = 0; c < spec.lexicons.size(); ++c) {
          const auto& lex = spec.lexicons[c];
          if (std::find(lex.begin(), lex.end(), t) != lex.end()) ++counts[c];
        }
      }
      const auto best = std::max_element(counts.begin(), counts.end());
      if (std::count(counts.begin(), counts.end(), *best) > 1) return -1;
      return static_cast<int>(best - counts.begin());
    }
    case TaskFamily::kPairSubsequence: {
      const auto a = std::find(tokens.begin(), tokens.end(), spec.first);
      if (a == tokens.end()) return 0;
      return std::find(a + 1, tokens.end(), spec.second) != tokens.end() ? 1 : 0;
    }
  }
  return -1;
}

namespace {

DatasetSplit draw_balanced(const MarkovSource& source, const TaskSpec& spec, std::size_t size, std::size_t seq_len,
                           std::uint64_t stream_seed, SplitRole role) {
  const auto classes = static_cast<std::size_t>(spec.n_classes);
  std::vector<std::size_t> quota(classes, size / classes);
  for (std::size_t c = 0; c < size % classes; ++c) ++quota[c];
  num::Rng rng(stream_seed);
  DatasetSplit split;
  split.role = role;
  split.examples.reserve(size);
  const std::size_t max_attempts = kGenerationAttemptsPerExample * size;
  for (std::size_t attempt = 0; split.examples.size() < size; ++attempt) {
    if (attempt >= max_attempts) {
      throw GenerationError("task '" + spec.id + "': could not fill balanced class quotas within " +
                            std::to_string(max_attempts) + " draws");
    }
    Sequence seq = source.sample(rng, seq_len);
    const int label = label_of(spec, seq);
    if (label < 0 || quota[label] == 0) continue;
    --quota[label];
    split.examples.push_back({std::move(seq), label});
  }
  return split;
}

}  // namespace

std::pair<DatasetSplit, DatasetSplit> generate_task(const MarkovSource& source, const TaskSpec& spec,
                                                    std::size_t train_size, std::size_t dev_size,
                                                    std::size_t seq_len) {
  spec.validate(source.vocab());
  const auto classes = static_cast<std::size_t>(spec.n_classes);
  if (train_size < classes || dev_size < classes) {
    throw ConfigError("task '" + spec.id + "': split sizes must be at least n_classes");
  }
  return {draw_balanced(source, spec, train_size, seq_len, num::derive_seed(spec.seed, "train"), SplitRole::kTrain),
          draw_balanced(source, spec, dev_size, seq_len, num::derive_seed(spec.seed, "dev"), SplitRole::kDev)};
}

TaskData generate_task_data(const MarkovSource& source, const TaskSpec& spec, std::size_t train_size,
                            std::size_t dev_size, std::size_t seq_len) {
  auto [train, dev] = generate_task(source, spec, train_size, dev_size, seq_len);
  return {spec, std::move(train), std::move(dev)};
}

std::size_t subsample_count(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("subsample fraction must lie in (0, 1]");
  const auto count = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction));
  return std::max<std::size_t>(1, std::min(count, n));
}

DatasetSplit subsample(const DatasetSplit& split, double fraction, std::uint64_t seed) {
  const std::size_t keep = subsample_count(split.size(), fraction);
  std::vector<std::size_t> order(split.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  num::Rng rng(num::derive_seed(seed, "subsample"));
  num::shuffle(order, rng);
  DatasetSplit out;
  out.role = split.role;
  out.examples.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.examples.push_back(split.examples[order[i]]);
  return out;
}

void export_split(const DatasetSplit& split, std::ostream& out) {
  for (const auto& ex : split.examples) {
    for (std::size_t i = 0; i < ex.token_ids.size(); ++i) {
      if (i) out << ' ';
      out << ex.token_ids[i];
    }
    out << '\t' << ex.label << '\n';
  }
}

std::vector<int> label_histogram(const DatasetSplit& split, int n_classes) {
  std::vector<int> hist(static_cast<std::size_t>(n_classes), 0);
  for (const auto& ex : split.examples) {
    if (ex.label < 0 || ex.label >= n_classes) throw LookupError("label outside [0, n_classes)");
    ++hist[static_cast<std::size_t>(ex.label)];
  }
  return hist;
}

double majority_baseline(const DatasetSplit& split, int n_classes) {
  if (split.examples.empty()) return 0.0;
  const auto hist = label_histogram(split, n_classes);
  return static_cast<double>(*std::max_element(hist.begin(), hist.end())) / static_cast<double>(split.size());
}

}  // namespace mitkd::corpus
