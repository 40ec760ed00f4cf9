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

#include "mitkd/corpus/suite.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "mitkd/errors.hpp"
#include "mitkd/numerics/random.hpp"

namespace mitkd::corpus {

namespace {

std::vector<int> parameter_symbols(const TaskSpec& spec) {
  switch (spec.family) {
    case TaskFamily::kPatternPresence: return spec.pattern;
    case TaskFamily::kSymbolParity: return {spec.symbol};
    case TaskFamily::kLexiconMajority: {
      std::vector<int> out;
      for (const auto& lex : spec.lexicons) out.insert(out.end(), lex.begin(), lex.end());
      return out;
    }
    case TaskFamily::kPairSubsequence: return {spec.first, spec.second};
  }
  return {};
}

constexpr TaskFamily kFamilies[] = {TaskFamily::kPatternPresence, TaskFamily::kSymbolParity,
                                    TaskFamily::kLexiconMajority, TaskFamily::kPairSubsequence};

const char* short_name(TaskFamily family) {
  switch (family) {
    case TaskFamily::kPatternPresence: return "pattern";
    case TaskFamily::kSymbolParity: return "parity";
    case TaskFamily::kLexiconMajority: return "lexicon";
    case TaskFamily::kPairSubsequence: return "pair";
  }
  return "task";
}

}  // namespace

void TaskSuite::validate(const Vocab& vocab) const {
  std::set<std::string> ids;
  for (const auto* group : {&in_family, &out_family}) {
    for (const auto& spec : *group) {
      spec.validate(vocab);
      if (!ids.insert(spec.id).second) throw ConfigError("duplicate task id '" + spec.id + "'");
    }
  }
  std::map<TaskFamily, std::map<int, std::string>> used;
  for (const auto& spec : in_family) {
    for (int s : parameter_symbols(spec)) used[spec.family].emplace(s, spec.id);
  }
  for (const auto& spec : out_family) {
    for (int s : parameter_symbols(spec)) {
      const auto& family_used = used[spec.family];
      const auto hit = family_used.find(s);
      if (hit != family_used.end()) {
        throw ConfigError("suite hygiene: out-family task '" + spec.id + "' shares symbol " + token_name(s) +
                          " with in-family task '" + hit->second + "'");
      }
    }
  }
}

const TaskSpec& TaskSuite::find(const std::string& id) const {
  for (const auto* group : {&in_family, &out_family}) {
    for (const auto& spec : *group) {
      if (spec.id == id) return spec;
    }
  }
  throw LookupError("no task with id '" + id + "'");
}

bool TaskSuite::is_out_family(const std::string& id) const {
  return std::any_of(out_family.begin(), out_family.end(), [&](const TaskSpec& s) { return s.id == id; });
}

std::vector<TaskSpec> TaskSuite::all() const {
  std::vector<TaskSpec> out = in_family;
  out.insert(out.end(), out_family.begin(), out_family.end());
  return out;
}

TaskSuite make_default_suite(const MarkovSource& source, std::uint64_t seed, const SuiteShape& shape) {
  const Vocab& vocab = source.vocab();
  TaskSuite suite;
  std::uint64_t task_index = 0;
  for (TaskFamily family : kFamilies) {
    // Each family draws its symbols without replacement, so in- and out-family parameters never meet.
    std::vector<int> pool(static_cast<std::size_t>(vocab.content_symbols));
    std::iota(pool.begin(), pool.end(), 0);
    num::Rng rng(num::derive_seed(seed, std::string("suite-") + to_string(family)));
    num::shuffle(pool, rng);
    std::vector<bool> taken(pool.size(), false);
    std::size_t cursor = 0;
    const auto take = [&]() {
      while (cursor < pool.size() && taken[static_cast<std::size_t>(pool[cursor])]) ++cursor;
      if (cursor == pool.size()) throw ConfigError("suite needs more content symbols than the vocabulary has");
      const int index = pool[cursor];
      taken[static_cast<std::size_t>(index)] = true;
      return index;
    };

    const int total = shape.in_family_per_family + shape.out_family_per_family;
    for (int k = 0; k < total; ++k) {
      const bool out = k >= shape.in_family_per_family;
      TaskSpec spec;
      spec.family = family;
      spec.domain_tag = out ? "out-family" : "in-family";
      spec.id = std::string(out ? "out-" : "in-") + short_name(family) + "-" +
                std::to_string(out ? k - shape.in_family_per_family : k);
      spec.seed = num::derive_seed(seed, "task", task_index++);
      switch (family) {
        case TaskFamily::kPatternPresence: {
          const int a = take();
          int b = -1;
          for (int succ : source.preferred_successors(a)) {
            if (!taken[static_cast<std::size_t>(succ)]) {
              b = succ;
              break;
            }
          }
          if (b < 0) b = take();
          taken[static_cast<std::size_t>(b)] = true;
          spec.pattern = {vocab.content_id(a), vocab.content_id(b)};
          break;
        }
        case TaskFamily::kSymbolParity:
          spec.symbol = vocab.content_id(take());
          break;
        case TaskFamily::kLexiconMajority: {
          // The second in-family lexicon task has three classes so the suite mixes label arities.
          spec.n_classes = (!out && k == 1) ? 3 : 2;
          for (int c = 0; c < spec.n_classes; ++c) {
            std::vector<int> lex;
            for (int i = 0; i < shape.lexicon_size; ++i) lex.push_back(vocab.content_id(take()));
            spec.lexicons.push_back(std::move(lex));
          }
          break;
        }
        case TaskFamily::kPairSubsequence:
          spec.first = vocab.content_id(take());
          spec.second = vocab.content_id(take());
          break;
      }
      (out ? suite.out_family : suite.in_family).push_back(std::move(spec));
    }
  }
  suite.validate(vocab);
  return suite;
}

}  // namespace mitkd::corpus
