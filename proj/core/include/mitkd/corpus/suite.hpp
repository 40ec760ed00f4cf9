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

#include <cstdint>
#include <string>
#include <vector>

#include "mitkd/corpus/markov.hpp"
#include "mitkd/corpus/task.hpp"

namespace mitkd::corpus {

/// In-family tasks feed multi-task teacher training; out-family tasks are held out.
struct TaskSuite {
  std::vector<TaskSpec> in_family;
  std::vector<TaskSpec> out_family;

  /// Checks ids are unique, every spec is valid, and no symbol that parameterizes an
  /// out-family task also parameterizes an in-family task of the same family.
  /// Throws ConfigError naming the collision.
  void validate(const Vocab& vocab) const;

  const TaskSpec& find(const std::string& id) const;
  bool is_out_family(const std::string& id) const;
  std::vector<TaskSpec> all() const;
};

struct SuiteShape {
  int in_family_per_family = 2;
  int out_family_per_family = 1;
  int lexicon_size = 6;
};

/// Default suite: every family contributes `in_family_per_family` in-family and
/// `out_family_per_family` out-family tasks with disjoint parameters.
/// Patterns are drawn from the source's preferred transitions so that positives occur naturally.
TaskSuite make_default_suite(const MarkovSource& source, std::uint64_t seed, const SuiteShape& shape = {});

}  // namespace mitkd::corpus
