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
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mitkd/corpus/task.hpp"
#include "mitkd/model/batch.hpp"
#include "mitkd/model/encoder.hpp"

namespace mitkd::model {

/// One logged training step. `values` holds named scalars such as loss and learning rate.
struct StepLog {
  std::string stage;
  std::size_t step = 0;
  std::map<std::string, double> values;
};

using StepObserver = std::function<void(const StepLog&)>;

/// Collates the selected examples into a batch and a label vector.
Batch collate(std::span<const corpus::Example> examples, std::span<const std::size_t> indices,
              std::vector<int>* labels = nullptr);

/// Fraction of examples whose argmax head prediction matches the label. Dropout off, no gradients.
double accuracy(const EncoderModel& model, const std::string& head_name, std::span<const corpus::Example> examples,
                std::size_t batch_size = 128);

/// Endless stream of shuffled index batches over `n` items; reshuffles at every epoch boundary.
class EpochCursor {
 public:
  EpochCursor(std::size_t n, std::uint64_t seed);

  std::vector<std::size_t> next(std::size_t batch_size);
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::size_t epoch_ = 0;
  num::Rng rng_;
};

}  // namespace mitkd::model
