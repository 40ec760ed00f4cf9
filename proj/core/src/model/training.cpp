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

#include "mitkd/model/training.hpp"

#include <algorithm>
#include <numeric>

#include "mitkd/numerics/tape.hpp"

namespace mitkd::model {

Batch collate(std::span<const corpus::Example> examples, std::span<const std::size_t> indices,
              std::vector<int>* labels) {
  std::vector<corpus::Sequence> seqs;
  seqs.reserve(indices.size());
  if (labels) labels->clear();
  for (std::size_t i : indices) {
    seqs.push_back(examples[i].token_ids);
    if (labels) labels->push_back(examples[i].label);
  }
  return make_batch(seqs);
}

double accuracy(const EncoderModel& model, const std::string& head_name, std::span<const corpus::Example> examples,
                std::size_t batch_size) {
  if (examples.empty()) return 0.0;
  num::Tape::NoGrad no_grad;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  std::vector<int> labels;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t end = std::min(examples.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = collate(examples, idx, &labels);
    const Tensor logits = classification_logits(model, head_name, batch);
    const std::size_t classes = logits.dim(1);
    const auto data = logits.data();
    for (std::size_t r = 0; r < labels.size(); ++r) {
      const auto row = data.subspan(r * classes, classes);
      const auto pred = std::max_element(row.begin(), row.end()) - row.begin();
      if (pred == labels[r]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

EpochCursor::EpochCursor(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
  if (n == 0) throw num::ContractError("EpochCursor over an empty collection");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void EpochCursor::reshuffle() { num::shuffle(order_, rng_); }

std::vector<std::size_t> EpochCursor::next(std::size_t batch_size) {
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  while (out.size() < batch_size) {
    if (pos_ == order_.size()) {
      pos_ = 0;
      ++epoch_;
      reshuffle();
    }
    out.push_back(order_[pos_++]);
  }
  return out;
}

}  // namespace mitkd::model
