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
#include <span>
#include <vector>

#include "mitkd/corpus/vocab.hpp"

namespace mitkd::model {

/// A rectangular batch of token ids. `mask` is 1 for real tokens and 0 for PAD.
struct Batch {
  std::size_t batch_size = 0;
  std::size_t seq_len = 0;
  std::vector<int> token_ids;       // batch_size x seq_len
  std::vector<std::uint8_t> mask;   // batch_size x seq_len
};

/// MLM inputs: `positions` index into the flattened batch (row * seq_len + column).
struct MaskedBatch {
  Batch inputs;
  std::vector<std::size_t> positions;
  std::vector<int> targets;
};

/// Right-pads sequences with PAD to the longest one.
Batch make_batch(std::span<const corpus::Sequence> sequences);

}  // namespace mitkd::model
