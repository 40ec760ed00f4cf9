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
#include "mitkd/model/batch.hpp"

namespace mitkd::corpus {

inline constexpr double kMaskRate = 0.15;

struct MaskedSequence {
  Sequence tokens;
  std::vector<std::size_t> positions;
  std::vector<int> targets;
};

/// Selects each content position with probability `rate`; a selected token becomes
/// MASK (80%), a random content symbol (10%) or stays unchanged (10%). Specials are
/// never selected. Deterministic in `seed`.
MaskedSequence mask_tokens(const Sequence& sequence, std::uint64_t seed, const Vocab& vocab = {},
                           double rate = kMaskRate);

/// Masks each sequence with its own derived seed and collates an MLM batch.
model::MaskedBatch make_masked_batch(std::span<const Sequence> sequences, std::uint64_t seed,
                                     const Vocab& vocab = {}, double rate = kMaskRate);

}  // namespace mitkd::corpus
