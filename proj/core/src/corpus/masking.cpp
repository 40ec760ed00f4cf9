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

#include "mitkd/corpus/masking.hpp"

#include "mitkd/errors.hpp"
#include "mitkd/numerics/random.hpp"
#include "mitkd/numerics/tensor.hpp"

namespace mitkd::corpus {

MaskedSequence mask_tokens(const Sequence& sequence, std::uint64_t seed, const Vocab& vocab, double rate) {
  if (sequence.empty() || sequence.front() != kClsId) throw num::ContractError("mask_tokens expects a CLS-framed sequence");
  if (rate < 0.0 || rate > 1.0) throw num::ContractError("mask rate must lie in [0, 1]");
  MaskedSequence out{sequence, {}, {}};
  if (rate == 0.0) return out;
  num::Rng rng(seed);
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    if (!vocab.is_content(sequence[i])) continue;
    if (num::uniform01(rng) >= rate) continue;
    out.positions.push_back(i);
    out.targets.push_back(sequence[i]);
    const double action = num::uniform01(rng);
    if (action < 0.8) {
      out.tokens[i] = kMaskId;
    } else if (action < 0.9) {
      out.tokens[i] = vocab.content_id(static_cast<int>(rng() % static_cast<std::uint64_t>(vocab.content_symbols)));
    }
  }
  return out;
}

model::MaskedBatch make_masked_batch(std::span<const Sequence> sequences, std::uint64_t seed, const Vocab& vocab,
                                     double rate) {
  std::vector<MaskedSequence> masked;
  masked.reserve(sequences.size());
  std::vector<Sequence> inputs;
  inputs.reserve(sequences.size());
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    masked.push_back(mask_tokens(sequences[i], num::derive_seed(seed, "mask", i), vocab, rate));
    inputs.push_back(masked.back().tokens);
  }
  model::MaskedBatch batch;
  batch.inputs = model::make_batch(inputs);
  for (std::size_t i = 0; i < masked.size(); ++i) {
    for (std::size_t k = 0; k < masked[i].positions.size(); ++k) {
      batch.positions.push_back(i * batch.inputs.seq_len + masked[i].positions[k]);
      batch.targets.push_back(masked[i].targets[k]);
    }
  }
  return batch;
}

}  // namespace mitkd::corpus
