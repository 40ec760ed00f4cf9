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
#include <vector>

#include "mitkd/corpus/vocab.hpp"
#include "mitkd/numerics/random.hpp"

namespace mitkd::corpus {

/// First-order Markov chain over content symbols; the only text source of an experiment.
///
/// Each symbol prefers a handful of successors drawn from the seed; a uniform
/// floor keeps the chain irreducible and fast-mixing. The chain is fixed by
/// its seed, so the distillation corpus and every task draw from the same
/// distribution.
class MarkovSource {
 public:
  static constexpr int kPreferredSuccessors = 6;
  static constexpr double kPreferredMass = 0.75;
  static constexpr int kBurnIn = 32;

  explicit MarkovSource(std::uint64_t seed, Vocab vocab = {});

  const Vocab& vocab() const { return vocab_; }
  std::uint64_t seed() const { return seed_; }
  int num_symbols() const { return vocab_.content_symbols; }
  /// Row-major [symbols x symbols] transition probabilities over content indices.
  const std::vector<double>& transition() const { return transition_; }
  double transition(int from, int to) const;
  /// Content indices of the preferred successors of `from`, strongest first.
  const std::vector<int>& preferred_successors(int from) const { return preferred_[from]; }

  /// CLS, (seq_len - 2) content symbols, SEP.
  Sequence sample(num::Rng& rng, std::size_t seq_len) const;
  std::vector<Sequence> sample_many(std::uint64_t stream_seed, std::size_t count, std::size_t seq_len) const;

 private:
  int step(num::Rng& rng, int from) const;

  Vocab vocab_;
  std::uint64_t seed_;
  std::vector<double> transition_;
  std::vector<std::vector<double>> cumulative_;
  std::vector<std::vector<int>> preferred_;
};

/// Unlabeled corpus: `num_sequences` chain samples of length `seq_len` (CLS ... SEP).
std::vector<Sequence> generate_corpus(std::uint64_t seed, std::size_t num_sequences, std::size_t seq_len,
                                      Vocab vocab = {});
std::vector<Sequence> generate_corpus(const MarkovSource& source, std::size_t num_sequences, std::size_t seq_len);

}  // namespace mitkd::corpus
