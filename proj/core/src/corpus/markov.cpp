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

#include "mitkd/corpus/markov.hpp"

#include <algorithm>
#include <numeric>

#include "mitkd/errors.hpp"

namespace mitkd::corpus {

MarkovSource::MarkovSource(std::uint64_t seed, Vocab vocab) : vocab_(vocab), seed_(seed) {
  const int n = vocab_.content_symbols;
  if (n < kPreferredSuccessors + 1) throw ConfigError("markov source needs more content symbols than preferred successors");
  num::Rng rng(num::derive_seed(seed, "markov-transitions"));
  transition_.assign(static_cast<std::size_t>(n) * n, (1.0 - kPreferredMass) / n);
  preferred_.resize(n);
  cumulative_.resize(n);
  // Linearly decreasing weights k, k-1, ..., 1 over the preferred successors.
  const double weight_total = kPreferredSuccessors * (kPreferredSuccessors + 1) / 2.0;
  std::vector<int> order(n);
  for (int from = 0; from < n; ++from) {
    std::iota(order.begin(), order.end(), 0);
    num::shuffle(order, rng);
    auto& preferred = preferred_[from];
    preferred.assign(order.begin(), order.begin() + kPreferredSuccessors);
    for (int r = 0; r < kPreferredSuccessors; ++r) {
      transition_[static_cast<std::size_t>(from) * n + preferred[r]] +=
          kPreferredMass * (kPreferredSuccessors - r) / weight_total;
    }
    auto& cdf = cumulative_[from];
    cdf.resize(n);
    double acc = 0.0;
    for (int to = 0; to < n; ++to) {
      acc += transition_[static_cast<std::size_t>(from) * n + to];
      cdf[to] = acc;
    }
    cdf.back() = 1.0;
  }
}

double MarkovSource::transition(int from, int to) const {
  return transition_[static_cast<std::size_t>(from) * vocab_.content_symbols + to];
}

int MarkovSource::step(num::Rng& rng, int from) const {
  const double u = num::uniform01(rng);
  const auto& cdf = cumulative_[from];
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), vocab_.content_symbols - 1));
}

Sequence MarkovSource::sample(num::Rng& rng, std::size_t seq_len) const {
  if (seq_len < 3) throw ConfigError("sequence length must leave room for CLS, SEP and one symbol");
  int state = static_cast<int>(rng() % static_cast<std::uint64_t>(vocab_.content_symbols));
  for (int i = 0; i < kBurnIn; ++i) state = step(rng, state);
  Sequence out;
  out.reserve(seq_len);
  out.push_back(kClsId);
  for (std::size_t i = 0; i + 2 < seq_len; ++i) {
    out.push_back(vocab_.content_id(state));
    state = step(rng, state);
  }
  out.push_back(kSepId);
  return out;
}

std::vector<Sequence> MarkovSource::sample_many(std::uint64_t stream_seed, std::size_t count,
                                                std::size_t seq_len) const {
  num::Rng rng(stream_seed);
  std::vector<Sequence> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample(rng, seq_len));
  return out;
}

std::vector<Sequence> generate_corpus(const MarkovSource& source, std::size_t num_sequences, std::size_t seq_len) {
  if (num_sequences == 0) throw ConfigError("corpus needs at least one sequence");
  return source.sample_many(num::derive_seed(source.seed(), "corpus"), num_sequences, seq_len);
}

std::vector<Sequence> generate_corpus(std::uint64_t seed, std::size_t num_sequences, std::size_t seq_len,
                                      Vocab vocab) {
  return generate_corpus(MarkovSource(seed, vocab), num_sequences, seq_len);
}

}  // namespace mitkd::corpus
