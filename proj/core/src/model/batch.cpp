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

#include "mitkd/model/batch.hpp"

#include <algorithm>

#include "mitkd/numerics/tensor.hpp"

namespace mitkd::model {

Batch make_batch(std::span<const corpus::Sequence> sequences) {
  if (sequences.empty()) throw num::DimensionError("make_batch: no sequences");
  Batch batch;
  batch.batch_size = sequences.size();
  for (const auto& s : sequences) batch.seq_len = std::max(batch.seq_len, s.size());
  batch.token_ids.assign(batch.batch_size * batch.seq_len, corpus::kPadId);
  batch.mask.assign(batch.batch_size * batch.seq_len, 0);
  for (std::size_t b = 0; b < sequences.size(); ++b) {
    const auto& s = sequences[b];
    std::copy(s.begin(), s.end(), batch.token_ids.begin() + static_cast<std::ptrdiff_t>(b * batch.seq_len));
    for (std::size_t i = 0; i < s.size(); ++i) batch.mask[b * batch.seq_len + i] = s[i] == corpus::kPadId ? 0 : 1;
  }
  return batch;
}

}  // namespace mitkd::model
