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

#include "mitkd/model/config.hpp"

#include <sstream>

#include "mitkd/corpus/vocab.hpp"
#include "mitkd/errors.hpp"

namespace mitkd::model {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (num_layers < 1) fail("num_layers must be >= 1");
  if (hidden_size < 2) fail("hidden_size must be >= 2");
  if (num_heads < 1) fail("num_heads must be >= 1");
  if (hidden_size % num_heads != 0) {
    fail("hidden_size " + std::to_string(hidden_size) + " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (ffn_size < 1) fail("ffn_size must be >= 1");
  if (max_seq_len < 2) fail("max_seq_len must be >= 2");
  if (vocab_size <= corpus::kNumSpecialTokens) {
    fail("vocab_size must exceed the " + std::to_string(corpus::kNumSpecialTokens) + " special tokens");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
}

ModelConfig ModelConfig::reference_teacher() { return {4, 64, 4, 256, 32, 68, 0.1}; }
ModelConfig ModelConfig::reference_student() { return {2, 32, 4, 128, 32, 68, 0.1}; }
ModelConfig ModelConfig::reference_large_teacher() { return {6, 96, 4, 384, 32, 68, 0.1}; }

std::string describe(const ModelConfig& c) {
  std::ostringstream out;
  out << c.num_layers << "L/" << c.hidden_size << "h/" << c.num_heads << "heads/" << c.ffn_size << "ffn";
  return out.str();
}

std::size_t encoder_parameter_count(const ModelConfig& c) {
  const std::size_t h = static_cast<std::size_t>(c.hidden_size);
  const std::size_t f = static_cast<std::size_t>(c.ffn_size);
  const std::size_t embeddings = static_cast<std::size_t>(c.vocab_size + c.max_seq_len) * h;
  const std::size_t attention = 4 * (h * h + h);
  const std::size_t ffn = h * f + f + f * h + h;
  const std::size_t norms = 2 * 2 * h;
  return embeddings + static_cast<std::size_t>(c.num_layers) * (attention + ffn + norms) + 2 * h;
}

}  // namespace mitkd::model
