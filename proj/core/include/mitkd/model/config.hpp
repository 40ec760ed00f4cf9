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
#include <string>

namespace mitkd::model {

struct ModelConfig {
  int num_layers = 2;
  int hidden_size = 32;
  int num_heads = 4;
  int ffn_size = 128;
  int max_seq_len = 32;
  int vocab_size = 68;
  double dropout_rate = 0.1;

  int head_dim() const { return hidden_size / num_heads; }

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;

  /// Desk-scale reference shapes: the student is half the depth and half the width of the teacher.
  static ModelConfig reference_teacher();
  static ModelConfig reference_student();
  /// The larger vanilla teacher used by the teacher-size ablation.
  static ModelConfig reference_large_teacher();
};

std::string describe(const ModelConfig& config);

/// Closed-form count of encoder parameters (embeddings, layers, final norm; heads excluded).
std::size_t encoder_parameter_count(const ModelConfig& config);

}  // namespace mitkd::model
