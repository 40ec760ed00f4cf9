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

#include <string>
#include <vector>

namespace mitkd::corpus {

inline constexpr int kPadId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kSepId = 2;
inline constexpr int kMaskId = 3;
inline constexpr int kNumSpecialTokens = 4;

using Sequence = std::vector<int>;

/// Content symbols occupy ids [kNumSpecialTokens, size()).
struct Vocab {
  int content_symbols = 64;

  int size() const { return content_symbols + kNumSpecialTokens; }
  int content_id(int index) const { return kNumSpecialTokens + index; }
  bool is_content(int id) const { return id >= kNumSpecialTokens && id < size(); }
  static bool is_special(int id) { return id >= 0 && id < kNumSpecialTokens; }
};

std::string token_name(int id);

}  // namespace mitkd::corpus
