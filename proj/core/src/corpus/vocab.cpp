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

#include "mitkd/corpus/vocab.hpp"

namespace mitkd::corpus {

std::string token_name(int id) {
  switch (id) {
    case kPadId: return "[PAD]";
    case kClsId: return "[CLS]";
    case kSepId: return "[SEP]";
    case kMaskId: return "[MASK]";
    default: break;
  }
  if (id < 0) return "[INVALID]";
  return "s" + std::to_string(id - kNumSpecialTokens);
}

}  // namespace mitkd::corpus
