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

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include <nlohmann/json.hpp>

#include "mitkd/model/encoder.hpp"

namespace mitkd::pipeline {

inline constexpr char kCheckpointMagic[4] = {'M', 'I', 'T', 'K'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

/// Layout: "MITK", version byte, uint32 little-endian header length, UTF-8 JSON header
/// (model config, heads, ordered tensor directory of name and shape, free-form metadata),
/// then every tensor as little-endian float64 in directory order.
struct Checkpoint {
  model::EncoderModel model;
  nlohmann::json metadata = nlohmann::json::object();
};

void write_checkpoint(std::ostream& out, const model::EncoderModel& model,
                      const nlohmann::json& metadata = nlohmann::json::object());
/// Throws FormatError for a bad magic, version or header and IntegrityError for a truncated
/// or oversized payload.
Checkpoint read_checkpoint(std::istream& in);

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const model::EncoderModel& model, const std::filesystem::path& path,
                     const nlohmann::json& metadata = nlohmann::json::object());
/// Throws MissingPrerequisite when the file does not exist.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mitkd::pipeline
