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

#include "mitkd/pipeline/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "mitkd/errors.hpp"
#include "mitkd/pipeline/config.hpp"

namespace mitkd::pipeline {

using nlohmann::json;

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                         static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(bytes, 4);
}

void put_f64(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

bool read_exact(std::istream& in, char* buffer, std::size_t n) {
  in.read(buffer, static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount()) == n;
}

}  // namespace

void write_checkpoint(std::ostream& out, const model::EncoderModel& m, const json& metadata) {
  json directory = json::array();
  const auto params = m.all_parameters();
  for (const auto& p : params) directory.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  json heads = json::array();
  for (const auto& [name, head] : m.heads()) {
    heads.push_back({{"name", name}, {"kind", model::to_string(head.kind)}, {"output_dim", head.output_dim}});
  }
  const json header = {{"config", to_json(m.config())}, {"heads", heads}, {"tensors", directory}, {"metadata", metadata}};
  const std::string text = header.dump();
  out.write(kCheckpointMagic, 4);
  out.put(static_cast<char>(kCheckpointVersion));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) {
    for (double v : p.tensor.data()) put_f64(out, v);
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!read_exact(in, magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic (expected MITK)");
  }
  const int version = in.get();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version));
  }
  unsigned char len_bytes[4];
  if (!read_exact(in, reinterpret_cast<char*>(len_bytes), 4)) throw IntegrityError("checkpoint: truncated header length");
  const std::uint32_t header_len = static_cast<std::uint32_t>(len_bytes[0]) | (static_cast<std::uint32_t>(len_bytes[1]) << 8) |
                                   (static_cast<std::uint32_t>(len_bytes[2]) << 16) |
                                   (static_cast<std::uint32_t>(len_bytes[3]) << 24);
  std::string text(header_len, '\0');
  if (!read_exact(in, text.data(), header_len)) throw IntegrityError("checkpoint: truncated header");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint: header is not valid JSON: ") + e.what());
  }
  if (!header.is_object() || !header.contains("config") || !header.contains("tensors") || !header.contains("heads")) {
    throw FormatError("checkpoint: header lacks config, heads or tensors");
  }
  Checkpoint ck{model::EncoderModel(model_config_from_json(header.at("config"))), header.value("metadata", json::object())};
  model::EncoderModel& m = ck.model;
  for (const auto& h : header.at("heads")) {
    const auto name = h.at("name").get<std::string>();
    const auto kind = model::head_kind_from_string(h.at("kind").get<std::string>());
    const int dim = h.at("output_dim").get<int>();
    if (kind == model::HeadKind::kMaskedTokenPrediction) {
      m.add_mlm_head();
    } else {
      m.add_classification_head(name, dim, 0);
    }
  }
  const auto params = m.all_parameters();
  const auto& directory = header.at("tensors");
  if (directory.size() != params.size()) {
    throw FormatError("checkpoint: directory lists " + std::to_string(directory.size()) + " tensors, model has " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto name = directory[i].at("name").get<std::string>();
    const auto shape = directory[i].at("shape").get<num::Shape>();
    if (name != params[i].name || shape != params[i].tensor.shape()) {
      throw FormatError("checkpoint: tensor " + std::to_string(i) + " is '" + name + "' " + num::shape_string(shape) +
                        ", expected '" + params[i].name + "' " + num::shape_string(params[i].tensor.shape()));
    }
    num::Tensor t = params[i].tensor;
    auto data = t.mutable_data();
    std::vector<unsigned char> raw(data.size() * 8);
    if (!read_exact(in, reinterpret_cast<char*>(raw.data()), raw.size())) {
      throw IntegrityError("checkpoint: payload truncated in tensor '" + name + "'");
    }
    for (std::size_t k = 0; k < data.size(); ++k) {
      std::uint64_t bits = 0;
      for (int b = 7; b >= 0; --b) bits = (bits << 8) | raw[k * 8 + static_cast<std::size_t>(b)];
      data[k] = std::bit_cast<double>(bits);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IntegrityError("checkpoint: trailing bytes after payload");
  return ck;
}

void save_checkpoint(const model::EncoderModel& m, const std::filesystem::path& path, const json& metadata) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    write_checkpoint(out, m, metadata);
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingPrerequisite("missing checkpoint: " + path.string());
  return read_checkpoint(in);
}

}  // namespace mitkd::pipeline
