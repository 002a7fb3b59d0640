// Copyright 2026 The Weedet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "weedet/core/errors.hpp"
#include "weedet/numerics/optim.hpp"

namespace weedet::nn {

// Layout: 8-byte magic, u64 little-endian header length, UTF-8 JSON header
// {"config": ..., "tensors": [{name, shape, offset, numel}]}, then the
// float32 little-endian payloads back to back (offsets in bytes from the
// start of the payload block).
inline constexpr char kCheckpointMagic[8] = {'W', 'D', 'C', 'K', 'P', 'T', '0', '1'};

struct CheckpointTensor {
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  nlohmann::json config;
  std::vector<std::string> order;
  std::map<std::string, CheckpointTensor> tensors;
};

namespace detail {

inline void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

inline std::uint32_t get_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  nlohmann::json header = {{"config", ck.config}, {"tensors", nlohmann::json::array()}};
  std::vector<std::uint8_t> payload;
  for (const auto& name : ck.order) {
    const auto& t = ck.tensors.at(name);
    header["tensors"].push_back(
        {{"name", name}, {"shape", t.shape}, {"offset", payload.size()}, {"numel", t.data.size()}});
    for (float f : t.data) detail::put_u32_le(payload, std::bit_cast<std::uint32_t>(f));
  }
  std::string h = header.dump();
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 8);
  std::uint64_t len = h.size();
  for (int s = 0; s < 64; s += 8) out.push_back(static_cast<std::uint8_t>(len >> s));
  out.insert(out.end(), h.begin(), h.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw LoadError("not a weedet checkpoint");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[8 + i]) << (8 * i);
  if (len > bytes.size() - 16) throw LoadError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint header: ") + e.what());
  }
  const std::uint8_t* payload = bytes.data() + 16 + len;
  const std::size_t payload_size = bytes.size() - 16 - len;
  Checkpoint ck;
  ck.config = header.value("config", nlohmann::json::object());
  for (const auto& t : header.at("tensors")) {
    CheckpointTensor ct;
    std::string name = t.at("name").get<std::string>();
    ct.shape = t.at("shape").get<Shape>();
    auto offset = t.at("offset").get<std::size_t>();
    auto numel = t.at("numel").get<std::size_t>();
    if (numel != shape_numel(ct.shape)) throw LoadError("checkpoint tensor " + name + ": numel/shape mismatch");
    if (offset > payload_size || numel * 4 > payload_size - offset)
      throw LoadError("checkpoint tensor " + name + " out of bounds");
    ct.data.resize(numel);
    for (std::size_t i = 0; i < numel; ++i)
      ct.data[i] = std::bit_cast<float>(detail::get_u32_le(payload + offset + 4 * i));
    ck.order.push_back(name);
    ck.tensors.emplace(std::move(name), std::move(ct));
  }
  return ck;
}

template <typename T>
Checkpoint make_checkpoint(const ParameterList<T>& params, nlohmann::json config) {
  Checkpoint ck;
  ck.config = std::move(config);
  for (const auto& p : params) {
    CheckpointTensor t;
    t.shape = p.var.shape();
    t.data.assign(p.var.value().values().begin(), p.var.value().values().end());
    ck.order.push_back(p.name);
    ck.tensors.emplace(p.name, std::move(t));
  }
  return ck;
}

// Copies checkpoint tensors into the matching parameters. Every parameter
// must be present with an identical shape.
template <typename T>
void apply_checkpoint(const Checkpoint& ck, ParameterList<T>& params) {
  for (auto& p : params) {
    auto it = ck.tensors.find(p.name);
    if (it == ck.tensors.end()) throw LoadError("checkpoint has no tensor " + p.name);
    if (it->second.shape != p.var.shape())
      throw LoadError("checkpoint tensor " + p.name + " has shape " + shape_str(it->second.shape) + ", model expects " +
                      shape_str(p.var.shape()));
    auto& w = p.var.mutable_value();
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(it->second.data[i]);
  }
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  auto bytes = encode_checkpoint(ck);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace weedet::nn
