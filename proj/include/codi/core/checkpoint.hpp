// Copyright 2026 The codi-iqa Authors. All rights reserved.
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

// Checkpoint container.
//
//   bytes 0-7    magic "CODICKPT"
//   u32          container format version (kCheckpointFormatVersion)
//   u64          manifest length M
//   M bytes      UTF-8 JSON manifest
//   payload      tensors back to back, little-endian, dtype from the manifest
//   u64          FNV-1a 64 over every preceding byte
//
// The manifest carries "dtype" ("float32" | "float64"), "format_version",
// and a "tensors" array of {name, shape, offset, numel}; callers add their
// own fields (provenance, backbone_id, normalization, ...).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "codi/core/tensor.hpp"

namespace codi {

inline constexpr uint32_t kCheckpointFormatVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'C', 'O', 'D', 'I', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

struct Checkpoint {
  nlohmann::json manifest = nlohmann::json::object();
  std::map<std::string, Tensor<double>> tensors;
  std::string dtype = "float32";
};

namespace detail {

inline uint64_t fnv1a_bytes(const std::string& bytes, size_t n) {
  uint64_t h = 1469598103934665603ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(bytes[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename U>
void append_pod(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U read_pod(const std::string& in, size_t at) {
  U v;
  std::memcpy(&v, in.data() + at, sizeof(U));
  return v;
}

}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  require<ConfigError>(ckpt.dtype == "float32" || ckpt.dtype == "float64", "unsupported checkpoint dtype '",
                       ckpt.dtype, "'");
  const size_t width = ckpt.dtype == "float32" ? 4 : 8;
  nlohmann::json manifest = ckpt.manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["dtype"] = ckpt.dtype;
  nlohmann::json entries = nlohmann::json::array();
  int64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"numel", t.numel()}});
    offset += t.numel() * static_cast<int64_t>(width);
  }
  manifest["tensors"] = entries;
  const std::string text = manifest.dump();

  std::string out(kCheckpointMagic, 8);
  detail::append_pod<uint32_t>(out, kCheckpointFormatVersion);
  detail::append_pod<uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + static_cast<size_t>(offset) + 8);
  for (const auto& [name, t] : ckpt.tensors) {
    for (double v : t.values()) {
      if (width == 4)
        detail::append_pod<float>(out, static_cast<float>(v));
      else
        detail::append_pod<double>(out, v);
    }
  }
  detail::append_pod<uint64_t>(out, detail::fnv1a_bytes(out, out.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".partial";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require<IoError>(static_cast<bool>(f), "cannot open '", tmp, "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    require<IoError>(static_cast<bool>(f), "short write to '", tmp, "'");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require<IoError>(static_cast<bool>(f), "cannot open checkpoint '", path.string(), "'");
  std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint '" + path.string() + "'";

  require<CorruptCheckpointError>(in.size() >= 28 && std::memcmp(in.data(), kCheckpointMagic, 8) == 0, where,
                                  " has no container header");
  const auto version = detail::read_pod<uint32_t>(in, 8);
  require<VersionError>(version == kCheckpointFormatVersion, where, " has format version ", version,
                        ", this build reads version ", kCheckpointFormatVersion);
  const auto stored_hash = detail::read_pod<uint64_t>(in, in.size() - 8);
  require<CorruptCheckpointError>(stored_hash == detail::fnv1a_bytes(in, in.size() - 8), where,
                                  " failed its checksum");
  const auto mlen = detail::read_pod<uint64_t>(in, 12);
  require<CorruptCheckpointError>(20 + mlen <= in.size() - 8, where, " manifest overruns the file");

  Checkpoint ckpt;
  try {
    ckpt.manifest = nlohmann::json::parse(in.substr(20, mlen));
    ckpt.dtype = ckpt.manifest.at("dtype").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    raise<CorruptCheckpointError>(where, " manifest is unreadable: ", e.what());
  }
  require<CorruptCheckpointError>(ckpt.dtype == "float32" || ckpt.dtype == "float64", where,
                                  " has unknown dtype");
  const size_t width = ckpt.dtype == "float32" ? 4 : 8;
  const size_t payload = 20 + mlen, payload_end = in.size() - 8;
  try {
    for (const auto& e : ckpt.manifest.at("tensors")) {
      Shape shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<int64_t>();
      const auto numel = e.at("numel").get<int64_t>();
      require<CorruptCheckpointError>(numel == shape_numel(shape) && offset >= 0 &&
                                          payload + static_cast<size_t>(offset + numel * static_cast<int64_t>(width)) <=
                                              payload_end,
                                      where, " tensor table is inconsistent");
      Tensor<double> t(std::move(shape));
      const size_t base = payload + static_cast<size_t>(offset);
      for (int64_t i = 0; i < numel; ++i)
        t[i] = width == 4 ? static_cast<double>(detail::read_pod<float>(in, base + static_cast<size_t>(i) * 4))
                          : detail::read_pod<double>(in, base + static_cast<size_t>(i) * 8);
      ckpt.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    raise<CorruptCheckpointError>(where, " tensor table is unreadable: ", e.what());
  }
  ckpt.manifest.erase("tensors");
  return ckpt;
}

}  // namespace codi
