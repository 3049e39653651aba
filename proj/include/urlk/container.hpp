/* Copyright 2026 The urlk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Weight container, version 1:
//
//   bytes 0..7   magic "URLKWT01"
//   bytes 8..15  manifest length M, little-endian uint64
//   next M bytes UTF-8 JSON manifest
//   payload      raw little-endian IEEE-754 tensors, contiguous, in
//                manifest order, no padding
//
// Manifest: {format_version, model_name, mode,
//            tensors: [{name, shape, dtype: "f32"|"f64", byte_offset, byte_length}],
//            arch?: {...}}
// byte_offset is relative to the start of the payload.

#ifndef URLK_CONTAINER_HPP_
#define URLK_CONTAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "urlk/model.hpp"

namespace urlk {

inline constexpr char kContainerMagic[] = "URLKWT01";
inline constexpr int kContainerVersion = 1;

enum class DType { F32, F64 };

const char* to_string(DType dtype);
DType parse_dtype(const std::string& text);
std::size_t dtype_size(DType dtype);

struct TensorEntry {
  std::string name;
  std::vector<std::size_t> shape;
  DType dtype = DType::F64;
  std::uint64_t byte_offset = 0;
  std::uint64_t byte_length = 0;

  std::size_t numel() const;
};

struct Manifest {
  int format_version = kContainerVersion;
  std::string model_name;
  std::string mode;
  std::vector<TensorEntry> tensors;
  nlohmann::json arch;  // null when absent
  std::uint64_t payload_offset = 0;  // absolute file offset, not serialized

  const TensorEntry* find(const std::string& name) const;
};

// Tensor held in memory as doubles; written with its own dtype.
struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  DType dtype = DType::F64;
  std::vector<double> values;
};

void write_container(const std::filesystem::path& path, const std::string& model_name,
                     const std::string& mode, const std::vector<NamedTensor>& tensors,
                     const nlohmann::json& arch = nullptr);

// Reads and validates the header (magic, version, offsets, file size).
Manifest read_manifest(const std::filesystem::path& path);
// Whole container. FormatError on any inconsistency, before returning data.
std::vector<NamedTensor> read_container(const std::filesystem::path& path, Manifest* manifest = nullptr);

bool is_container(const std::filesystem::path& path);

nlohmann::json arch_to_json(const ArchConfig& cfg);
ArchConfig arch_from_json(const nlohmann::json& j);

// Model export / import by dotted tensor names. Import builds a fresh model
// from the manifest's arch and fills it; nothing is returned on error.
void save_model(const ModelInstance& model, const std::filesystem::path& path,
                DType dtype = DType::F64);
ModelInstance load_model(const std::filesystem::path& path);

}  // namespace urlk

#endif  // URLK_CONTAINER_HPP_
