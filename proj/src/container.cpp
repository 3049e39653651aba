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

#include "urlk/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <span>
#include <unordered_map>

namespace urlk {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(DType dtype) { return dtype == DType::F32 ? "f32" : "f64"; }

DType parse_dtype(const std::string& text) {
  if (text == "f32") return DType::F32;
  if (text == "f64") return DType::F64;
  throw FormatError("unknown dtype '" + text + "' (expected f32 or f64)");
}

std::size_t dtype_size(DType dtype) { return dtype == DType::F32 ? 4 : 8; }

std::size_t TensorEntry::numel() const {
  std::size_t n = 1;
  for (const std::size_t d : shape) n *= d;
  return n;
}

const TensorEntry* Manifest::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

namespace {

constexpr std::size_t kMagicSize = 8;
constexpr std::size_t kHeaderSize = kMagicSize + 8;

template <typename U>
U to_le(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out{};
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (std::size_t i = 0; i < sizeof(U); ++i) dst[i] = src[sizeof(U) - 1 - i];
    return out;
  } else {
    return v;
  }
}

// Encodes values as little-endian f32/f64 into out.
void encode(std::span<const double> values, DType dtype, std::string& out) {
  const std::size_t width = dtype_size(dtype);
  out.resize(values.size() * width);
  char* p = out.data();
  for (const double v : values) {
    if (dtype == DType::F32) {
      const auto bits = to_le(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      std::memcpy(p, &bits, 4);
    } else {
      const auto bits = to_le(std::bit_cast<std::uint64_t>(v));
      std::memcpy(p, &bits, 8);
    }
    p += width;
  }
}

void decode(const char* bytes, DType dtype, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (dtype == DType::F32) {
      std::uint32_t bits;
      std::memcpy(&bits, bytes + 4 * i, 4);
      out[i] = static_cast<double>(std::bit_cast<float>(to_le(bits)));
    } else {
      std::uint64_t bits;
      std::memcpy(&bits, bytes + 8 * i, 8);
      out[i] = std::bit_cast<double>(to_le(bits));
    }
  }
}

json entry_json(const TensorEntry& e) {
  return json{{"name", e.name},
              {"shape", e.shape},
              {"dtype", to_string(e.dtype)},
              {"byte_offset", e.byte_offset},
              {"byte_length", e.byte_length}};
}

// Writes header + manifest, leaving the stream positioned at the payload.
class ContainerWriter {
 public:
  ContainerWriter(const fs::path& path, const std::string& model_name, const std::string& mode,
                  const std::vector<TensorEntry>& entries, const json& arch)
      : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw FormatError("cannot open '" + path.string() + "' for writing");
    json manifest{{"format_version", kContainerVersion},
                  {"model_name", model_name},
                  {"mode", mode},
                  {"tensors", json::array()}};
    for (const auto& e : entries) manifest["tensors"].push_back(entry_json(e));
    if (!arch.is_null()) manifest["arch"] = arch;
    const std::string text = manifest.dump();
    out_.write(kContainerMagic, kMagicSize);
    const auto len = to_le(static_cast<std::uint64_t>(text.size()));
    out_.write(reinterpret_cast<const char*>(&len), 8);
    out_.write(text.data(), static_cast<std::streamsize>(text.size()));
  }

  void write(std::span<const double> values, DType dtype) {
    encode(values, dtype, buffer_);
    out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  }

  void close(const fs::path& path) {
    out_.close();
    if (!out_) throw FormatError("failed writing '" + path.string() + "'");
  }

 private:
  std::ofstream out_;
  std::string buffer_;
};

std::vector<TensorEntry> layout(std::vector<TensorEntry> entries) {
  std::uint64_t offset = 0;
  for (auto& e : entries) {
    e.byte_offset = offset;
    e.byte_length = e.numel() * dtype_size(e.dtype);
    offset += e.byte_length;
  }
  return entries;
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw FormatError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(where + ": bad field '" + key + "': " + e.what());
  }
}

}  // namespace

void write_container(const fs::path& path, const std::string& model_name, const std::string& mode,
                     const std::vector<NamedTensor>& tensors, const json& arch) {
  std::vector<TensorEntry> entries;
  for (const auto& t : tensors) {
    TensorEntry e{t.name, t.shape, t.dtype, 0, 0};
    if (e.numel() != t.values.size())
      throw DimensionError("tensor '" + t.name + "' has " + std::to_string(t.values.size()) +
                           " values but its shape holds " + std::to_string(e.numel()));
    entries.push_back(std::move(e));
  }
  ContainerWriter writer(path, model_name, mode, layout(std::move(entries)), arch);
  for (const auto& t : tensors) writer.write(t.values, t.dtype);
  writer.close(path);
}

bool is_container(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[kMagicSize] = {};
  in.read(magic, kMagicSize);
  return in.gcount() == static_cast<std::streamsize>(kMagicSize) &&
         std::memcmp(magic, kContainerMagic, kMagicSize) == 0;
}

Manifest read_manifest(const fs::path& path) {
  std::error_code ec;
  const auto file_size = fs::file_size(path, ec);
  if (ec) throw FormatError("cannot read '" + path.string() + "': " + ec.message());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  if (file_size < kHeaderSize) throw FormatError("'" + path.string() + "' is truncated (no header)");

  char magic[kMagicSize];
  in.read(magic, kMagicSize);
  if (std::memcmp(magic, kContainerMagic, kMagicSize) != 0)
    throw FormatError("'" + path.string() + "' is not a URLKWT01 container (bad magic)");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  len = to_le(len);
  if (len > file_size - kHeaderSize)
    throw FormatError("'" + path.string() + "' is truncated inside the manifest");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));

  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("manifest is not valid JSON: " + std::string(e.what()));
  }
  Manifest m;
  m.format_version = field<int>(j, "format_version", "manifest");
  if (m.format_version != kContainerVersion)
    throw FormatError("unsupported container format_version " + std::to_string(m.format_version));
  m.model_name = field<std::string>(j, "model_name", "manifest");
  m.mode = field<std::string>(j, "mode", "manifest");
  if (j.contains("arch")) m.arch = j["arch"];
  m.payload_offset = kHeaderSize + len;

  std::uint64_t expected = 0;
  for (const auto& t : field<json>(j, "tensors", "manifest")) {
    TensorEntry e;
    e.name = field<std::string>(t, "name", "tensor entry");
    const std::string where = "tensor '" + e.name + "'";
    e.shape = field<std::vector<std::size_t>>(t, "shape", where);
    e.dtype = parse_dtype(field<std::string>(t, "dtype", where));
    e.byte_offset = field<std::uint64_t>(t, "byte_offset", where);
    e.byte_length = field<std::uint64_t>(t, "byte_length", where);
    if (std::find(e.shape.begin(), e.shape.end(), 0) != e.shape.end())
      throw FormatError(where + ": zero-sized dimension");
    if (e.byte_length != e.numel() * dtype_size(e.dtype))
      throw FormatError(where + ": byte_length " + std::to_string(e.byte_length) +
                        " does not match shape and dtype");
    if (e.byte_offset != expected)
      throw FormatError(where + ": byte_offset " + std::to_string(e.byte_offset) +
                        ", expected contiguous offset " + std::to_string(expected));
    expected += e.byte_length;
    m.tensors.push_back(std::move(e));
  }
  if (file_size != m.payload_offset + expected)
    throw FormatError("'" + path.string() + "' payload is " +
                      std::to_string(file_size - m.payload_offset) + " bytes, manifest declares " +
                      std::to_string(expected) + (file_size < m.payload_offset + expected
                                                      ? " (truncated)"
                                                      : " (trailing bytes)"));
  return m;
}

std::vector<NamedTensor> read_container(const fs::path& path, Manifest* manifest) {
  const Manifest m = read_manifest(path);
  std::ifstream in(path, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(m.payload_offset));
  std::vector<NamedTensor> out;
  std::string buffer;
  for (const auto& e : m.tensors) {
    NamedTensor t{e.name, e.shape, e.dtype, std::vector<double>(e.numel())};
    buffer.resize(e.byte_length);
    in.read(buffer.data(), static_cast<std::streamsize>(e.byte_length));
    if (!in) throw FormatError("short read in tensor '" + e.name + "'");
    decode(buffer.data(), e.dtype, t.values);
    out.push_back(std::move(t));
  }
  if (manifest) *manifest = m;
  return out;
}

json arch_to_json(const ArchConfig& cfg) {
  json branches = json::array();
  for (const auto& b : cfg.reparam_branches) branches.push_back({b.kernel, b.dilation});
  return json{{"name", cfg.name},
              {"depths", cfg.depths},
              {"stage3_lark", cfg.stage3_lark},
              {"stage3_smak", cfg.stage3_smak},
              {"width", cfg.width},
              {"in_channels", cfg.in_channels},
              {"num_classes", cfg.num_classes},
              {"large_kernel", cfg.large_kernel},
              {"reparam_branches", branches}};
}

ArchConfig arch_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("arch section missing or not an object");
  ArchConfig cfg;
  cfg.name = field<std::string>(j, "name", "arch");
  cfg.depths = field<std::array<std::size_t, kNumStages>>(j, "depths", "arch");
  cfg.stage3_lark = field<std::size_t>(j, "stage3_lark", "arch");
  cfg.stage3_smak = field<std::size_t>(j, "stage3_smak", "arch");
  cfg.width = field<std::size_t>(j, "width", "arch");
  cfg.in_channels = field<std::size_t>(j, "in_channels", "arch");
  cfg.num_classes = field<std::size_t>(j, "num_classes", "arch");
  cfg.large_kernel = field<std::size_t>(j, "large_kernel", "arch");
  cfg.reparam_branches.clear();
  for (const auto& b : field<json>(j, "reparam_branches", "arch")) {
    if (!b.is_array() || b.size() != 2) throw FormatError("arch: reparam branch must be [k, r]");
    cfg.reparam_branches.push_back({b[0].get<std::size_t>(), b[1].get<std::size_t>()});
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("arch section invalid: ") + e.what());
  }
  return cfg;
}

void save_model(const ModelInstance& model, const fs::path& path, DType dtype) {
  std::vector<TensorEntry> entries;
  visit_model(model, [&](const std::string& name, const TensorShape& shape, auto, bool) {
    entries.push_back({name, shape, dtype, 0, 0});
  });
  ContainerWriter writer(path, model.config.name, to_string(model.mode), layout(std::move(entries)),
                         arch_to_json(model.config));
  visit_model(model, [&](const std::string&, const TensorShape&, auto data, bool) {
    writer.write(std::span<const double>(data.data(), data.size()), dtype);
  });
  writer.close(path);
}

ModelInstance load_model(const fs::path& path) {
  const Manifest m = read_manifest(path);
  const ArchConfig cfg = arch_from_json(m.arch);
  Mode mode;
  try {
    mode = parse_mode(m.mode);
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  ModelInstance model = build_model(cfg, 0, InitOptions{.skeleton = true});
  if (mode == Mode::Merged) model = merge_for_deploy(std::move(model));

  std::unordered_map<std::string, const TensorEntry*> index;
  for (const auto& e : m.tensors)
    if (!index.emplace(e.name, &e).second) throw FormatError("duplicate tensor '" + e.name + "'");

  std::ifstream in(path, std::ios::binary);
  std::string buffer;
  std::size_t matched = 0;
  visit_model(model, [&](const std::string& name, const TensorShape& shape, std::span<double> data,
                         bool) {
    const auto it = index.find(name);
    if (it == index.end()) throw FormatError("container is missing tensor '" + name + "'");
    const TensorEntry& e = *it->second;
    if (e.shape != shape) {
      std::string want, got;
      for (auto d : shape) want += std::to_string(d) + " ";
      for (auto d : e.shape) got += std::to_string(d) + " ";
      throw FormatError("tensor '" + name + "' has shape [ " + got + "] in the manifest, model needs [ " +
                        want + "]");
    }
    buffer.resize(e.byte_length);
    in.seekg(static_cast<std::streamoff>(m.payload_offset + e.byte_offset));
    in.read(buffer.data(), static_cast<std::streamsize>(e.byte_length));
    if (!in) throw FormatError("short read in tensor '" + name + "'");
    decode(buffer.data(), e.dtype, data);
    ++matched;
  });
  if (matched != m.tensors.size())
    throw FormatError("container holds " + std::to_string(m.tensors.size() - matched) +
                      " tensors the model does not use");
  return model;
}

}  // namespace urlk
