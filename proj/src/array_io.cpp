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

#include "urlk/array_io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string_view>

#include <nlohmann/json.hpp>

#include "urlk/container.hpp"
#include "urlk/errors.hpp"

namespace urlk {

namespace fs = std::filesystem;

std::size_t ArrayData::numel() const {
  std::size_t n = 1;
  for (const auto d : shape) n *= d;
  return n;
}

fs::path sidecar_path(const fs::path& data_path) {
  fs::path p = data_path;
  p += ".json";
  return p;
}

ArrayData read_raw_f32(const fs::path& path) {
  static_assert(std::endian::native == std::endian::little, "raw f32 reader assumes little-endian");
  const fs::path side = sidecar_path(path);
  std::ifstream meta(side);
  if (!meta) throw FormatError("missing shape sidecar '" + side.string() + "'");
  ArrayData out;
  try {
    const auto j = nlohmann::json::parse(meta);
    out.shape = j.at("shape").get<std::vector<std::size_t>>();
    const std::string dtype = j.value("dtype", "f32");
    if (dtype != "f32") throw FormatError("sidecar dtype '" + dtype + "' is not f32");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad sidecar '" + side.string() + "': " + e.what());
  }
  if (out.shape.empty()) throw FormatError("sidecar shape is empty");
  for (const auto d : out.shape)
    if (d == 0) throw FormatError("sidecar shape has a zero dimension");

  std::error_code ec;
  const auto bytes = fs::file_size(path, ec);
  if (ec) throw FormatError("cannot read '" + path.string() + "': " + ec.message());
  if (bytes != out.numel() * 4)
    throw FormatError("'" + path.string() + "' holds " + std::to_string(bytes) +
                      " bytes, sidecar shape needs " + std::to_string(out.numel() * 4));
  std::vector<float> raw(out.numel());
  std::ifstream in(path, std::ios::binary);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw FormatError("short read in '" + path.string() + "'");
  out.values.assign(raw.begin(), raw.end());
  return out;
}

void write_raw_f32(const fs::path& path, const ArrayData& array) {
  if (array.values.size() != array.numel())
    throw DimensionError("write_raw_f32: value count does not match shape");
  std::vector<float> raw(array.values.begin(), array.values.end());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
  std::ofstream meta(sidecar_path(path), std::ios::trunc);
  meta << nlohmann::json{{"shape", array.shape}, {"dtype", "f32"}}.dump() << "\n";
  if (!out || !meta) throw FormatError("failed writing '" + path.string() + "'");
}

ArrayData read_csv_series(const fs::path& path, std::size_t batch) {
  if (batch == 0) throw FormatError("csv: batch must be >= 1");
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::vector<double> values;
  std::vector<double> row;
  std::size_t dims = 0, rows = 0, line_no = 0;
  bool header_seen = false;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    row.clear();
    bool numeric = true;
    std::stringstream ss(line);
    for (std::string cell; numeric && std::getline(ss, cell, ',');) {
      const auto first = cell.find_first_not_of(" \t");
      const auto last = cell.find_last_not_of(" \t");
      if (first == std::string::npos)
        throw FormatError("csv line " + std::to_string(line_no) + ": empty cell");
      const std::string_view text(cell.data() + first, last - first + 1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      numeric = ec == std::errc() && ptr == text.data() + text.size();
      if (numeric) row.push_back(v);
    }
    if (!numeric) {
      if (rows == 0 && !header_seen) {
        header_seen = true;
        continue;
      }
      throw FormatError("csv line " + std::to_string(line_no) + " is not numeric");
    }
    if (dims == 0) dims = row.size();
    if (row.size() != dims)
      throw FormatError("csv line " + std::to_string(line_no) + ": " + std::to_string(row.size()) +
                        " columns, expected " + std::to_string(dims));
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw FormatError("csv '" + path.string() + "' has no data rows");
  if (rows % batch != 0)
    throw FormatError("csv: " + std::to_string(rows) + " rows do not split into " +
                      std::to_string(batch) + " samples");
  return ArrayData{{batch, rows / batch, dims}, std::move(values)};
}

ArrayData read_array(const fs::path& path) {
  if (is_container(path)) {
    auto tensors = read_container(path);
    if (tensors.empty()) throw FormatError("container '" + path.string() + "' holds no tensors");
    return ArrayData{std::move(tensors.front().shape), std::move(tensors.front().values)};
  }
  return read_raw_f32(path);
}

}  // namespace urlk
