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

// Input readers for pre-decoded arrays.
//
//   raw    little-endian f32 values in <file>, shape in <file>.json:
//          {"shape": [...], "dtype": "f32"}
//   csv    one time step per line, D comma-separated values; L B lines for
//          B samples of length L. Blank lines and '#' comments are skipped.
//   URLKWT01 containers are accepted wherever a raw array is (first tensor).

#ifndef URLK_ARRAY_IO_HPP_
#define URLK_ARRAY_IO_HPP_

#include <cstddef>
#include <filesystem>
#include <vector>

namespace urlk {

struct ArrayData {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  std::size_t numel() const;
};

std::filesystem::path sidecar_path(const std::filesystem::path& data_path);

ArrayData read_raw_f32(const std::filesystem::path& path);
void write_raw_f32(const std::filesystem::path& path, const ArrayData& array);

// Returns shape (B, L, D).
ArrayData read_csv_series(const std::filesystem::path& path, std::size_t batch = 1);

// Container or raw f32 + sidecar, chosen by magic bytes.
ArrayData read_array(const std::filesystem::path& path);

}  // namespace urlk

#endif  // URLK_ARRAY_IO_HPP_
