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

#ifndef URLK_RANDOM_HPP_
#define URLK_RANDOM_HPP_

#include <cstdint>
#include <random>
#include <span>

#include "urlk/tensor.hpp"

namespace urlk {

// Seeded generator with a portable output sequence. std::mt19937_64 is fully
// specified by the standard; the distributions below are written out here
// because the std:: ones are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) { return bound == 0 ? 0 : engine_() % bound; }
  double normal();
  // Normal(0, std) resampled until it falls within +-2 std.
  double truncated_normal(double std);

  template <typename T>
  void fill_uniform(std::span<T> out, double lo, double hi) {
    for (auto& v : out) v = static_cast<T>(uniform(lo, hi));
  }
  template <typename T>
  void fill_normal(std::span<T> out, double std) {
    for (auto& v : out) v = static_cast<T>(normal() * std);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

template <typename T = double>
BasicTensor4<T> random_tensor(Shape4 shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor4<T> t(shape);
  rng.fill_uniform(t.data(), lo, hi);
  return t;
}

}  // namespace urlk

#endif  // URLK_RANDOM_HPP_
