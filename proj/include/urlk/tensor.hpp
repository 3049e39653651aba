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

#ifndef URLK_TENSOR_HPP_
#define URLK_TENSOR_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "urlk/errors.hpp"

namespace urlk {

struct Shape4 {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

// Dense (n, c, h, w) array, row-major. Element width is the template
// argument: double is the reference type, float backs the 32-bit paths.
template <typename T>
class BasicTensor4 {
 public:
  using value_type = T;

  BasicTensor4() = default;
  explicit BasicTensor4(Shape4 shape, T fill = T(0)) : shape_(shape) {
    check_shape(shape);
    data_.assign(shape.numel(), fill);
  }
  BasicTensor4(Shape4 shape, std::vector<T> data)
      : shape_(shape), data_(std::move(data)) {
    check_shape(shape);
    if (data_.size() != shape.numel())
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape.str());
  }

  const Shape4& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[offset(n, c, h, w)];
  }
  const T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(n, c, h, w)];
  }

  // Pointer to the (n, c) spatial plane.
  T* plane(std::size_t n, std::size_t c) { return data_.data() + offset(n, c, 0, 0); }
  const T* plane(std::size_t n, std::size_t c) const { return data_.data() + offset(n, c, 0, 0); }

  // Same data, new shape with identical element count.
  BasicTensor4 reshaped(Shape4 shape) const& { return BasicTensor4(shape, data_); }
  BasicTensor4 reshaped(Shape4 shape) && { return BasicTensor4(shape, std::move(data_)); }

  template <typename U>
  BasicTensor4<U> cast() const {
    return BasicTensor4<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const BasicTensor4&) const = default;

 private:
  static void check_shape(const Shape4& s) {
    if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0)
      throw DimensionError("tensor dimensions must be >= 1, got " + s.str());
  }

  Shape4 shape_{};
  std::vector<T> data_;
};

using Tensor4 = BasicTensor4<double>;
using Tensor4f = BasicTensor4<float>;

inline std::string Shape4::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + ")";
}

}  // namespace urlk

#endif  // URLK_TENSOR_HPP_
