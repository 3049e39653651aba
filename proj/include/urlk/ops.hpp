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

// Numeric primitives shared by every layer of the engine: dilated/grouped
// convolution, inference batch-norm, activations, pooling, linear maps and
// GRN. All functions are pure.
//
// Convolution accumulates each output element over (input channel,
// kernel row, kernel col) in ascending order starting from zero, then adds
// the bias. Parallel execution splits work over (batch, output channel)
// only, so results are bitwise identical for any thread count.

#ifndef URLK_OPS_HPP_
#define URLK_OPS_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "urlk/tensor.hpp"

namespace urlk {

struct Pair2 {
  std::size_t h = 1;
  std::size_t w = 1;
  bool operator==(const Pair2&) const = default;
};

template <typename T>
struct BasicConvLayer {
  BasicTensor4<T> weight;  // (c_out, c_in / groups, k_h, k_w)
  std::optional<std::vector<T>> bias;
  Pair2 stride{1, 1};
  Pair2 padding{0, 0};
  Pair2 dilation{1, 1};
  std::size_t groups = 1;

  std::size_t out_channels() const { return weight.n(); }
  std::size_t in_channels() const { return weight.c() * groups; }
  std::size_t kernel_h() const { return weight.h(); }
  std::size_t kernel_w() const { return weight.w(); }
  bool depthwise() const { return groups == in_channels() && groups == out_channels(); }

  // Throws ParameterError / DimensionError on broken invariants.
  void validate() const;
};

template <typename T>
struct BasicBnParams {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T eps = T(1e-5);

  std::size_t channels() const { return gamma.size(); }
  void validate() const;

  // gamma = 1, beta = 0, mean = 0, var = 1.
  static BasicBnParams identity(std::size_t channels, T eps = T(1e-5));
};

using ConvLayer = BasicConvLayer<double>;
using ConvLayerF = BasicConvLayer<float>;
using BnParams = BasicBnParams<double>;
using BnParamsF = BasicBnParams<float>;

// out = floor((in + 2 p - r (k - 1) - 1) / s) + 1; GeometryError if < 1.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding, std::size_t dilation);

template <typename T>
Shape4 conv_output_shape(const Shape4& input, const BasicConvLayer<T>& layer);

template <typename T>
BasicTensor4<T> conv2d(const BasicTensor4<T>& input, const BasicConvLayer<T>& layer);

// Transposed convolution of a (m, 1, k_h, k_w) kernel stack with the 1x1
// identity kernel at stride r. Entry (i, j) lands on (i r, j r); everything
// else is zero.
template <typename T>
BasicTensor4<T> conv_transpose2d_kernel(const BasicTensor4<T>& weight, std::size_t stride);

template <typename T>
BasicTensor4<T> batchnorm_infer(const BasicTensor4<T>& input, const BasicBnParams<T>& bn);

Tensor4 relu(const Tensor4& x);
// Exact form 0.5 x (1 + erf(x / sqrt(2))).
Tensor4 gelu(const Tensor4& x);
Tensor4 sigmoid(const Tensor4& x);
double gelu(double x);
double sigmoid(double x);

// (n, c, h, w) -> (n, c, 1, 1) spatial mean.
Tensor4 global_avg_pool(const Tensor4& x);

struct Linear {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  std::vector<double> weight;  // (out, in) row-major
  std::vector<double> bias;    // empty or length out

  void validate() const;
};

std::vector<double> linear(std::span<const double> x, const Linear& map);
// Row-wise application to a (rows, in) row-major matrix.
std::vector<double> linear_rows(std::span<const double> x, std::size_t rows, const Linear& map);

inline constexpr double kGrnEps = 1e-6;

// Global response normalization: G_c = ||x_c||_2 over space,
// N_c = G_c / (mean_c G + eps), y = gamma (x N) + beta + x.
Tensor4 grn(const Tensor4& x, std::span<const double> gamma, std::span<const double> beta,
            double eps = kGrnEps);

template <typename T>
BasicTensor4<T> add(const BasicTensor4<T>& a, const BasicTensor4<T>& b);

// Channel-wise scale of each (n, c) plane by gate[n * C + c].
Tensor4 scale_channels(const Tensor4& x, std::span<const double> gate);

// sum |a - b| / sum |b|, the equivalence metric used across the project.
template <typename T>
double relative_l1_error(std::span<const T> a, std::span<const T> reference);

template <typename T>
double relative_l1_error(const BasicTensor4<T>& a, const BasicTensor4<T>& reference) {
  if (!(a.shape() == reference.shape()))
    throw DimensionError("relative_l1_error: shape " + a.shape().str() + " vs " +
                         reference.shape().str());
  return relative_l1_error<T>(a.data(), reference.data());
}

}  // namespace urlk

#endif  // URLK_OPS_HPP_
