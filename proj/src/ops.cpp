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

#include "urlk/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "urlk/parallel.hpp"

#if defined(URLK_HAVE_OPENMP)
#include <omp.h>
#endif

namespace urlk {

int thread_count() {
  static const int count = [] {
    if (const char* env = std::getenv("URLK_THREADS")) {
      const int v = std::atoi(env);
      if (v > 0) return v;
    }
#if defined(URLK_HAVE_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
  }();
  return count;
}

namespace {

std::string pair_str(const Pair2& p) {
  return "(" + std::to_string(p.h) + ", " + std::to_string(p.w) + ")";
}

// Output columns [lo, hi) whose tap at input offset (ow * s - p + tap) is in
// bounds for an input row of width `in`.
inline void valid_range(std::size_t out, std::size_t in, std::size_t stride, std::size_t pad,
                        std::size_t tap, std::size_t& lo, std::size_t& hi) {
  // Need ow * s + tap >= pad and ow * s + tap < in + pad.
  lo = tap >= pad ? 0 : (pad - tap + stride - 1) / stride;
  const std::size_t limit = in + pad;  // exclusive bound on ow * s + tap
  if (limit <= tap) {
    hi = 0;
  } else {
    hi = std::min(out, (limit - tap - 1) / stride + 1);
  }
  if (lo > hi) lo = hi;
}

}  // namespace

template <typename T>
void BasicConvLayer<T>::validate() const {
  if (groups == 0) throw ParameterError("conv: groups must be >= 1");
  if (stride.h == 0 || stride.w == 0)
    throw ParameterError("conv: stride must be positive, got " + pair_str(stride));
  if (dilation.h == 0 || dilation.w == 0)
    throw ParameterError("conv: dilation must be positive, got " + pair_str(dilation));
  if (out_channels() % groups != 0)
    throw DimensionError("conv: c_out " + std::to_string(out_channels()) +
                         " not divisible by groups " + std::to_string(groups));
  if (bias && bias->size() != out_channels())
    throw DimensionError("conv: bias length " + std::to_string(bias->size()) +
                         " != c_out " + std::to_string(out_channels()));
}

template <typename T>
void BasicBnParams<T>::validate() const {
  const std::size_t c = gamma.size();
  if (beta.size() != c || running_mean.size() != c || running_var.size() != c)
    throw DimensionError("bn: gamma/beta/mean/var lengths differ (" + std::to_string(c) + ", " +
                         std::to_string(beta.size()) + ", " +
                         std::to_string(running_mean.size()) + ", " +
                         std::to_string(running_var.size()) + ")");
  if (!(eps > T(0))) throw ParameterError("bn: eps must be > 0");
  for (const T v : running_var)
    if (v < T(0)) throw ParameterError("bn: running_var entries must be >= 0");
}

template <typename T>
BasicBnParams<T> BasicBnParams<T>::identity(std::size_t channels, T eps) {
  BasicBnParams bn;
  bn.gamma.assign(channels, T(1));
  bn.beta.assign(channels, T(0));
  bn.running_mean.assign(channels, T(0));
  bn.running_var.assign(channels, T(1));
  bn.eps = eps;
  return bn;
}

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding, std::size_t dilation) {
  if (stride == 0 || dilation == 0 || kernel == 0)
    throw ParameterError("conv geometry: kernel, stride and dilation must be positive");
  const std::size_t span = dilation * (kernel - 1) + 1;
  const std::size_t padded = in + 2 * padding;
  if (padded < span)
    throw GeometryError("conv geometry: dilated kernel extent " + std::to_string(span) +
                        " exceeds padded input " + std::to_string(padded));
  return (padded - span) / stride + 1;
}

template <typename T>
Shape4 conv_output_shape(const Shape4& input, const BasicConvLayer<T>& layer) {
  layer.validate();
  if (input.c != layer.in_channels())
    throw DimensionError("conv2d: input has " + std::to_string(input.c) +
                         " channels, layer expects " + std::to_string(layer.in_channels()) +
                         " (groups " + std::to_string(layer.groups) + " x " +
                         std::to_string(layer.weight.c()) + ")");
  return Shape4{input.n, layer.out_channels(),
                conv_output_size(input.h, layer.kernel_h(), layer.stride.h, layer.padding.h,
                                 layer.dilation.h),
                conv_output_size(input.w, layer.kernel_w(), layer.stride.w, layer.padding.w,
                                 layer.dilation.w)};
}

// dst[p] = sum_k w[k] x[k * ldx + p] for p < count, k ascending, then + bias.
template <typename T>
void dot_rows(const T* w, const T* x, std::size_t k_count, std::size_t ldx, std::size_t count,
              const T* bias, T* dst) {
  constexpr std::size_t kTile = 16;
  std::size_t p0 = 0;
  for (; p0 + kTile <= count; p0 += kTile) {
    T acc[kTile] = {};
    for (std::size_t k = 0; k < k_count; ++k) {
      const T* xv = x + k * ldx + p0;
      for (std::size_t j = 0; j < kTile; ++j) acc[j] += w[k] * xv[j];
    }
    std::copy_n(acc, kTile, dst + p0);
  }
  if (p0 < count) {
    const std::size_t tp = count - p0;
    T acc[kTile] = {};
    for (std::size_t k = 0; k < k_count; ++k) {
      const T* xv = x + k * ldx + p0;
      for (std::size_t j = 0; j < tp; ++j) acc[j] += w[k] * xv[j];
    }
    std::copy_n(acc, tp, dst + p0);
  }
  if (bias)
    for (std::size_t i = 0; i < count; ++i) dst[i] += *bias;
}

// Dense convolution as a (c_out x c_in kh kw) by (c_in kh kw x oh ow) product.
// The column matrix holds zeros where the window leaves the input; the sum
// still runs over (ci, kh, kw) in ascending order.
template <typename T>
void dense_conv(const BasicTensor4<T>& input, const BasicConvLayer<T>& layer, BasicTensor4<T>& out) {
  const std::size_t cin = input.c(), cout = out.c(), hw = out.shape().plane();
  const std::size_t kh = layer.kernel_h(), kw = layer.kernel_w();
  const std::size_t k_count = cin * kh * kw;
  const bool pointwise = kh == 1 && kw == 1 && layer.stride.h == 1 && layer.stride.w == 1 &&
                         layer.padding.h == 0 && layer.padding.w == 0;
  std::vector<T> cols;
  if (!pointwise) {
    cols.assign(input.n() * k_count * hw, T(0));
    const auto& st = layer.stride;
    const auto& pd = layer.padding;
    const auto& dl = layer.dilation;
    parallel_for(input.n() * cin, [&](std::size_t job) {
      const std::size_t n = job / cin, ci = job % cin;
      const T* src = input.plane(n, ci);
      for (std::size_t y = 0; y < kh; ++y)
        for (std::size_t x = 0; x < kw; ++x) {
          T* row = cols.data() + (n * k_count + (ci * kh + y) * kw + x) * hw;
          for (std::size_t oy = 0; oy < out.h(); ++oy) {
            const std::size_t iy = oy * st.h + y * dl.h;
            if (iy < pd.h || iy >= input.h() + pd.h) continue;
            for (std::size_t ox = 0; ox < out.w(); ++ox) {
              const std::size_t ix = ox * st.w + x * dl.w;
              if (ix < pd.w || ix >= input.w() + pd.w) continue;
              row[oy * out.w() + ox] = src[(iy - pd.h) * input.w() + (ix - pd.w)];
            }
          }
        }
    });
  }
  parallel_for(out.n() * cout, [&](std::size_t job) {
    const std::size_t n = job / cout, o = job % cout;
    const T* x = pointwise ? input.plane(n, 0) : cols.data() + n * k_count * hw;
    const T* bias = layer.bias ? layer.bias->data() + o : nullptr;
    dot_rows(layer.weight.data().data() + o * k_count, x, k_count, hw, hw, bias, out.plane(n, o));
  });
}

template <typename T>
BasicTensor4<T> conv2d(const BasicTensor4<T>& input, const BasicConvLayer<T>& layer) {
  const Shape4 os = conv_output_shape(input.shape(), layer);
  BasicTensor4<T> out(os);
  if (layer.groups == 1) {
    dense_conv(input, layer, out);
    return out;
  }

  const std::size_t cout_per_group = layer.out_channels() / layer.groups;
  const std::size_t cin_per_group = layer.weight.c();
  const std::size_t kh = layer.kernel_h(), kw = layer.kernel_w();
  const std::size_t ih_n = input.h(), iw_n = input.w();
  const auto& st = layer.stride;
  const auto& pd = layer.padding;
  const auto& dl = layer.dilation;

  // Column ranges depend only on the kernel column; precompute them.
  std::vector<std::size_t> col_lo(kw), col_hi(kw);
  for (std::size_t x = 0; x < kw; ++x)
    valid_range(os.w, iw_n, st.w, pd.w, x * dl.w, col_lo[x], col_hi[x]);

  parallel_for(os.n * os.c, [&](std::size_t job) {
    const std::size_t n = job / os.c;
    const std::size_t o = job % os.c;
    const std::size_t g = o / cout_per_group;
    T* dst = out.plane(n, o);
    for (std::size_t ci = 0; ci < cin_per_group; ++ci) {
      const T* src = input.plane(n, g * cin_per_group + ci);
      for (std::size_t y = 0; y < kh; ++y) {
        const std::size_t ty = y * dl.h;
        for (std::size_t x = 0; x < kw; ++x) {
          const T wv = layer.weight(o, ci, y, x);
          const std::size_t lo = col_lo[x], hi = col_hi[x];
          if (lo >= hi) continue;
          const std::size_t tx = x * dl.w;
          for (std::size_t oy = 0; oy < os.h; ++oy) {
            const std::size_t iy_p = oy * st.h + ty;  // padded row index
            if (iy_p < pd.h || iy_p >= ih_n + pd.h) continue;
            const T* srow = src + (iy_p - pd.h) * iw_n;
            T* drow = dst + oy * os.w;
            if (st.w == 1) {
              const T* s = srow + (lo + tx - pd.w);
              for (std::size_t ox = lo; ox < hi; ++ox) drow[ox] += wv * s[ox - lo];
            } else {
              for (std::size_t ox = lo; ox < hi; ++ox)
                drow[ox] += wv * srow[ox * st.w + tx - pd.w];
            }
          }
        }
      }
    }
    if (layer.bias) {
      const T b = (*layer.bias)[o];
      for (std::size_t i = 0; i < os.h * os.w; ++i) dst[i] += b;
    }
  });
  return out;
}

template <typename T>
BasicTensor4<T> conv_transpose2d_kernel(const BasicTensor4<T>& weight, std::size_t stride) {
  if (stride < 1) throw ParameterError("conv_transpose2d_kernel: stride must be >= 1");
  if (weight.c() != 1)
    throw DimensionError("conv_transpose2d_kernel: expected (m, 1, k, k) slice, got " +
                         weight.shape().str());
  const std::size_t kh = weight.h(), kw = weight.w();
  const Shape4 os{weight.n(), 1, (kh - 1) * stride + 1, (kw - 1) * stride + 1};
  BasicTensor4<T> out(os);
  // Transposed conv with a 1x1 kernel of value 1: every input entry scatters
  // to (i * stride, j * stride) and nothing overlaps.
  constexpr T identity = T(1);
  for (std::size_t m = 0; m < weight.n(); ++m)
    for (std::size_t i = 0; i < kh; ++i)
      for (std::size_t j = 0; j < kw; ++j) out(m, 0, i * stride, j * stride) += weight(m, 0, i, j) * identity;
  return out;
}

template <typename T>
BasicTensor4<T> batchnorm_infer(const BasicTensor4<T>& input, const BasicBnParams<T>& bn) {
  bn.validate();
  if (bn.channels() != input.c())
    throw DimensionError("batchnorm: input has " + std::to_string(input.c()) +
                         " channels, bn has " + std::to_string(bn.channels()));
  BasicTensor4<T> out(input.shape());
  const std::size_t plane = input.shape().plane();
  for (std::size_t n = 0; n < input.n(); ++n)
    for (std::size_t c = 0; c < input.c(); ++c) {
      const T mean = bn.running_mean[c];
      const T inv = T(1) / std::sqrt(bn.running_var[c] + bn.eps);
      const T g = bn.gamma[c], b = bn.beta[c];
      const T* src = input.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - mean) * inv * g + b;
    }
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace {
template <typename Fn>
Tensor4 map(const Tensor4& x, Fn fn) {
  Tensor4 out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
  return out;
}
}  // namespace

Tensor4 relu(const Tensor4& x) {
  return map(x, [](double v) { return v > 0.0 ? v : 0.0; });
}
Tensor4 gelu(const Tensor4& x) {
  return map(x, [](double v) { return gelu(v); });
}
Tensor4 sigmoid(const Tensor4& x) {
  return map(x, [](double v) { return sigmoid(v); });
}

Tensor4 global_avg_pool(const Tensor4& x) {
  Tensor4 out(Shape4{x.n(), x.c(), 1, 1});
  const std::size_t plane = x.shape().plane();
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c) {
      const double* p = x.plane(n, c);
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      out(n, c, 0, 0) = s / static_cast<double>(plane);
    }
  return out;
}

void Linear::validate() const {
  if (weight.size() != in_features * out_features)
    throw DimensionError("linear: weight length " + std::to_string(weight.size()) + " != " +
                         std::to_string(out_features) + " x " + std::to_string(in_features));
  if (!bias.empty() && bias.size() != out_features)
    throw DimensionError("linear: bias length " + std::to_string(bias.size()) +
                         " != out_features " + std::to_string(out_features));
}

std::vector<double> linear(std::span<const double> x, const Linear& map) {
  return linear_rows(x, 1, map);
}

std::vector<double> linear_rows(std::span<const double> x, std::size_t rows, const Linear& map) {
  map.validate();
  if (x.size() != rows * map.in_features)
    throw DimensionError("linear: input length " + std::to_string(x.size()) + " != " +
                         std::to_string(rows) + " x " + std::to_string(map.in_features));
  std::vector<double> out(rows * map.out_features);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * map.in_features;
    for (std::size_t o = 0; o < map.out_features; ++o) {
      const double* wr = map.weight.data() + o * map.in_features;
      double s = 0.0;
      for (std::size_t i = 0; i < map.in_features; ++i) s += wr[i] * xr[i];
      if (!map.bias.empty()) s += map.bias[o];
      out[r * map.out_features + o] = s;
    }
  }
  return out;
}

Tensor4 grn(const Tensor4& x, std::span<const double> gamma, std::span<const double> beta,
            double eps) {
  if (gamma.size() != x.c() || beta.size() != x.c())
    throw DimensionError("grn: gamma/beta length " + std::to_string(gamma.size()) + "/" +
                         std::to_string(beta.size()) + " != channels " + std::to_string(x.c()));
  Tensor4 out(x.shape());
  const std::size_t plane = x.shape().plane();
  std::vector<double> norms(x.c());
  for (std::size_t n = 0; n < x.n(); ++n) {
    double mean = 0.0;
    for (std::size_t c = 0; c < x.c(); ++c) {
      const double* p = x.plane(n, c);
      double ss = 0.0;
      for (std::size_t i = 0; i < plane; ++i) ss += p[i] * p[i];
      norms[c] = std::sqrt(ss);
      mean += norms[c];
    }
    mean /= static_cast<double>(x.c());
    for (std::size_t c = 0; c < x.c(); ++c) {
      const double nx = norms[c] / (mean + eps);
      const double* src = x.plane(n, c);
      double* dst = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i)
        dst[i] = gamma[c] * (src[i] * nx) + beta[c] + src[i];
    }
  }
  return out;
}

template <typename T>
BasicTensor4<T> add(const BasicTensor4<T>& a, const BasicTensor4<T>& b) {
  if (!(a.shape() == b.shape()))
    throw DimensionError("add: shape " + a.shape().str() + " vs " + b.shape().str());
  BasicTensor4<T> out(a.shape());
  auto pa = a.data(), pb = b.data();
  auto po = out.data();
  for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] + pb[i];
  return out;
}

Tensor4 scale_channels(const Tensor4& x, std::span<const double> gate) {
  if (gate.size() != x.n() * x.c())
    throw DimensionError("scale_channels: gate length " + std::to_string(gate.size()) +
                         " != n * c = " + std::to_string(x.n() * x.c()));
  Tensor4 out(x.shape());
  const std::size_t plane = x.shape().plane();
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c) {
      const double s = gate[n * x.c() + c];
      const double* src = x.plane(n, c);
      double* dst = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * s;
    }
  return out;
}

template <typename T>
double relative_l1_error(std::span<const T> a, std::span<const T> reference) {
  if (a.size() != reference.size())
    throw DimensionError("relative_l1_error: length " + std::to_string(a.size()) + " vs " +
                         std::to_string(reference.size()));
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += std::abs(static_cast<double>(a[i]) - static_cast<double>(reference[i]));
    norm += std::abs(static_cast<double>(reference[i]));
  }
  if (norm == 0.0) return diff == 0.0 ? 0.0 : diff;
  return diff / norm;
}

#define URLK_INSTANTIATE_OPS(T)                                                            \
  template struct BasicConvLayer<T>;                                                       \
  template struct BasicBnParams<T>;                                                        \
  template Shape4 conv_output_shape<T>(const Shape4&, const BasicConvLayer<T>&);          \
  template BasicTensor4<T> conv2d<T>(const BasicTensor4<T>&, const BasicConvLayer<T>&);   \
  template BasicTensor4<T> conv_transpose2d_kernel<T>(const BasicTensor4<T>&, std::size_t); \
  template BasicTensor4<T> batchnorm_infer<T>(const BasicTensor4<T>&, const BasicBnParams<T>&); \
  template BasicTensor4<T> add<T>(const BasicTensor4<T>&, const BasicTensor4<T>&);        \
  template double relative_l1_error<T>(std::span<const T>, std::span<const T>);

URLK_INSTANTIATE_OPS(float)
URLK_INSTANTIATE_OPS(double)

#undef URLK_INSTANTIATE_OPS

}  // namespace urlk
