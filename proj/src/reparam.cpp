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

#include "urlk/reparam.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace urlk {

namespace {

std::string geom_str(BranchGeometry g) {
  return "(k=" + std::to_string(g.kernel) + ", r=" + std::to_string(g.dilation) + ")";
}

}  // namespace

std::size_t equivalent_kernel_size(std::size_t kernel, std::size_t dilation) {
  if (kernel == 0 || kernel % 2 == 0)
    throw ParameterError("kernel size must be odd, got " + std::to_string(kernel));
  if (dilation < 1) throw ParameterError("dilation must be >= 1");
  return (kernel - 1) * dilation + 1;
}

DilatedReparamCfg DilatedReparamCfg::default_depthwise(std::size_t channels) {
  return depthwise(channels, 13, {{5, 1}, {7, 2}, {3, 3}, {3, 4}, {3, 5}});
}

DilatedReparamCfg DilatedReparamCfg::depthwise(std::size_t channels, std::size_t kernel_size,
                                               std::vector<BranchGeometry> branches) {
  DilatedReparamCfg cfg;
  cfg.kernel_size = kernel_size;
  cfg.branches = std::move(branches);
  cfg.in_channels = channels;
  cfg.out_channels = channels;
  cfg.groups = channels;
  return cfg;
}

std::vector<BranchGeometry> DilatedReparamCfg::all_branches() const {
  std::vector<BranchGeometry> all;
  all.reserve(branches.size() + 1);
  all.push_back({kernel_size, 1});
  all.insert(all.end(), branches.begin(), branches.end());
  return all;
}

void DilatedReparamCfg::validate() const {
  if (kernel_size < 3 || kernel_size % 2 == 0)
    throw ConfigError("reparam: large kernel K must be odd and >= 3, got " +
                      std::to_string(kernel_size));
  if (groups == 0 || in_channels == 0 || out_channels == 0)
    throw ConfigError("reparam: channels and groups must be >= 1");
  if (in_channels % groups != 0 || out_channels % groups != 0)
    throw ConfigError("reparam: channels (" + std::to_string(in_channels) + " -> " +
                      std::to_string(out_channels) + ") not divisible by groups " +
                      std::to_string(groups));
  for (const auto& b : branches) {
    if (b.kernel == 0 || b.kernel % 2 == 0)
      throw ConfigError("reparam: branch " + geom_str(b) + " has an even kernel");
    if (b.dilation < 1) throw ConfigError("reparam: branch " + geom_str(b) + " has dilation < 1");
    const std::size_t eq = (b.kernel - 1) * b.dilation + 1;
    if (eq > kernel_size)
      throw ConfigError("reparam: branch " + geom_str(b) + " has equivalent size " +
                        std::to_string(eq) + " > K = " + std::to_string(kernel_size));
    if (b.kernel == kernel_size && b.dilation == 1)
      throw ConfigError("reparam: branch " + geom_str(b) + " duplicates the principal branch");
  }
}

std::vector<std::size_t> equivalent_kernel_sizes(const DilatedReparamCfg& cfg) {
  std::vector<std::size_t> sizes;
  sizes.reserve(cfg.branches.size());
  for (const auto& b : cfg.branches) sizes.push_back(equivalent_kernel_size(b.kernel, b.dilation));
  return sizes;
}

template <typename T>
BasicTensor4<T> dilate_kernel(const BasicTensor4<T>& weight, std::size_t dilation) {
  if (dilation < 1) throw ParameterError("dilate_kernel: dilation must be >= 1");
  if (weight.h() != weight.w())
    throw DimensionError("dilate_kernel: kernel must be square, got " + weight.shape().str());
  equivalent_kernel_size(weight.h(), dilation);  // rejects even sizes
  if (weight.c() == 1) return conv_transpose2d_kernel(weight, dilation);

  const std::size_t k = weight.h();
  const std::size_t eq = (k - 1) * dilation + 1;
  BasicTensor4<T> out(Shape4{weight.n(), weight.c(), eq, eq});
  BasicTensor4<T> slice(Shape4{weight.n(), 1, k, k});
  for (std::size_t i = 0; i < weight.c(); ++i) {
    for (std::size_t o = 0; o < weight.n(); ++o)
      std::copy_n(weight.plane(o, i), k * k, slice.plane(o, 0));
    const BasicTensor4<T> expanded = conv_transpose2d_kernel(slice, dilation);
    for (std::size_t o = 0; o < weight.n(); ++o)
      std::copy_n(expanded.plane(o, 0), eq * eq, out.plane(o, i));
  }
  return out;
}

template <typename T>
BasicTensor4<T> pad_kernel(const BasicTensor4<T>& weight, std::size_t target) {
  const std::size_t k = weight.h();
  if (weight.w() != k)
    throw DimensionError("pad_kernel: kernel must be square, got " + weight.shape().str());
  if (target < k || (target - k) % 2 != 0)
    throw ParameterError("pad_kernel: cannot pad " + std::to_string(k) + " symmetrically to " +
                         std::to_string(target));
  const std::size_t pad = target / 2 - k / 2;
  if (pad == 0) return weight;
  BasicTensor4<T> out(Shape4{weight.n(), weight.c(), target, target});
  for (std::size_t o = 0; o < weight.n(); ++o)
    for (std::size_t i = 0; i < weight.c(); ++i)
      for (std::size_t y = 0; y < k; ++y)
        std::copy_n(weight.plane(o, i) + y * k, k, out.plane(o, i) + (y + pad) * target + pad);
  return out;
}

template <typename T>
BasicConvLayer<T> fuse_bn(const BasicConvLayer<T>& conv, const BasicBnParams<T>& bn) {
  conv.validate();
  bn.validate();
  if (bn.channels() != conv.out_channels())
    throw DimensionError("fuse_bn: bn has " + std::to_string(bn.channels()) +
                         " channels, conv has c_out " + std::to_string(conv.out_channels()));
  BasicConvLayer<T> fused = conv;
  const std::size_t per_out = conv.weight.c() * conv.weight.h() * conv.weight.w();
  std::vector<T> bias(conv.out_channels());
  auto w = fused.weight.data();
  for (std::size_t o = 0; o < conv.out_channels(); ++o) {
    const T scale = bn.gamma[o] / std::sqrt(bn.running_var[o] + bn.eps);
    for (std::size_t i = 0; i < per_out; ++i) w[o * per_out + i] *= scale;
    const T b = conv.bias ? (*conv.bias)[o] : T(0);
    bias[o] = bn.beta[o] + (b - bn.running_mean[o]) * scale;
  }
  fused.bias = std::move(bias);
  return fused;
}

template <typename T>
void BasicDilatedBranch<T>::validate() const {
  conv.validate();
  bn.validate();
  if (conv.kernel_h() != conv.kernel_w())
    throw ConfigError("branch kernel must be square, got " + conv.weight.shape().str());
  if (conv.dilation.h != conv.dilation.w) throw ConfigError("branch dilation must be isotropic");
  const std::size_t eq = equivalent_kernel_size(conv.kernel_h(), conv.dilation.h);
  const std::size_t pad = (eq - 1) / 2;
  if (conv.padding.h != pad || conv.padding.w != pad)
    throw ConfigError("branch padding must be (k-1)r/2 = " + std::to_string(pad));
  if (conv.stride.h != 1 || conv.stride.w != 1) throw ConfigError("branch stride must be 1");
  if (bn.channels() != conv.out_channels())
    throw DimensionError("branch bn has " + std::to_string(bn.channels()) +
                         " channels, conv has c_out " + std::to_string(conv.out_channels()));
}

template <typename T>
void BasicDilatedReparamBlock<T>::validate() const {
  cfg.validate();
  const auto geometry = cfg.all_branches();
  if (branches.size() != geometry.size())
    throw ConfigError("reparam block: " + std::to_string(branches.size()) + " branches, cfg has " +
                      std::to_string(geometry.size()));
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const auto& b = branches[i];
    b.validate();
    if (b.kernel() != geometry[i].kernel || b.dilation() != geometry[i].dilation)
      throw ConfigError("reparam block: branch " + std::to_string(i) + " is " +
                        geom_str({b.kernel(), b.dilation()}) + ", cfg says " +
                        geom_str(geometry[i]));
    if (b.conv.groups != cfg.groups || b.conv.in_channels() != cfg.in_channels ||
        b.conv.out_channels() != cfg.out_channels)
      throw ConfigError("reparam block: branch " + std::to_string(i) +
                        " channel/group layout differs from the block");
  }
}

template <typename T>
BasicTensor4<T> BasicDilatedReparamBlock<T>::forward(const BasicTensor4<T>& x) const {
  validate();
  BasicTensor4<T> sum = batchnorm_infer(conv2d(x, branches.front().conv), branches.front().bn);
  for (std::size_t i = 1; i < branches.size(); ++i)
    sum = add(sum, batchnorm_infer(conv2d(x, branches[i].conv), branches[i].bn));
  return sum;
}

template <typename T>
BasicConvLayer<T> make_branch_conv(const DilatedReparamCfg& cfg, BranchGeometry geometry,
                                   BasicTensor4<T> weight) {
  const std::size_t eq = equivalent_kernel_size(geometry.kernel, geometry.dilation);
  const Shape4 expected{cfg.out_channels, cfg.in_channels / cfg.groups, geometry.kernel,
                        geometry.kernel};
  if (!(weight.shape() == expected))
    throw DimensionError("branch weight " + weight.shape().str() + ", expected " + expected.str());
  BasicConvLayer<T> conv;
  conv.weight = std::move(weight);
  conv.groups = cfg.groups;
  conv.dilation = {geometry.dilation, geometry.dilation};
  conv.padding = {(eq - 1) / 2, (eq - 1) / 2};
  return conv;
}

template <typename T>
BasicDilatedReparamBlock<T> random_reparam_block(const DilatedReparamCfg& cfg, Rng& rng,
                                                 bool random_bn, double weight_scale) {
  cfg.validate();
  BasicDilatedReparamBlock<T> block;
  block.cfg = cfg;
  for (const auto& g : cfg.all_branches()) {
    const Shape4 ws{cfg.out_channels, cfg.in_channels / cfg.groups, g.kernel, g.kernel};
    BasicDilatedBranch<T> branch;
    branch.conv = make_branch_conv<T>(cfg, g, random_tensor<T>(ws, rng, -weight_scale, weight_scale));
    branch.bn = BasicBnParams<T>::identity(cfg.out_channels);
    if (random_bn) {
      for (std::size_t c = 0; c < cfg.out_channels; ++c) {
        branch.bn.gamma[c] = static_cast<T>(rng.uniform(0.5, 1.5));
        branch.bn.beta[c] = static_cast<T>(rng.uniform(-0.5, 0.5));
        branch.bn.running_mean[c] = static_cast<T>(rng.uniform(-0.5, 0.5));
        branch.bn.running_var[c] = static_cast<T>(rng.uniform(0.1, 2.0));
      }
    }
    block.branches.push_back(std::move(branch));
  }
  return block;
}

template <typename T>
BasicConvLayer<T> merge_fused_branches(std::span<const BasicConvLayer<T>> fused,
                                       std::size_t kernel_size) {
  if (fused.empty()) throw ConfigError("merge: no branches");
  const auto& principal = fused.front();
  if (principal.kernel_h() != kernel_size || principal.kernel_w() != kernel_size ||
      principal.dilation.h != 1 || principal.dilation.w != 1)
    throw ConfigError("merge: first branch must be the non-dilated " +
                      std::to_string(kernel_size) + "x" + std::to_string(kernel_size) +
                      " principal");

  BasicConvLayer<T> merged;
  merged.weight = principal.weight;
  merged.groups = principal.groups;
  merged.padding = {kernel_size / 2, kernel_size / 2};
  merged.bias = principal.bias ? *principal.bias : std::vector<T>(principal.out_channels(), T(0));

  for (std::size_t i = 1; i < fused.size(); ++i) {
    const auto& b = fused[i];
    if (b.groups != principal.groups)
      throw ConfigError("merge: branch " + std::to_string(i) + " has groups " +
                        std::to_string(b.groups) + ", principal has " +
                        std::to_string(principal.groups));
    if (b.weight.n() != principal.weight.n() || b.weight.c() != principal.weight.c())
      throw ConfigError("merge: branch " + std::to_string(i) + " weight " +
                        b.weight.shape().str() + " incompatible with principal " +
                        principal.weight.shape().str());
    if (b.kernel_h() != b.kernel_w() || b.dilation.h != b.dilation.w)
      throw ConfigError("merge: branch " + std::to_string(i) + " is not square/isotropic");
    const std::size_t eq = equivalent_kernel_size(b.kernel_h(), b.dilation.h);
    if (eq > kernel_size)
      throw ConfigError("merge: branch " + std::to_string(i) + " equivalent size " +
                        std::to_string(eq) + " > K = " + std::to_string(kernel_size));
    const BasicTensor4<T> expanded = pad_kernel(dilate_kernel(b.weight, b.dilation.h), kernel_size);
    auto dst = merged.weight.data();
    auto src = expanded.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    if (b.bias)
      for (std::size_t o = 0; o < merged.bias->size(); ++o) (*merged.bias)[o] += (*b.bias)[o];
  }
  return merged;
}

template <typename T>
BasicConvLayer<T> merge_dilated_reparam(const DilatedReparamCfg& cfg,
                                        std::span<const BasicDilatedBranch<T>> branches) {
  BasicDilatedReparamBlock<T> view{cfg, {branches.begin(), branches.end()}};
  view.validate();
  std::vector<BasicConvLayer<T>> fused;
  fused.reserve(branches.size());
  for (const auto& b : branches) fused.push_back(fuse_bn(b.conv, b.bn));
  return merge_fused_branches<T>(fused, cfg.kernel_size);
}

template <typename T>
BasicDilatedReparamBlock<T> canonicalize(const BasicDilatedReparamBlock<T>& block) {
  BasicDilatedReparamBlock<T> out = block;
  if (out.branches.size() <= 1) return out;
  auto key = [](const BasicDilatedBranch<T>& b) {
    return std::pair{b.dilation(), b.kernel()};
  };
  std::stable_sort(out.branches.begin() + 1, out.branches.end(),
                   [&](const auto& a, const auto& b) { return key(a) < key(b); });
  out.cfg.branches.clear();
  for (std::size_t i = 1; i < out.branches.size(); ++i)
    out.cfg.branches.push_back({out.branches[i].kernel(), out.branches[i].dilation()});
  return out;
}

#define URLK_INSTANTIATE_REPARAM(T)                                                             \
  template BasicTensor4<T> dilate_kernel<T>(const BasicTensor4<T>&, std::size_t);               \
  template BasicTensor4<T> pad_kernel<T>(const BasicTensor4<T>&, std::size_t);                  \
  template BasicConvLayer<T> fuse_bn<T>(const BasicConvLayer<T>&, const BasicBnParams<T>&);     \
  template struct BasicDilatedBranch<T>;                                                        \
  template struct BasicDilatedReparamBlock<T>;                                                  \
  template BasicConvLayer<T> make_branch_conv<T>(const DilatedReparamCfg&, BranchGeometry,      \
                                                 BasicTensor4<T>);                              \
  template BasicDilatedReparamBlock<T> random_reparam_block<T>(const DilatedReparamCfg&, Rng&, \
                                                               bool, double);                   \
  template BasicConvLayer<T> merge_fused_branches<T>(std::span<const BasicConvLayer<T>>,       \
                                                     std::size_t);                              \
  template BasicConvLayer<T> merge_dilated_reparam<T>(const DilatedReparamCfg&,                 \
                                                      std::span<const BasicDilatedBranch<T>>);  \
  template BasicDilatedReparamBlock<T> canonicalize<T>(const BasicDilatedReparamBlock<T>&);

URLK_INSTANTIATE_REPARAM(float)
URLK_INSTANTIATE_REPARAM(double)

#undef URLK_INSTANTIATE_REPARAM

}  // namespace urlk
