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

// Structural re-parameterization of dilated reparam blocks.
//
// A block is a non-dilated K x K convolution (the principal branch) plus
// parallel small-kernel branches with dilation r, each followed by its own
// batch-norm. A k-tap kernel dilated by r covers (k - 1) r + 1 pixels and is
// exactly a non-dilated kernel of that size with zeros between the taps, so
// after folding every BN the whole block collapses into one K x K layer:
//
//   W = W_principal + sum_i pad(dilate(W_i, r_i))     b = sum_i b_i
//
// Summation order is fixed (principal first, then branches as declared).

#ifndef URLK_REPARAM_HPP_
#define URLK_REPARAM_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "urlk/ops.hpp"
#include "urlk/random.hpp"

namespace urlk {

// (k - 1) r + 1. ParameterError for even k or r < 1.
std::size_t equivalent_kernel_size(std::size_t kernel, std::size_t dilation);

struct BranchGeometry {
  std::size_t kernel = 3;
  std::size_t dilation = 1;
  bool operator==(const BranchGeometry&) const = default;
};

struct DilatedReparamCfg {
  std::size_t kernel_size = 13;  // K, the principal (non-dilated) kernel
  // Parallel branches; the principal K x K branch is implicit.
  std::vector<BranchGeometry> branches;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t groups = 1;

  // K = 13, k = (5, 7, 3, 3, 3), r = (1, 2, 3, 4, 5), depthwise.
  static DilatedReparamCfg default_depthwise(std::size_t channels);
  static DilatedReparamCfg depthwise(std::size_t channels, std::size_t kernel_size,
                                     std::vector<BranchGeometry> branches);

  // Principal branch first, then `branches` in declared order.
  std::vector<BranchGeometry> all_branches() const;
  bool is_depthwise() const { return groups == in_channels && groups == out_channels; }
  // ConfigError on even/short K, (k - 1) r + 1 > K, a second (K, 1) branch,
  // or channel counts not divisible by groups.
  void validate() const;
};

// One entry per parallel branch, principal excluded.
std::vector<std::size_t> equivalent_kernel_sizes(const DilatedReparamCfg& cfg);

// Expands a (c_out, c_in/g, k, k) kernel to its non-dilated equivalent of
// size (k - 1) r + 1. Depthwise kernels (c_in/g == 1) go through the
// transposed convolution directly; wider kernels are split into single
// input-channel slices, expanded one at a time, and concatenated.
template <typename T>
BasicTensor4<T> dilate_kernel(const BasicTensor4<T>& weight, std::size_t dilation);

// Symmetric zero padding of a square kernel up to `target` x `target`.
template <typename T>
BasicTensor4<T> pad_kernel(const BasicTensor4<T>& weight, std::size_t target);

// Folds inference BN into the preceding convolution:
//   W'_o = W_o gamma_o / sqrt(var_o + eps)
//   b'_o = beta_o + (b_o - mean_o) gamma_o / sqrt(var_o + eps)
template <typename T>
BasicConvLayer<T> fuse_bn(const BasicConvLayer<T>& conv, const BasicBnParams<T>& bn);

template <typename T>
struct BasicDilatedBranch {
  BasicConvLayer<T> conv;  // square kernel, isotropic dilation, padding (k-1)r/2
  BasicBnParams<T> bn;

  std::size_t kernel() const { return conv.kernel_h(); }
  std::size_t dilation() const { return conv.dilation.h; }
  void validate() const;
};

template <typename T>
struct BasicDilatedReparamBlock {
  DilatedReparamCfg cfg;
  std::vector<BasicDilatedBranch<T>> branches;  // principal first

  // Train-structure forward: sum over branches of bn_i(conv_i(x)).
  BasicTensor4<T> forward(const BasicTensor4<T>& x) const;
  void validate() const;
};

using DilatedBranch = BasicDilatedBranch<double>;
using DilatedReparamBlock = BasicDilatedReparamBlock<double>;

// Bias-free conv for one branch geometry with padding (k - 1) r / 2.
template <typename T>
BasicConvLayer<T> make_branch_conv(const DilatedReparamCfg& cfg, BranchGeometry geometry,
                                   BasicTensor4<T> weight);

// Random weights (uniform in +-weight_scale) and, when random_bn is set,
// BN statistics with var in (0.1, 2), gamma in (0.5, 1.5), beta and mean in
// (-0.5, 0.5). Otherwise identity BN.
template <typename T>
BasicDilatedReparamBlock<T> random_reparam_block(const DilatedReparamCfg& cfg, Rng& rng,
                                                 bool random_bn = true,
                                                 double weight_scale = 1.0);

// Sums already-fused branch layers (principal first) into one K x K layer
// with padding K / 2. Each kernel is dilated, then padded by
// K / 2 - eq / 2 on every side.
template <typename T>
BasicConvLayer<T> merge_fused_branches(std::span<const BasicConvLayer<T>> fused,
                                       std::size_t kernel_size);

// Folds every branch BN, expands dilated kernels and adds everything up.
template <typename T>
BasicConvLayer<T> merge_dilated_reparam(const DilatedReparamCfg& cfg,
                                        std::span<const BasicDilatedBranch<T>> branches);

template <typename T>
BasicConvLayer<T> merge_dilated_reparam(const BasicDilatedReparamBlock<T>& block) {
  return merge_dilated_reparam<T>(block.cfg, block.branches);
}

// Copy with the non-principal branches sorted by (dilation, kernel), so two
// permutations of the same branch set merge to bit-identical kernels.
template <typename T>
BasicDilatedReparamBlock<T> canonicalize(const BasicDilatedReparamBlock<T>& block);

}  // namespace urlk

#endif  // URLK_REPARAM_HPP_
