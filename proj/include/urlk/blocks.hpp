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

// Composite blocks of the backbone. Every block exists in two structures:
//
//   train-structure  multi-branch depthwise stage, separate BN layers
//   merged           each depthwise stage is one biased conv, BNs folded
//
// Block topology (both structures compute the same function):
//
//   y   = x + SE(BN_dw(DW(x)))
//   out = y + BN_ffn(FFN(y))
//
// where DW is a dilated reparam block (LarK) or a depthwise 3x3 conv (SmaK)
// and FFN = pw2(GRN(GELU(pw1(.)))).

#ifndef URLK_BLOCKS_HPP_
#define URLK_BLOCKS_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "urlk/ops.hpp"
#include "urlk/reparam.hpp"

namespace urlk {

enum class BlockKind { LarK, SmaK };
enum class Mode { TrainStructure, Merged };

const char* to_string(BlockKind kind);
const char* to_string(Mode mode);
Mode parse_mode(const std::string& text);  // "train" | "train-structure" | "merged"

inline constexpr std::size_t kSeReduction = 4;
inline constexpr std::size_t kFfnExpansion = 4;

struct SeBlock {
  Linear reduce;  // C -> C/4
  Linear expand;  // C/4 -> C

  std::size_t channels() const { return reduce.in_features; }
  void validate() const;
};

// Per-sample channel gate sigmoid(expand(relu(reduce(gap(x))))), length n * C.
std::vector<double> se_gate(const Tensor4& x, const SeBlock& se);
Tensor4 se_forward(const Tensor4& x, const SeBlock& se);

struct FfnBlock {
  ConvLayer pw1;  // 1x1, C -> e C, biased
  std::vector<double> grn_gamma;
  std::vector<double> grn_beta;
  ConvLayer pw2;  // 1x1, e C -> C; gains a bias once the trailing BN is folded in

  std::size_t channels() const { return pw1.in_channels(); }
  std::size_t hidden() const { return pw1.out_channels(); }
  void validate() const;
};

// pw2(GRN(GELU(pw1(x)))), pre-residual and pre-BN.
Tensor4 ffn_forward(const Tensor4& x, const FfnBlock& ffn);

struct Block {
  BlockKind kind = BlockKind::SmaK;
  std::size_t channels = 0;
  Mode mode = Mode::TrainStructure;

  std::optional<DilatedReparamBlock> reparam;  // LarK, train-structure
  std::optional<ConvLayer> dw_conv;            // SmaK 3x3 (train) or fused K x K (merged)
  std::optional<BnParams> dw_norm;             // train-structure only
  SeBlock se;
  FfnBlock ffn;
  std::optional<BnParams> ffn_norm;  // train-structure only

  // Kernel size of the depthwise stage (K for LarK, 3 for SmaK).
  std::size_t dw_kernel() const;
  bool is_merged() const;
};

// Depthwise stage output, BN included: BN_dw(DW(x)).
Tensor4 depthwise_forward(const Tensor4& x, const Block& block);
// StateError when the mode flag disagrees with the stored structure
// (e.g. merged requested before the merge happened).
Tensor4 block_forward(const Tensor4& x, const Block& block);

// New merged block; the input is left untouched. StateError if already merged.
Block merge_block(const Block& block);
Block merge_block(Block&& block);

enum class DownsampleKind { Stem, Transition };

struct ConvBnGelu {
  ConvLayer conv;             // 3x3, stride 2, padding 1
  std::optional<BnParams> bn;  // folded into conv once merged
};

struct Downsample {
  DownsampleKind kind = DownsampleKind::Transition;
  std::vector<ConvBnGelu> layers;  // stem: 2, transition: 1
  Mode mode = Mode::TrainStructure;

  std::size_t in_channels() const { return layers.front().conv.in_channels(); }
  std::size_t out_channels() const { return layers.back().conv.out_channels(); }
};

// Each layer halves the spatial size exactly; GeometryError on odd input.
Tensor4 downsample_forward(const Tensor4& x, const Downsample& ds);
Shape4 downsample_output_shape(const Shape4& in, const Downsample& ds);
Downsample merge_downsample(const Downsample& ds);
Downsample merge_downsample(Downsample&& ds);

// ---------------------------------------------------------------------------
// Construction

struct InitOptions {
  double weight_std = 0.02;  // truncated normal for conv / linear weights
  // Draw BN statistics, affine params and GRN params at random instead of the
  // (1, 0, 0, 1) / zero defaults. Used to make merge checks non-trivial.
  bool perturb_norms = false;
  // Allocate shapes only; every value is zero (BN var = 1). For loaders.
  bool skeleton = false;
};

class ParamInitializer {
 public:
  ParamInitializer(Rng& rng, InitOptions options) : rng_(rng), options_(options) {}

  Tensor4 weight(Shape4 shape);
  std::vector<double> bias(std::size_t n);
  BnParams bn(std::size_t channels);
  Linear linear(std::size_t in, std::size_t out);
  std::vector<double> grn_param(std::size_t n);
  const InitOptions& options() const { return options_; }

 private:
  Rng& rng_;
  InitOptions options_;
};

SeBlock make_se(std::size_t channels, ParamInitializer& init);
FfnBlock make_ffn(std::size_t channels, ParamInitializer& init);
Block make_lark_block(const DilatedReparamCfg& cfg, ParamInitializer& init);
Block make_smak_block(std::size_t channels, ParamInitializer& init);
// Stem: in -> out / 2 -> out; transition: in -> out (out = 2 in in the model).
Downsample make_stem(std::size_t in_channels, std::size_t out_channels, ParamInitializer& init);
Downsample make_transition(std::size_t in_channels, std::size_t out_channels,
                           ParamInitializer& init);

// ---------------------------------------------------------------------------
// Parameter traversal. fn(name, shape, span, is_buffer) is called for every
// stored array in a fixed order; names are dotted paths under `prefix`.
// BN running statistics and eps are buffers, not parameters.

using TensorShape = std::vector<std::size_t>;

inline TensorShape dims(const Shape4& s) { return {s.n, s.c, s.h, s.w}; }

template <typename Conv, typename Fn>
void visit_conv(Conv& conv, const std::string& p, Fn&& fn) {
  fn(p + ".weight", dims(conv.weight.shape()), conv.weight.data(), false);
  if (conv.bias) fn(p + ".bias", TensorShape{conv.bias->size()}, std::span(*conv.bias), false);
}

template <typename Bn, typename Fn>
void visit_bn(Bn& bn, const std::string& p, Fn&& fn) {
  const TensorShape s{bn.gamma.size()};
  fn(p + ".gamma", s, std::span(bn.gamma), false);
  fn(p + ".beta", s, std::span(bn.beta), false);
  fn(p + ".running_mean", s, std::span(bn.running_mean), true);
  fn(p + ".running_var", s, std::span(bn.running_var), true);
  fn(p + ".eps", TensorShape{1}, std::span(&bn.eps, 1), true);
}

template <typename Lin, typename Fn>
void visit_linear(Lin& lin, const std::string& p, Fn&& fn) {
  fn(p + ".weight", TensorShape{lin.out_features, lin.in_features}, std::span(lin.weight), false);
  if (!lin.bias.empty()) fn(p + ".bias", TensorShape{lin.out_features}, std::span(lin.bias), false);
}

template <typename B, typename Fn>
void visit_block(B& block, const std::string& p, Fn&& fn) {
  if (block.reparam) {
    auto& branches = block.reparam->branches;
    for (std::size_t i = 0; i < branches.size(); ++i) {
      const std::string bp = p + ".dw.branch" + std::to_string(i);
      visit_conv(branches[i].conv, bp, fn);
      visit_bn(branches[i].bn, bp + ".bn", fn);
    }
  }
  if (block.dw_conv) visit_conv(*block.dw_conv, p + ".dw.conv", fn);
  if (block.dw_norm) visit_bn(*block.dw_norm, p + ".dw_norm", fn);
  visit_linear(block.se.reduce, p + ".se.reduce", fn);
  visit_linear(block.se.expand, p + ".se.expand", fn);
  visit_conv(block.ffn.pw1, p + ".ffn.pw1", fn);
  fn(p + ".ffn.grn.gamma", TensorShape{block.ffn.grn_gamma.size()}, std::span(block.ffn.grn_gamma),
     false);
  fn(p + ".ffn.grn.beta", TensorShape{block.ffn.grn_beta.size()}, std::span(block.ffn.grn_beta),
     false);
  visit_conv(block.ffn.pw2, p + ".ffn.pw2", fn);
  if (block.ffn_norm) visit_bn(*block.ffn_norm, p + ".ffn_norm", fn);
}

template <typename D, typename Fn>
void visit_downsample(D& ds, const std::string& p, Fn&& fn) {
  for (std::size_t i = 0; i < ds.layers.size(); ++i) {
    const std::string lp = p + ".conv" + std::to_string(i);
    visit_conv(ds.layers[i].conv, lp, fn);
    if (ds.layers[i].bn) visit_bn(*ds.layers[i].bn, lp + ".bn", fn);
  }
}

// Scalar parameters (buffers excluded).
std::size_t param_count(const Block& block);
std::size_t param_count(const Downsample& ds);

}  // namespace urlk

#endif  // URLK_BLOCKS_HPP_
