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

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "urlk/blocks.hpp"

namespace urlk {
namespace {

InitOptions perturbed() {
  InitOptions o;
  o.perturb_norms = true;
  o.weight_std = 0.3;
  return o;
}

void zero(ConvLayer& c) {
  std::fill(c.weight.storage().begin(), c.weight.storage().end(), 0.0);
  if (c.bias) std::fill(c.bias->begin(), c.bias->end(), 0.0);
}

TEST(Se, ZeroWeightsHalveInput) {
  Rng rng(1);
  ParamInitializer init(rng, {});
  SeBlock se = make_se(8, init);
  EXPECT_EQ(se.reduce.out_features, 2u);
  for (auto* lin : {&se.reduce, &se.expand}) {
    std::fill(lin->weight.begin(), lin->weight.end(), 0.0);
    std::fill(lin->bias.begin(), lin->bias.end(), 0.0);
  }
  const auto x = random_tensor(Shape4{2, 8, 3, 3}, rng);
  const auto y = se_forward(x, se);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.storage()[i], 0.5 * x.storage()[i]);
}

TEST(Se, MatchesScalarOracle) {
  Rng rng(2);
  ParamInitializer init(rng, perturbed());
  const SeBlock se = make_se(12, init);
  const auto x = random_tensor(Shape4{2, 12, 5, 5}, rng);
  EXPECT_LE(relative_l1_error(se_forward(x, se), oracle::se(x, se)), 1e-12);
}

TEST(Se, TooFewChannels) {
  Rng rng(3);
  ParamInitializer init(rng, {});
  EXPECT_THROW(make_se(2, init), ConfigError);
}

TEST(Ffn, ZeroSecondProjectionGivesZero) {
  Rng rng(4);
  ParamInitializer init(rng, perturbed());
  FfnBlock f = make_ffn(4, init);
  EXPECT_EQ(f.hidden(), 16u);
  zero(f.pw2);
  const auto y = ffn_forward(random_tensor(Shape4{1, 4, 6, 6}, rng), f);
  for (const double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Ffn, MatchesComposedOracle) {
  Rng rng(5);
  ParamInitializer init(rng, perturbed());
  const FfnBlock f = make_ffn(8, init);
  const auto x = random_tensor(Shape4{2, 8, 6, 6}, rng);
  EXPECT_LE(relative_l1_error(ffn_forward(x, f), oracle::ffn(x, f)), 1e-12);
}

TEST(Block, ResidualPathsOnly) {
  Rng rng(6);
  ParamInitializer init(rng, {});
  Block b = make_lark_block(DilatedReparamCfg::default_depthwise(8), init);
  for (auto& br : b.reparam->branches) zero(br.conv);
  zero(b.ffn.pw2);
  const auto x = random_tensor(Shape4{1, 8, 9, 9}, rng);
  EXPECT_EQ(block_forward(x, b), x);
}

TEST(Block, LarkMatchesOracleAndKeepsSize) {
  Rng rng(7);
  ParamInitializer init(rng, perturbed());
  const Block b = make_lark_block(DilatedReparamCfg::default_depthwise(8), init);
  const auto x = random_tensor(Shape4{1, 8, 19, 19}, rng);
  const auto y = block_forward(x, b);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_LE(relative_l1_error(y, oracle::block(x, b)), 1e-12);
}

TEST(Block, LarkMergeEquivalence) {
  Rng rng(8);
  ParamInitializer init(rng, perturbed());
  for (int t = 0; t < 5; ++t) {
    const Block b = make_lark_block(DilatedReparamCfg::default_depthwise(12), init);
    const Block m = merge_block(b);
    EXPECT_TRUE(m.is_merged());
    EXPECT_EQ(m.dw_kernel(), 13u);
    EXPECT_FALSE(m.ffn_norm.has_value());
    const auto x = random_tensor(Shape4{2, 12, 15, 15}, rng);
    EXPECT_LE(relative_l1_error(block_forward(x, m), oracle::block(x, b)), 1e-10);
  }
}

TEST(Block, SmakMergeEquivalence) {
  Rng rng(9);
  ParamInitializer init(rng, perturbed());
  const Block b = make_smak_block(8, init);
  const Block m = merge_block(b);
  EXPECT_EQ(m.dw_kernel(), 3u);
  const auto x = random_tensor(Shape4{2, 8, 7, 7}, rng);
  EXPECT_LE(relative_l1_error(block_forward(x, b), oracle::block(x, b)), 1e-12);
  EXPECT_LE(relative_l1_error(block_forward(x, m), oracle::block(x, b)), 1e-10);
}

TEST(Block, MergeTwiceIsStateError) {
  Rng rng(10);
  ParamInitializer init(rng, {});
  const Block m = merge_block(make_smak_block(8, init));
  EXPECT_THROW(merge_block(m), StateError);
  Block broken = m;
  broken.mode = Mode::TrainStructure;
  EXPECT_THROW(block_forward(Tensor4(Shape4{1, 8, 4, 4}), broken), StateError);
}

TEST(Block, ParameterCountsByHand) {
  Rng rng(11);
  ParamInitializer init(rng, {});
  // C = 8: SE 8*2+2 + 2*8+8, FFN 8*32+32 + 2*32 + 32*8.
  const std::size_t se = 42, ffn = 608;
  const Block smak = make_smak_block(8, init);
  EXPECT_EQ(param_count(smak), se + ffn + 72 + 16 + 16);
  EXPECT_EQ(param_count(merge_block(smak)), se + ffn + 8 + 72 + 8);
  const Block lark = make_lark_block(DilatedReparamCfg::default_depthwise(8), init);
  // Principal 13x13 plus 5x5, 7x7 and three 3x3 kernels, six branch BNs, one dw BN.
  EXPECT_EQ(param_count(lark), se + ffn + 8 * (169 + 25 + 49 + 27) + 6 * 16 + 16 + 16);
  EXPECT_EQ(param_count(merge_block(lark)), se + ffn + 8 + 8 * 169 + 8);
}

TEST(Downsample, Geometry) {
  Rng rng(12);
  ParamInitializer init(rng, {});
  const Downsample stem = make_stem(3, 96, init);
  EXPECT_EQ(downsample_output_shape(Shape4{1, 3, 224, 224}, stem), (Shape4{1, 96, 56, 56}));
  const Downsample tr = make_transition(96, 192, init);
  EXPECT_EQ(downsample_output_shape(Shape4{1, 96, 56, 56}, tr), (Shape4{1, 192, 28, 28}));
  const Downsample audio = make_stem(1, 40, init);
  EXPECT_EQ(downsample_forward(Tensor4(Shape4{1, 1, 128, 64}), audio).shape(), (Shape4{1, 40, 32, 16}));
  EXPECT_THROW(downsample_forward(Tensor4(Shape4{1, 96, 7, 7}), tr), GeometryError);
}

TEST(Downsample, MergeEquivalence) {
  Rng rng(13);
  ParamInitializer init(rng, perturbed());
  const Downsample stem = make_stem(3, 16, init);
  const Downsample merged = merge_downsample(stem);
  EXPECT_EQ(merged.mode, Mode::Merged);
  const auto x = random_tensor(Shape4{2, 3, 16, 16}, rng);
  EXPECT_LE(relative_l1_error(downsample_forward(x, merged), downsample_forward(x, stem)), 1e-12);
  EXPECT_THROW(merge_downsample(merged), StateError);
}

}  // namespace
}  // namespace urlk
