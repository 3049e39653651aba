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

#include <algorithm>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "urlk/reparam.hpp"

namespace urlk {
namespace {

Tensor4 multi_branch_oracle(const DilatedReparamBlock& block, const Tensor4& x) {
  Tensor4 sum;
  for (const auto& br : block.branches) {
    const Tensor4 y = oracle::bn(oracle::conv(x, br.conv), br.bn);
    sum = sum.empty() ? y : oracle::plus(sum, y);
  }
  return sum;
}

TEST(EquivalentKernel, PublishedValues) {
  EXPECT_EQ(equivalent_kernel_size(3, 3), 7u);
  for (std::size_t k : {1, 3, 5, 7, 13}) EXPECT_EQ(equivalent_kernel_size(k, 1), k);
  const auto cfg = DilatedReparamCfg::default_depthwise(8);
  EXPECT_EQ(equivalent_kernel_sizes(cfg), (std::vector<std::size_t>{5, 13, 7, 9, 11}));
  std::vector<std::size_t> branches;
  for (const auto& b : cfg.branches) branches.push_back(equivalent_kernel_size(b.kernel, b.dilation));
  EXPECT_EQ(branches, (std::vector<std::size_t>{5, 13, 7, 9, 11}));
}

TEST(EquivalentKernel, InvalidGeometry) {
  EXPECT_THROW(equivalent_kernel_size(4, 1), ParameterError);
  EXPECT_THROW(equivalent_kernel_size(3, 0), ParameterError);
}

TEST(DilateKernel, UnitDilationIsIdentity) {
  Rng rng(1);
  const auto w = random_tensor(Shape4{4, 2, 3, 3}, rng);
  EXPECT_EQ(dilate_kernel(w, 1), w);
}

TEST(DilateKernel, DepthwiseZeroInsertion) {
  Rng rng(2);
  const auto w = random_tensor(Shape4{8, 1, 3, 3}, rng);
  const auto d = dilate_kernel(w, 2);
  ASSERT_EQ(d.shape(), (Shape4{8, 1, 5, 5}));
  for (std::size_t m = 0; m < 8; ++m)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        EXPECT_EQ(d(m, 0, i, j), (i % 2 == 0 && j % 2 == 0) ? w(m, 0, i / 2, j / 2) : 0.0);
}

TEST(DilateKernel, DenseKernelMatchesDilatedConvolution) {
  Rng rng(3);
  ConvLayer dilated;
  dilated.weight = random_tensor(Shape4{4, 4, 3, 3}, rng);
  dilated.dilation = {3, 3};
  dilated.padding = {3, 3};
  ConvLayer expanded;
  expanded.weight = dilate_kernel(dilated.weight, 3);
  expanded.padding = {3, 3};
  ASSERT_EQ(expanded.weight.shape(), (Shape4{4, 4, 7, 7}));
  const auto x = random_tensor(Shape4{2, 4, 19, 19}, rng);
  EXPECT_LE(relative_l1_error(oracle::conv(x, expanded), oracle::conv(x, dilated)), 1e-12);
}

TEST(PadKernel, CentersKernel) {
  Tensor4 w(Shape4{1, 1, 3, 3}, 1.0);
  const auto p = pad_kernel(w, 7);
  ASSERT_EQ(p.shape(), (Shape4{1, 1, 7, 7}));
  double sum = 0.0;
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j) {
      sum += p(0, 0, i, j);
      if (p(0, 0, i, j) != 0.0) {
        EXPECT_GE(i, 2u);
        EXPECT_LE(i, 4u);
        EXPECT_GE(j, 2u);
        EXPECT_LE(j, 4u);
      }
    }
  EXPECT_EQ(sum, 9.0);
}

TEST(FuseBn, IdentityStatisticsLeaveLayer) {
  Rng rng(4);
  ConvLayer c;
  c.weight = random_tensor(Shape4{3, 3, 3, 3}, rng);
  const auto fused = fuse_bn(c, BnParams::identity(3, 1e-300));
  EXPECT_LE(relative_l1_error(fused.weight, c.weight), 1e-15);
  for (const double b : *fused.bias) EXPECT_EQ(b, 0.0);
}

TEST(FuseBn, ClosedFormArithmetic) {
  ConvLayer c;
  c.weight = Tensor4(Shape4{1, 1, 1, 1}, 1.0);
  c.bias = std::vector<double>{0.0};
  const auto fused = fuse_bn(c, BnParams{{2.0}, {0.0}, {4.0}, {3.0}, 1.0});
  EXPECT_DOUBLE_EQ(fused.weight(0, 0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ((*fused.bias)[0], -4.0);
}

TEST(FuseBn, MatchesComposedForward) {
  Rng rng(5);
  ConvLayer c;
  c.weight = random_tensor(Shape4{6, 3, 3, 3}, rng);
  c.bias = std::vector<double>(6, 0.3);
  c.padding = {1, 1};
  BnParams bn;
  for (int i = 0; i < 6; ++i) {
    bn.gamma.push_back(rng.uniform(0.5, 1.5));
    bn.beta.push_back(rng.uniform(-0.5, 0.5));
    bn.running_mean.push_back(rng.uniform(-0.5, 0.5));
    bn.running_var.push_back(rng.uniform(0.1, 2.0));
  }
  const auto x = random_tensor(Shape4{2, 3, 10, 10}, rng);
  EXPECT_LE(relative_l1_error(oracle::conv(x, fuse_bn(c, bn)), oracle::bn(oracle::conv(x, c), bn)),
            1e-12);
}

TEST(Merge, SingleBranchIdentityBnKeepsKernel) {
  Rng rng(6);
  auto cfg = DilatedReparamCfg::depthwise(4, 7, {});
  const auto block = random_reparam_block<double>(cfg, rng, false);
  ASSERT_EQ(block.branches.size(), 1u);
  const auto merged = merge_dilated_reparam(block);
  EXPECT_LE(relative_l1_error(merged.weight, block.branches[0].conv.weight), 1e-5);
  EXPECT_EQ(merged.weight.shape(), block.branches[0].conv.weight.shape());
}

TEST(Merge, NineByNineExample) {
  Rng rng(7);
  const auto cfg = DilatedReparamCfg::depthwise(6, 9, {{5, 1}, {3, 2}, {3, 3}, {3, 4}});
  EXPECT_EQ(equivalent_kernel_sizes(cfg), (std::vector<std::size_t>{5, 5, 7, 9}));
  const auto block = random_reparam_block<double>(cfg, rng);
  const auto merged = merge_dilated_reparam(block);
  EXPECT_EQ(merged.weight.shape(), (Shape4{6, 1, 9, 9}));
  EXPECT_EQ(merged.padding, (Pair2{4, 4}));
  const auto x = random_tensor(Shape4{2, 6, 19, 19}, rng);
  EXPECT_LE(relative_l1_error(conv2d(x, merged), multi_branch_oracle(block, x)), 1e-10);
}

TEST(Merge, DefaultDepthwiseBlock) {
  Rng rng(8);
  const auto cfg = DilatedReparamCfg::default_depthwise(8);
  const auto block = random_reparam_block<double>(cfg, rng);
  const auto x = random_tensor(Shape4{2, 8, 19, 19}, rng);
  const auto merged = merge_dilated_reparam(block);
  EXPECT_EQ(merged.weight.shape(), (Shape4{8, 1, 13, 13}));
  EXPECT_LE(relative_l1_error(conv2d(x, merged), multi_branch_oracle(block, x)), 1e-10);
  EXPECT_LE(relative_l1_error(block.forward(x), multi_branch_oracle(block, x)), 1e-12);
}

TEST(Merge, DenseSingleDilatedBranch) {
  Rng rng(9);
  DilatedReparamCfg cfg;
  cfg.in_channels = cfg.out_channels = 4;
  cfg.kernel_size = 13;
  cfg.branches = {{3, 3}};
  for (int t = 0; t < 20; ++t) {
    const auto block = random_reparam_block<double>(cfg, rng);
    const auto x = random_tensor(Shape4{2, 4, 19, 19}, rng);
    EXPECT_LE(relative_l1_error(conv2d(x, merge_dilated_reparam(block)), block.forward(x)), 1e-10);
  }
}

TEST(Merge, BranchOrderDoesNotMatter) {
  Rng rng(10);
  const auto cfg = DilatedReparamCfg::default_depthwise(5);
  const auto block = random_reparam_block<double>(cfg, rng);
  auto shuffled = block;
  std::reverse(shuffled.branches.begin() + 1, shuffled.branches.end());
  std::reverse(shuffled.cfg.branches.begin(), shuffled.cfg.branches.end());
  const auto a = merge_dilated_reparam(block);
  const auto b = merge_dilated_reparam(shuffled);
  EXPECT_LE(relative_l1_error(b.weight, a.weight), 1e-14);
  EXPECT_EQ(merge_dilated_reparam(canonicalize(shuffled)).weight,
            merge_dilated_reparam(canonicalize(block)).weight);
}

TEST(Merge, RejectsBadConfigs) {
  EXPECT_THROW(DilatedReparamCfg::depthwise(4, 12, {{3, 1}}).validate(), ConfigError);
  EXPECT_THROW(DilatedReparamCfg::depthwise(4, 9, {{3, 5}}).validate(), ConfigError);
  EXPECT_THROW(DilatedReparamCfg::depthwise(4, 9, {{9, 1}}).validate(), ConfigError);
  DilatedReparamCfg grouped;
  grouped.in_channels = 6;
  grouped.out_channels = 6;
  grouped.groups = 4;
  EXPECT_THROW(grouped.validate(), ConfigError);
}

TEST(Merge, FloatMergeStaysWithinSinglePrecision) {
  Rng rng(11);
  DilatedReparamCfg cfg;
  cfg.in_channels = cfg.out_channels = 4;
  cfg.branches = {{3, 3}};
  for (int t = 0; t < 20; ++t) {
    const auto block = random_reparam_block<float>(cfg, rng);
    const auto x = random_tensor<float>(Shape4{2, 4, 19, 19}, rng);
    EXPECT_LE(relative_l1_error(conv2d(x, merge_dilated_reparam(block)), block.forward(x)), 1e-5);
  }
}

// Random K, branch count, grouping and BN statistics.
TEST(MergeProperty, RandomConfigSweep) {
  Rng rng(12);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t kernel = 9 + 2 * rng.below(4);
    DilatedReparamCfg cfg;
    cfg.kernel_size = kernel;
    const std::size_t kind = t % 3;  // depthwise, grouped, dense
    const std::size_t groups = kind == 0 ? 4 : kind == 1 ? 2 : 1;
    cfg.groups = groups;
    cfg.in_channels = 4;
    cfg.out_channels = kind == 0 ? 4 : 2 * (1 + rng.below(2));
    const std::size_t extra = rng.below(6);  // 1..6 branches with the principal
    while (cfg.branches.size() < extra) {
      const std::size_t k = 1 + 2 * (1 + rng.below(3));
      const std::size_t r = 1 + rng.below(5);
      if ((k - 1) * r + 1 > kernel || (k == kernel && r == 1)) continue;
      cfg.branches.push_back({k, r});
    }
    const auto block = random_reparam_block<double>(cfg, rng);
    const auto x = random_tensor(Shape4{1, 4, 12 + rng.below(8), 12 + rng.below(8)}, rng);
    const double err = relative_l1_error(conv2d(x, merge_dilated_reparam(block)), block.forward(x));
    worst = std::max(worst, err);
    ASSERT_LE(err, 1e-10) << "trial " << t << " K=" << kernel << " groups=" << groups;
  }
  RecordProperty("max_rel_err", std::to_string(worst));
}

}  // namespace
}  // namespace urlk
