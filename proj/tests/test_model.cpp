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

#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "urlk/model.hpp"

namespace urlk {
namespace {

using K = BlockKind;

TEST(Config, NamedInstancesMatchTable) {
  struct Row {
    std::array<std::size_t, 4> depths;
    std::size_t lark, smak, width;
  };
  const std::map<std::string, Row> table{
      {"A", {{2, 2, 6, 2}, 6, 0, 40}},     {"F", {{2, 2, 6, 2}, 6, 0, 48}},
      {"P", {{2, 2, 6, 2}, 6, 0, 64}},     {"N", {{2, 2, 8, 2}, 8, 0, 80}},
      {"T", {{3, 3, 18, 3}, 9, 9, 80}},    {"S", {{3, 3, 27, 3}, 9, 18, 96}},
      {"B", {{3, 3, 27, 3}, 9, 18, 128}},  {"L", {{3, 3, 27, 3}, 9, 18, 192}},
      {"XL", {{3, 3, 27, 3}, 9, 18, 256}},
  };
  ASSERT_EQ(instance_names().size(), 9u);
  for (const auto& name : instance_names()) {
    const auto cfg = named_config(name);
    const auto& row = table.at(name);
    EXPECT_EQ(cfg.depths, row.depths) << name;
    EXPECT_EQ(cfg.stage3_lark, row.lark) << name;
    EXPECT_EQ(cfg.stage3_smak, row.smak) << name;
    EXPECT_EQ(cfg.width, row.width) << name;
    for (std::size_t s = 0; s < 4; ++s) EXPECT_EQ(cfg.stage_width(s), row.width << s);
  }
  EXPECT_THROW(named_config("Q"), ConfigError);
}

TEST(Config, StageLayouts) {
  const auto t = named_config("T");
  EXPECT_EQ(t.stage_layout(0), std::vector<K>(3, K::SmaK));
  EXPECT_EQ(t.stage_layout(1), std::vector<K>(3, K::LarK));
  EXPECT_EQ(t.stage_layout(3), std::vector<K>(3, K::LarK));
  const auto t3 = t.stage_layout(2);
  ASSERT_EQ(t3.size(), 18u);
  for (std::size_t i = 0; i < 18; ++i) EXPECT_EQ(t3[i], i % 2 == 0 ? K::LarK : K::SmaK) << i;

  const auto s3 = named_config("S").stage_layout(2);
  ASSERT_EQ(s3.size(), 27u);
  for (std::size_t i = 0; i < 27; ++i) EXPECT_EQ(s3[i], i % 3 == 0 ? K::LarK : K::SmaK) << i;

  const auto a3 = named_config("A").stage_layout(2);
  EXPECT_EQ(a3, std::vector<K>(6, K::LarK));
}

TEST(Config, CustomDepthStrings) {
  const auto cfg = custom_config("1,1,1+0,1", 8, 10);
  EXPECT_EQ(cfg.depths, (std::array<std::size_t, 4>{1, 1, 1, 1}));
  EXPECT_EQ(cfg.num_classes, 10u);
  EXPECT_THROW(custom_config("1,1,2+3,1", 8), ConfigError);
  EXPECT_THROW(custom_config("1,1,1", 8), ConfigError);
  EXPECT_THROW(custom_config("1,1,x,1", 8), ConfigError);
  EXPECT_THROW(custom_config("1,1,1,1", 6).validate(), ConfigError);
}

TEST(ParamCount, ToyConfigByHand) {
  // Widths 8, 16, 32, 64; stage 1 SmaK, the rest LarK. Merged:
  //   stem        3*4*9+4 + 4*8*9+8                 =   408
  //   stage1      SE 42 + FFN 616 + dw 72+8          =   738
  //   transition1 8*16*9+16                          =  1168
  //   stage2      SE 148 + FFN 2256 + dw 16*169+16   =  5124
  //   transition2 16*32*9+32                         =  4640
  //   stage3      SE 552 + FFN 8608 + dw 32*169+32   = 14600
  //   transition3 32*64*9+64                         = 18496
  //   stage4      SE 2128 + FFN 33600 + dw 64*169+64 = 46608
  //   head        64*10+10                           =   650
  const auto cfg = custom_config("1,1,1+0,1", 8, 10);
  const std::vector<ModuleCount> merged{{"stem", 408},         {"stage1", 738},
                                        {"transition1", 1168}, {"stage2", 5124},
                                        {"transition2", 4640}, {"stage3", 14600},
                                        {"transition3", 18496}, {"stage4", 46608},
                                        {"head", 650}};
  const auto got = analytic_param_breakdown(cfg, Mode::Merged);
  ASSERT_EQ(got.size(), merged.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].module, merged[i].module);
    EXPECT_EQ(got[i].params, merged[i].params) << merged[i].module;
  }
  EXPECT_EQ(analytic_param_count(cfg, Mode::Merged), 92432u);
  // Train structure: BN pairs instead of biases, plus the five extra branches
  // (101 C weights + 5 BNs) in every LarK block.
  EXPECT_EQ(analytic_param_count(cfg, Mode::TrainStructure), 105580u);

  const auto model = build_model(cfg, 0);
  EXPECT_EQ(stored_param_count(model), 105580u);
  EXPECT_EQ(param_count(model), 92432u);
  const auto deployed = merge_for_deploy(model);
  EXPECT_EQ(stored_param_count(deployed), 92432u);
  EXPECT_EQ(stored_param_breakdown(deployed).size(), merged.size());
}

TEST(ParamCount, AnalyticMatchesStoredOnSmallInstances) {
  for (const char* name : {"A", "T"}) {
    const auto cfg = named_config(name);
    InitOptions skeleton;
    skeleton.skeleton = true;
    const auto model = build_model(cfg, 0, skeleton);
    const auto stored = stored_param_breakdown(model);
    const auto analytic = analytic_param_breakdown(cfg, Mode::TrainStructure);
    ASSERT_EQ(stored.size(), analytic.size());
    for (std::size_t i = 0; i < stored.size(); ++i)
      EXPECT_EQ(stored[i].params, analytic[i].params) << name << " " << stored[i].module;
    const auto merged = merge_for_deploy(model);
    EXPECT_EQ(stored_param_count(merged), analytic_param_count(cfg, Mode::Merged)) << name;
  }
}

TEST(ParamCount, PublishedSizesWithinThreePercent) {
  for (const auto& name : instance_names()) {
    const auto cfg = named_config(name);
    const double millions = static_cast<double>(analytic_param_count(cfg, Mode::Merged)) / 1e6;
    const double published = published_params_millions(name);
    EXPECT_LE(std::abs(millions / published - 1.0), 0.03) << name << " " << millions;
    EXPECT_LT(analytic_param_count(cfg, Mode::Merged), analytic_param_count(cfg, Mode::TrainStructure));
  }
}

TEST(Model, StageGeometryAt224) {
  for (const auto& name : instance_names()) {
    const auto cfg = named_config(name);
    const auto shapes = stage_output_shapes(cfg, Shape4{1, 3, 224, 224});
    for (std::size_t s = 0; s < 4; ++s)
      EXPECT_EQ(shapes[s], (Shape4{1, cfg.width << s, 56u >> s, 56u >> s})) << name << s;
  }
  const auto model = build_model(named_config("A"), 0);
  const auto features = forward_features(model, Tensor4(Shape4{1, 3, 224, 224}, 0.1));
  for (std::size_t s = 0; s < 4; ++s) EXPECT_EQ(features[s].shape(), (Shape4{1, 40u << s, 56u >> s, 56u >> s}));
  EXPECT_EQ(forward(model, Tensor4(Shape4{1, 3, 32, 32}, 0.1)).shape(), (Shape4{1, 1000, 1, 1}));
}

TEST(Model, GeometryErrorNamesStage) {
  const auto model = build_model(custom_config("1,1,1+0,1", 8, 10), 0);
  try {
    forward(model, Tensor4(Shape4{1, 3, 48, 48}));
    FAIL() << "expected GeometryError";
  } catch (const GeometryError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 4"), std::string::npos) << e.what();
  }
}

TEST(Model, SameSeedSameParameters) {
  const auto cfg = custom_config("1,1,2+0,1", 16, 10);
  const auto a = build_model(cfg, 7), b = build_model(cfg, 7), c = build_model(cfg, 8);
  std::vector<double> va, vb, vc;
  auto collect = [](std::vector<double>& out) {
    return [&out](const std::string&, const TensorShape&, auto data, bool) {
      out.insert(out.end(), data.begin(), data.end());
    };
  };
  visit_model(a, collect(va));
  visit_model(b, collect(vb));
  visit_model(c, collect(vc));
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, vc);
}

TEST(Model, BatchIndependence) {
  InitOptions o;
  o.perturb_norms = true;
  const auto model = build_model(custom_config("1,1,1+0,1", 8, 10), 3, o);
  Rng rng(1);
  const auto x = random_tensor(Shape4{2, 3, 32, 32}, rng);
  const auto both = forward(model, x);
  for (std::size_t n = 0; n < 2; ++n) {
    Tensor4 one(Shape4{1, 3, 32, 32});
    std::copy_n(x.plane(n, 0), one.size(), one.storage().begin());
    const auto y = forward(model, one);
    EXPECT_TRUE(std::equal(y.storage().begin(), y.storage().end(), both.plane(n, 0)));
  }
}

TEST(Model, MergeForDeployEquivalence) {
  InitOptions o;
  o.perturb_norms = true;
  const auto model = build_model(named_config("A"), 5, o);
  const auto merged = merge_for_deploy(model);
  EXPECT_EQ(merged.mode, Mode::Merged);
  EXPECT_THROW(merge_for_deploy(merged), StateError);
  Rng rng(2);
  for (int t = 0; t < 2; ++t) {
    const auto x = random_tensor(Shape4{1, 3, 64, 64}, rng);
    EXPECT_LE(relative_l1_error(forward(merged, x), forward(model, x)), 1e-9);
  }
}

TEST(Model, MergedKernelSizesPerStage) {
  InitOptions skeleton;
  skeleton.skeleton = true;
  const auto merged = merge_for_deploy(build_model(named_config("S"), 0, skeleton));
  for (const auto& b : merged.stages[0].blocks) EXPECT_EQ(b.dw_kernel(), 3u);
  for (std::size_t s = 1; s < 4; ++s)
    for (const auto& b : merged.stages[s].blocks)
      EXPECT_EQ(b.dw_kernel(), b.kind == K::LarK ? 13u : 3u) << "stage " << s + 1;
  EXPECT_FALSE(merged.head.norm.has_value());
}

}  // namespace
}  // namespace urlk
