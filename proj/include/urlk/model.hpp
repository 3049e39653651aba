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

// Four-stage large-kernel backbone and its named instances.
//
//   stem (2x stride-2 3x3) -> stage1 -> transition -> stage2 -> transition
//   -> stage3 -> transition -> stage4 -> GAP -> BN -> linear
//
// Stage widths are C, 2C, 4C, 8C. Stage 1 is all SmaK, stages 2 and 4 all
// LarK. Stage 3 mixes L LarK and S SmaK blocks: each LarK is followed by
// S / L SmaK blocks.

#ifndef URLK_MODEL_HPP_
#define URLK_MODEL_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "urlk/blocks.hpp"

namespace urlk {

inline constexpr std::size_t kNumStages = 4;

struct ArchConfig {
  std::string name;  // instance letter, empty for custom configs
  std::array<std::size_t, kNumStages> depths{3, 3, 9, 3};  // depths[2] = LarK + SmaK
  std::size_t stage3_lark = 9;
  std::size_t stage3_smak = 0;
  std::size_t width = 96;  // C
  std::size_t in_channels = 3;
  std::size_t num_classes = 1000;
  std::size_t large_kernel = 13;
  std::vector<BranchGeometry> reparam_branches{{5, 1}, {7, 2}, {3, 3}, {3, 4}, {3, 5}};

  std::size_t stage_width(std::size_t stage) const { return width << stage; }
  DilatedReparamCfg reparam_cfg(std::size_t channels) const;
  // Block kinds of a stage (0-based) in execution order.
  std::vector<BlockKind> stage_layout(std::size_t stage) const;
  // ConfigError on a stage-3 split that does not tile, zero widths, ...
  void validate() const;
};

// "A", "F", "P", "N", "T", "S", "B", "L", "XL".
const std::vector<std::string>& instance_names();
ArchConfig named_config(const std::string& name);
// Published parameter count (millions) of a named instance.
double published_params_millions(const std::string& name);

// Parses "N1,N2,L+S,N4" (e.g. "3,3,9+18,3"); N3 may be a plain integer for
// an all-LarK stage 3.
ArchConfig custom_config(const std::string& depths, std::size_t width,
                         std::size_t num_classes = 1000, std::size_t in_channels = 3);

struct Stage {
  std::vector<Block> blocks;
};

struct ClassifierHead {
  std::optional<BnParams> norm;  // folded into fc once merged
  Linear fc;
};

struct ModelInstance {
  ArchConfig config;
  Mode mode = Mode::TrainStructure;
  Downsample stem;
  std::array<Downsample, kNumStages - 1> transitions;  // before stages 2, 3, 4
  std::array<Stage, kNumStages> stages;
  ClassifierHead head;

  const std::string& name() const { return config.name; }
};

// Deterministic from seed: one generator consumed stem, stage 1, transition,
// stage 2, ... head. Weights truncated normal (std 0.02), biases 0, BN (1, 0).
ModelInstance build_model(const ArchConfig& cfg, std::uint64_t seed, InitOptions options = {});

// Logits as (n, classes, 1, 1).
Tensor4 forward(const ModelInstance& model, const Tensor4& x);
// Stage outputs 1..4.
std::vector<Tensor4> forward_features(const ModelInstance& model, const Tensor4& x);
// Stage output shapes for an input shape, from layer geometry alone.
std::array<Shape4, kNumStages> stage_output_shapes(const ArchConfig& cfg, const Shape4& input);

// Folds every BN and collapses every depthwise stage. StateError if the model
// is already merged. The rvalue overload reuses the source storage.
ModelInstance merge_for_deploy(const ModelInstance& model);
ModelInstance merge_for_deploy(ModelInstance&& model);

// y = fc(BN(x)) as a single linear map.
Linear fold_bn_into_linear(const BnParams& bn, const Linear& fc);

template <typename M, typename Fn>
void visit_model(M& model, Fn&& fn) {
  visit_downsample(model.stem, "stem", fn);
  for (std::size_t s = 0; s < kNumStages; ++s) {
    if (s > 0) visit_downsample(model.transitions[s - 1], "transition" + std::to_string(s), fn);
    auto& blocks = model.stages[s].blocks;
    for (std::size_t b = 0; b < blocks.size(); ++b)
      visit_block(blocks[b], "stage" + std::to_string(s + 1) + ".block" + std::to_string(b), fn);
  }
  if (model.head.norm) visit_bn(*model.head.norm, "head.norm", fn);
  visit_linear(model.head.fc, "head.fc", fn);
}

struct ModuleCount {
  std::string module;  // stem, stage1, transition1, ..., head
  std::size_t params = 0;
};

// Counts the arrays actually stored in the model, per module.
std::vector<ModuleCount> stored_param_breakdown(const ModelInstance& model);
std::size_t stored_param_count(const ModelInstance& model);

// Closed-form counts from the config alone for either structure.
std::vector<ModuleCount> analytic_param_breakdown(const ArchConfig& cfg, Mode mode);
std::size_t analytic_param_count(const ArchConfig& cfg, Mode mode);

// Scalar parameters of the deploy-merged model, classifier head included.
std::size_t param_count(const ModelInstance& model);

}  // namespace urlk

#endif  // URLK_MODEL_HPP_
