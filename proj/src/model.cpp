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

#include "urlk/model.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <utility>

namespace urlk {

// ---------------------------------------------------------------------------
// Configs

DilatedReparamCfg ArchConfig::reparam_cfg(std::size_t channels) const {
  return DilatedReparamCfg::depthwise(channels, large_kernel, reparam_branches);
}

std::vector<BlockKind> ArchConfig::stage_layout(std::size_t stage) const {
  if (stage >= kNumStages) throw ConfigError("stage index " + std::to_string(stage) + " out of range");
  if (stage == 0) return std::vector<BlockKind>(depths[0], BlockKind::SmaK);
  if (stage != 2) return std::vector<BlockKind>(depths[stage], BlockKind::LarK);

  if (stage3_lark + stage3_smak != depths[2])
    throw ConfigError("stage 3 split " + std::to_string(stage3_lark) + "+" +
                      std::to_string(stage3_smak) + " does not add up to depth " +
                      std::to_string(depths[2]));
  if (stage3_smak == 0) return std::vector<BlockKind>(stage3_lark, BlockKind::LarK);
  if (stage3_lark == 0) return std::vector<BlockKind>(stage3_smak, BlockKind::SmaK);
  if (stage3_smak % stage3_lark != 0)
    throw ConfigError("stage 3 split " + std::to_string(stage3_lark) + "+" +
                      std::to_string(stage3_smak) +
                      " cannot be tiled as one LarK followed by a fixed number of SmaK blocks");
  const std::size_t per = stage3_smak / stage3_lark;
  std::vector<BlockKind> layout;
  for (std::size_t i = 0; i < stage3_lark; ++i) {
    layout.push_back(BlockKind::LarK);
    layout.insert(layout.end(), per, BlockKind::SmaK);
  }
  return layout;
}

void ArchConfig::validate() const {
  if (width < kSeReduction || width % kSeReduction != 0)
    throw ConfigError("width C must be a positive multiple of " + std::to_string(kSeReduction) + ", got " +
                      std::to_string(width));
  if (in_channels == 0) throw ConfigError("input channels must be >= 1");
  if (num_classes == 0) throw ConfigError("class count must be >= 1");
  for (std::size_t s = 0; s < kNumStages; ++s) stage_layout(s);
  reparam_cfg(stage_width(1)).validate();
}

const std::vector<std::string>& instance_names() {
  static const std::vector<std::string> names{"A", "F", "P", "N", "T", "S", "B", "L", "XL"};
  return names;
}

namespace {

struct InstanceRow {
  std::array<std::size_t, kNumStages> depths;
  std::size_t lark, smak, width;
  double params_m;
};

const std::map<std::string, InstanceRow>& instance_table() {
  static const std::map<std::string, InstanceRow> table{
      {"A", {{2, 2, 6, 2}, 6, 0, 40, 4.4}},      {"F", {{2, 2, 6, 2}, 6, 0, 48, 6.2}},
      {"P", {{2, 2, 6, 2}, 6, 0, 64, 10.7}},     {"N", {{2, 2, 8, 2}, 8, 0, 80, 18.3}},
      {"T", {{3, 3, 18, 3}, 9, 9, 80, 31.0}},    {"S", {{3, 3, 27, 3}, 9, 18, 96, 55.6}},
      {"B", {{3, 3, 27, 3}, 9, 18, 128, 97.9}},  {"L", {{3, 3, 27, 3}, 9, 18, 192, 218.3}},
      {"XL", {{3, 3, 27, 3}, 9, 18, 256, 386.4}},
  };
  return table;
}

const InstanceRow& lookup(const std::string& name) {
  const auto& table = instance_table();
  const auto it = table.find(name);
  if (it == table.end()) throw ConfigError("unknown model instance '" + name + "'");
  return it->second;
}

std::size_t parse_count(const std::string& text, const std::string& what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size()) throw ConfigError("bad " + what + " '" + text + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

ArchConfig named_config(const std::string& name) {
  const InstanceRow& row = lookup(name);
  ArchConfig cfg;
  cfg.name = name;
  cfg.depths = row.depths;
  cfg.stage3_lark = row.lark;
  cfg.stage3_smak = row.smak;
  cfg.width = row.width;
  return cfg;
}

double published_params_millions(const std::string& name) { return lookup(name).params_m; }

ArchConfig custom_config(const std::string& depths, std::size_t width, std::size_t num_classes,
                         std::size_t in_channels) {
  std::vector<std::string> parts;
  std::stringstream ss(depths);
  for (std::string item; std::getline(ss, item, ',');) parts.push_back(item);
  if (parts.size() != kNumStages)
    throw ConfigError("depths '" + depths + "' must have four comma-separated entries");
  ArchConfig cfg;
  cfg.width = width;
  cfg.num_classes = num_classes;
  cfg.in_channels = in_channels;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    if (s == 2) continue;
    cfg.depths[s] = parse_count(parts[s], "stage depth");
  }
  const auto plus = parts[2].find('+');
  if (plus == std::string::npos) {
    cfg.stage3_lark = parse_count(parts[2], "stage 3 depth");
    cfg.stage3_smak = 0;
  } else {
    cfg.stage3_lark = parse_count(parts[2].substr(0, plus), "stage 3 LarK count");
    cfg.stage3_smak = parse_count(parts[2].substr(plus + 1), "stage 3 SmaK count");
  }
  cfg.depths[2] = cfg.stage3_lark + cfg.stage3_smak;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Build / forward

ModelInstance build_model(const ArchConfig& cfg, std::uint64_t seed, InitOptions options) {
  cfg.validate();
  Rng rng(seed);
  ParamInitializer init(rng, options);
  ModelInstance m;
  m.config = cfg;
  m.stem = make_stem(cfg.in_channels, cfg.width, init);
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const std::size_t c = cfg.stage_width(s);
    if (s > 0) m.transitions[s - 1] = make_transition(cfg.stage_width(s - 1), c, init);
    for (const BlockKind kind : cfg.stage_layout(s))
      m.stages[s].blocks.push_back(kind == BlockKind::LarK ? make_lark_block(cfg.reparam_cfg(c), init)
                                                           : make_smak_block(c, init));
  }
  const std::size_t last = cfg.stage_width(kNumStages - 1);
  m.head.norm = init.bn(last);
  m.head.fc = init.linear(last, cfg.num_classes);
  return m;
}

namespace {

Tensor4 run_downsample(const Tensor4& x, const Downsample& ds, std::size_t stage) {
  try {
    return downsample_forward(x, ds);
  } catch (const GeometryError& e) {
    throw GeometryError("stage " + std::to_string(stage + 1) + " downsampling: " + e.what());
  }
}

void check_mode(const ModelInstance& m) {
  if (m.mode == Mode::Merged && m.head.norm)
    throw StateError("merged forward requested on a model whose head BN is not folded");
  if (m.mode == Mode::TrainStructure && !m.head.norm)
    throw StateError("train-structure model has lost its head BN");
  auto set_mode = [&](const auto& part) {
    if (part.mode != m.mode)
      throw StateError(std::string("model is ") + to_string(m.mode) + " but a component is " +
                       to_string(part.mode));
  };
  set_mode(m.stem);
  for (const auto& t : m.transitions) set_mode(t);
  for (const auto& st : m.stages)
    for (const auto& b : st.blocks) set_mode(b);
}

}  // namespace

std::vector<Tensor4> forward_features(const ModelInstance& model, const Tensor4& x) {
  check_mode(model);
  if (x.c() != model.config.in_channels)
    throw DimensionError("model expects " + std::to_string(model.config.in_channels) +
                         " input channels, got " + std::to_string(x.c()));
  std::vector<Tensor4> features;
  Tensor4 h = run_downsample(x, model.stem, 0);
  for (std::size_t s = 0; s < kNumStages; ++s) {
    if (s > 0) h = run_downsample(h, model.transitions[s - 1], s);
    for (const auto& block : model.stages[s].blocks) h = block_forward(h, block);
    features.push_back(h);
  }
  return features;
}

Tensor4 forward(const ModelInstance& model, const Tensor4& x) {
  const std::vector<Tensor4> features = forward_features(model, x);
  Tensor4 pooled = global_avg_pool(features.back());
  if (model.head.norm) pooled = batchnorm_infer(pooled, *model.head.norm);
  std::vector<double> logits = linear_rows(pooled.data(), pooled.n(), model.head.fc);
  return Tensor4(Shape4{x.n(), model.config.num_classes, 1, 1}, std::move(logits));
}

std::array<Shape4, kNumStages> stage_output_shapes(const ArchConfig& cfg, const Shape4& input) {
  cfg.validate();
  if (input.c != cfg.in_channels)
    throw DimensionError("model expects " + std::to_string(cfg.in_channels) +
                         " input channels, got " + std::to_string(input.c));
  std::array<Shape4, kNumStages> shapes{};
  Shape4 s = input;
  auto halve = [&](std::size_t stage, std::size_t layers) {
    for (std::size_t i = 0; i < layers; ++i) {
      if (s.h % 2 != 0 || s.w % 2 != 0)
        throw GeometryError("stage " + std::to_string(stage + 1) + " downsampling: spatial size " +
                            std::to_string(s.h) + "x" + std::to_string(s.w) +
                            " cannot be halved exactly");
      s.h = conv_output_size(s.h, 3, 2, 1, 1);
      s.w = conv_output_size(s.w, 3, 2, 1, 1);
    }
  };
  for (std::size_t st = 0; st < kNumStages; ++st) {
    halve(st, st == 0 ? 2 : 1);
    s.c = cfg.stage_width(st);
    shapes[st] = s;
  }
  return shapes;
}

// ---------------------------------------------------------------------------
// Merge

Linear fold_bn_into_linear(const BnParams& bn, const Linear& fc) {
  bn.validate();
  fc.validate();
  if (bn.channels() != fc.in_features)
    throw DimensionError("fold_bn_into_linear: bn has " + std::to_string(bn.channels()) +
                         " channels, linear expects " + std::to_string(fc.in_features));
  Linear out = fc;
  if (out.bias.empty()) out.bias.assign(fc.out_features, 0.0);
  std::vector<double> scale(bn.channels()), shift(bn.channels());
  for (std::size_t c = 0; c < bn.channels(); ++c) {
    scale[c] = bn.gamma[c] / std::sqrt(bn.running_var[c] + bn.eps);
    shift[c] = bn.beta[c] - bn.running_mean[c] * scale[c];
  }
  for (std::size_t o = 0; o < fc.out_features; ++o) {
    double* row = out.weight.data() + o * fc.in_features;
    double extra = 0.0;
    for (std::size_t c = 0; c < fc.in_features; ++c) {
      extra += row[c] * shift[c];
      row[c] *= scale[c];
    }
    out.bias[o] += extra;
  }
  return out;
}

ModelInstance merge_for_deploy(const ModelInstance& model) {
  return merge_for_deploy(ModelInstance(model));
}

ModelInstance merge_for_deploy(ModelInstance&& model) {
  if (model.mode == Mode::Merged) throw StateError("model is already merged");
  check_mode(model);
  model.stem = merge_downsample(std::move(model.stem));
  for (auto& t : model.transitions) t = merge_downsample(std::move(t));
  for (auto& st : model.stages)
    for (auto& b : st.blocks) b = merge_block(std::move(b));
  model.head.fc = fold_bn_into_linear(*model.head.norm, model.head.fc);
  model.head.norm.reset();
  model.mode = Mode::Merged;
  return std::move(model);
}

// ---------------------------------------------------------------------------
// Parameter counting

std::vector<ModuleCount> stored_param_breakdown(const ModelInstance& model) {
  std::vector<ModuleCount> out;
  visit_model(model, [&](const std::string& name, const TensorShape&, auto data, bool buffer) {
    if (buffer) return;
    const std::string module = name.substr(0, name.find('.'));
    if (out.empty() || out.back().module != module) out.push_back({module, 0});
    out.back().params += data.size();
  });
  return out;
}

std::size_t stored_param_count(const ModelInstance& model) {
  std::size_t total = 0;
  for (const auto& m : stored_param_breakdown(model)) total += m.params;
  return total;
}

std::vector<ModuleCount> analytic_param_breakdown(const ArchConfig& cfg, Mode mode) {
  cfg.validate();
  const bool merged = mode == Mode::Merged;
  // A stride-2 3x3 conv and the BN after it: bias once folded, else gamma/beta.
  auto down_conv = [&](std::size_t in, std::size_t out) {
    return in * out * 9 + (merged ? out : 2 * out);
  };
  auto block = [&](BlockKind kind, std::size_t c) {
    const std::size_t h = c / kSeReduction;
    const std::size_t e = c * kFfnExpansion;
    std::size_t n = (c * h + h) + (h * c + c);  // SE
    n += (c * e + e) + 2 * e + e * c;           // pw1, GRN, pw2 weight
    n += merged ? c : 2 * c;                    // pw2 bias or trailing BN
    if (merged) {
      const std::size_t k = kind == BlockKind::LarK ? cfg.large_kernel : 3;
      n += c * k * k + c;
    } else if (kind == BlockKind::LarK) {
      n += c * cfg.large_kernel * cfg.large_kernel + 2 * c;
      for (const auto& b : cfg.reparam_branches) n += c * b.kernel * b.kernel + 2 * c;
      n += 2 * c;  // dw_norm
    } else {
      n += c * 9 + 2 * c;
    }
    return n;
  };

  std::vector<ModuleCount> out;
  out.push_back({"stem", down_conv(cfg.in_channels, cfg.width / 2) + down_conv(cfg.width / 2, cfg.width)});
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const std::size_t c = cfg.stage_width(s);
    if (s > 0) out.push_back({"transition" + std::to_string(s), down_conv(cfg.stage_width(s - 1), c)});
    std::size_t n = 0;
    for (const BlockKind kind : cfg.stage_layout(s)) n += block(kind, c);
    out.push_back({"stage" + std::to_string(s + 1), n});
  }
  const std::size_t last = cfg.stage_width(kNumStages - 1);
  out.push_back({"head", last * cfg.num_classes + cfg.num_classes + (merged ? 0 : 2 * last)});
  return out;
}

std::size_t analytic_param_count(const ArchConfig& cfg, Mode mode) {
  std::size_t total = 0;
  for (const auto& m : analytic_param_breakdown(cfg, mode)) total += m.params;
  return total;
}

std::size_t param_count(const ModelInstance& model) {
  if (model.mode == Mode::Merged) return stored_param_count(model);
  return analytic_param_count(model.config, Mode::Merged);
}

}  // namespace urlk
