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

#include "urlk/blocks.hpp"

#include <algorithm>
#include <string>
#include <utility>

namespace urlk {

const char* to_string(BlockKind kind) { return kind == BlockKind::LarK ? "LarK" : "SmaK"; }

const char* to_string(Mode mode) {
  return mode == Mode::Merged ? "merged" : "train-structure";
}

Mode parse_mode(const std::string& text) {
  if (text == "train" || text == "train-structure") return Mode::TrainStructure;
  if (text == "merged" || text == "deploy") return Mode::Merged;
  throw ConfigError("unknown mode '" + text + "' (expected train-structure or merged)");
}

// ---------------------------------------------------------------------------
// SE

void SeBlock::validate() const {
  reduce.validate();
  expand.validate();
  if (expand.in_features != reduce.out_features || expand.out_features != reduce.in_features)
    throw DimensionError("se: reduce " + std::to_string(reduce.in_features) + "->" +
                         std::to_string(reduce.out_features) + " does not pair with expand " +
                         std::to_string(expand.in_features) + "->" +
                         std::to_string(expand.out_features));
}

std::vector<double> se_gate(const Tensor4& x, const SeBlock& se) {
  se.validate();
  if (x.c() != se.channels())
    throw DimensionError("se: input has " + std::to_string(x.c()) + " channels, block has " +
                         std::to_string(se.channels()));
  const Tensor4 pooled = global_avg_pool(x);
  std::vector<double> hidden = linear_rows(pooled.data(), x.n(), se.reduce);
  for (double& v : hidden) v = v > 0.0 ? v : 0.0;
  std::vector<double> gate = linear_rows(hidden, x.n(), se.expand);
  for (double& v : gate) v = sigmoid(v);
  return gate;
}

Tensor4 se_forward(const Tensor4& x, const SeBlock& se) {
  return scale_channels(x, se_gate(x, se));
}

// ---------------------------------------------------------------------------
// FFN

void FfnBlock::validate() const {
  pw1.validate();
  pw2.validate();
  if (pw1.kernel_h() != 1 || pw1.kernel_w() != 1 || pw2.kernel_h() != 1 || pw2.kernel_w() != 1)
    throw DimensionError("ffn: pointwise layers must be 1x1");
  if (pw2.in_channels() != pw1.out_channels() || pw2.out_channels() != pw1.in_channels())
    throw DimensionError("ffn: pw1 " + pw1.weight.shape().str() + " and pw2 " +
                         pw2.weight.shape().str() + " do not compose");
  if (grn_gamma.size() != hidden() || grn_beta.size() != hidden())
    throw DimensionError("ffn: grn params must have length " + std::to_string(hidden()));
}

Tensor4 ffn_forward(const Tensor4& x, const FfnBlock& ffn) {
  ffn.validate();
  if (x.c() != ffn.channels())
    throw DimensionError("ffn: input has " + std::to_string(x.c()) + " channels, block has " +
                         std::to_string(ffn.channels()));
  Tensor4 h = gelu(conv2d(x, ffn.pw1));
  h = grn(h, ffn.grn_gamma, ffn.grn_beta);
  return conv2d(h, ffn.pw2);
}

// ---------------------------------------------------------------------------
// Block

std::size_t Block::dw_kernel() const {
  if (reparam) return reparam->cfg.kernel_size;
  if (dw_conv) return dw_conv->kernel_h();
  return 0;
}

bool Block::is_merged() const {
  return !reparam && dw_conv && dw_conv->bias && !dw_norm && !ffn_norm;
}

namespace {

void check_structure(const Block& b) {
  if (b.mode == Mode::Merged) {
    if (!b.is_merged())
      throw StateError(std::string("merged forward requested on a ") + to_string(b.kind) +
                       " block that has not been merged");
    return;
  }
  const bool dw_ok = b.kind == BlockKind::LarK ? b.reparam.has_value() : b.dw_conv.has_value();
  if (!dw_ok || !b.dw_norm || !b.ffn_norm)
    throw StateError(std::string("train-structure forward requested on a ") + to_string(b.kind) +
                     " block without its branch structure");
}

}  // namespace

Tensor4 depthwise_forward(const Tensor4& x, const Block& block) {
  check_structure(block);
  if (x.c() != block.channels)
    throw DimensionError("block: input has " + std::to_string(x.c()) + " channels, block has " +
                         std::to_string(block.channels));
  if (block.mode == Mode::Merged) return conv2d(x, *block.dw_conv);
  const Tensor4 d = block.reparam ? block.reparam->forward(x) : conv2d(x, *block.dw_conv);
  return batchnorm_infer(d, *block.dw_norm);
}

Tensor4 block_forward(const Tensor4& x, const Block& block) {
  const Tensor4 y = add(x, se_forward(depthwise_forward(x, block), block.se));
  Tensor4 f = ffn_forward(y, block.ffn);
  if (block.ffn_norm) f = batchnorm_infer(f, *block.ffn_norm);
  return add(y, f);
}

Block merge_block(const Block& block) { return merge_block(Block(block)); }

Block merge_block(Block&& block) {
  if (block.mode == Mode::Merged) throw StateError("block is already merged");
  check_structure(block);
  ConvLayer dw = block.reparam ? merge_dilated_reparam(*block.reparam) : std::move(*block.dw_conv);
  block.dw_conv = fuse_bn(dw, *block.dw_norm);
  block.reparam.reset();
  block.dw_norm.reset();
  block.ffn.pw2 = fuse_bn(block.ffn.pw2, *block.ffn_norm);
  block.ffn_norm.reset();
  block.mode = Mode::Merged;
  return std::move(block);
}

// ---------------------------------------------------------------------------
// Downsampling

Shape4 downsample_output_shape(const Shape4& in, const Downsample& ds) {
  Shape4 s = in;
  for (std::size_t i = 0; i < ds.layers.size(); ++i) {
    if (s.h % 2 != 0 || s.w % 2 != 0)
      throw GeometryError(std::string(ds.kind == DownsampleKind::Stem ? "stem" : "transition") +
                          " layer " + std::to_string(i) + ": spatial size " +
                          std::to_string(s.h) + "x" + std::to_string(s.w) +
                          " cannot be halved exactly");
    s = conv_output_shape(s, ds.layers[i].conv);
  }
  return s;
}

Tensor4 downsample_forward(const Tensor4& x, const Downsample& ds) {
  downsample_output_shape(x.shape(), ds);
  Tensor4 h = x;
  for (const auto& layer : ds.layers) {
    if (ds.mode == Mode::Merged && layer.bn)
      throw StateError("merged forward requested on an unmerged downsampling block");
    if (ds.mode == Mode::TrainStructure && !layer.bn)
      throw StateError("train-structure downsampling block has lost its BN");
    h = conv2d(h, layer.conv);
    if (layer.bn) h = batchnorm_infer(h, *layer.bn);
    h = gelu(h);
  }
  return h;
}

Downsample merge_downsample(const Downsample& ds) { return merge_downsample(Downsample(ds)); }

Downsample merge_downsample(Downsample&& ds) {
  if (ds.mode == Mode::Merged) throw StateError("downsampling block is already merged");
  for (auto& layer : ds.layers) {
    if (!layer.bn) throw StateError("train-structure downsampling block has lost its BN");
    layer.conv = fuse_bn(layer.conv, *layer.bn);
    layer.bn.reset();
  }
  ds.mode = Mode::Merged;
  return std::move(ds);
}

// ---------------------------------------------------------------------------
// Construction

Tensor4 ParamInitializer::weight(Shape4 shape) {
  Tensor4 t(shape);
  if (options_.skeleton) return t;
  for (double& v : t.data()) v = rng_.truncated_normal(options_.weight_std);
  return t;
}

std::vector<double> ParamInitializer::bias(std::size_t n) {
  std::vector<double> b(n, 0.0);
  if (options_.perturb_norms && !options_.skeleton) rng_.fill_uniform<double>(b, -0.1, 0.1);
  return b;
}

BnParams ParamInitializer::bn(std::size_t channels) {
  BnParams bn = BnParams::identity(channels);
  if (!options_.perturb_norms || options_.skeleton) return bn;
  for (std::size_t c = 0; c < channels; ++c) {
    bn.gamma[c] = rng_.uniform(0.5, 1.5);
    bn.beta[c] = rng_.uniform(-0.2, 0.2);
    bn.running_mean[c] = rng_.uniform(-0.2, 0.2);
    bn.running_var[c] = rng_.uniform(0.5, 2.0);
  }
  return bn;
}

Linear ParamInitializer::linear(std::size_t in, std::size_t out) {
  Linear lin;
  lin.in_features = in;
  lin.out_features = out;
  lin.weight = std::move(weight(Shape4{1, 1, out, in}).storage());
  lin.bias = bias(out);
  return lin;
}

std::vector<double> ParamInitializer::grn_param(std::size_t n) {
  std::vector<double> p(n, 0.0);
  if (options_.perturb_norms && !options_.skeleton) rng_.fill_uniform<double>(p, -0.2, 0.2);
  return p;
}

namespace {

ConvLayer pointwise(std::size_t in, std::size_t out, bool with_bias, ParamInitializer& init) {
  ConvLayer conv;
  conv.weight = init.weight(Shape4{out, in, 1, 1});
  if (with_bias) conv.bias = init.bias(out);
  return conv;
}

ConvLayer stride2_conv3x3(std::size_t in, std::size_t out, ParamInitializer& init) {
  ConvLayer conv;
  conv.weight = init.weight(Shape4{out, in, 3, 3});
  conv.stride = {2, 2};
  conv.padding = {1, 1};
  return conv;
}

}  // namespace

SeBlock make_se(std::size_t channels, ParamInitializer& init) {
  const std::size_t hidden = channels / kSeReduction;
  if (hidden == 0)
    throw ConfigError("se: " + std::to_string(channels) + " channels leave no hidden units at 1/" +
                      std::to_string(kSeReduction) + " reduction");
  SeBlock se;
  se.reduce = init.linear(channels, hidden);
  se.expand = init.linear(hidden, channels);
  return se;
}

FfnBlock make_ffn(std::size_t channels, ParamInitializer& init) {
  const std::size_t hidden = channels * kFfnExpansion;
  FfnBlock ffn;
  ffn.pw1 = pointwise(channels, hidden, true, init);
  ffn.grn_gamma = init.grn_param(hidden);
  ffn.grn_beta = init.grn_param(hidden);
  ffn.pw2 = pointwise(hidden, channels, false, init);
  return ffn;
}

Block make_lark_block(const DilatedReparamCfg& cfg, ParamInitializer& init) {
  cfg.validate();
  if (!cfg.is_depthwise()) throw ConfigError("LarK block needs a depthwise reparam config");
  Block b;
  b.kind = BlockKind::LarK;
  b.channels = cfg.in_channels;
  DilatedReparamBlock rb;
  rb.cfg = cfg;
  for (const auto& g : cfg.all_branches()) {
    DilatedBranch branch;
    branch.conv = make_branch_conv<double>(
        cfg, g, init.weight(Shape4{cfg.out_channels, cfg.in_channels / cfg.groups, g.kernel, g.kernel}));
    branch.bn = init.bn(cfg.out_channels);
    rb.branches.push_back(std::move(branch));
  }
  b.reparam = std::move(rb);
  b.dw_norm = init.bn(b.channels);
  b.se = make_se(b.channels, init);
  b.ffn = make_ffn(b.channels, init);
  b.ffn_norm = init.bn(b.channels);
  return b;
}

Block make_smak_block(std::size_t channels, ParamInitializer& init) {
  Block b;
  b.kind = BlockKind::SmaK;
  b.channels = channels;
  ConvLayer dw;
  dw.weight = init.weight(Shape4{channels, 1, 3, 3});
  dw.groups = channels;
  dw.padding = {1, 1};
  b.dw_conv = std::move(dw);
  b.dw_norm = init.bn(channels);
  b.se = make_se(channels, init);
  b.ffn = make_ffn(channels, init);
  b.ffn_norm = init.bn(channels);
  return b;
}

Downsample make_stem(std::size_t in_channels, std::size_t out_channels, ParamInitializer& init) {
  const std::size_t mid = std::max<std::size_t>(1, out_channels / 2);
  Downsample ds;
  ds.kind = DownsampleKind::Stem;
  ds.layers.push_back({stride2_conv3x3(in_channels, mid, init), init.bn(mid)});
  ds.layers.push_back({stride2_conv3x3(mid, out_channels, init), init.bn(out_channels)});
  return ds;
}

Downsample make_transition(std::size_t in_channels, std::size_t out_channels,
                           ParamInitializer& init) {
  Downsample ds;
  ds.kind = DownsampleKind::Transition;
  ds.layers.push_back({stride2_conv3x3(in_channels, out_channels, init), init.bn(out_channels)});
  return ds;
}

std::size_t param_count(const Block& block) {
  std::size_t total = 0;
  visit_block(block, "", [&](const std::string&, const TensorShape&, auto data, bool buffer) {
    if (!buffer) total += data.size();
  });
  return total;
}

std::size_t param_count(const Downsample& ds) {
  std::size_t total = 0;
  visit_downsample(ds, "", [&](const std::string&, const TensorShape&, auto data, bool buffer) {
    if (!buffer) total += data.size();
  });
  return total;
}

}  // namespace urlk
