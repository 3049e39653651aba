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

#include "cli.hpp"

#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <new>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "urlk/array_io.hpp"
#include "urlk/container.hpp"
#include "urlk/embed.hpp"
#include "urlk/errors.hpp"
#include "urlk/model.hpp"
#include "urlk/parallel.hpp"
#include "urlk/random.hpp"
#include "urlk/reparam.hpp"

namespace urlk::cli {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

Json header(const char* command) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = command;
  return j;
}

void emit(std::ostream& out, const Json& j) { out << j.dump(2) << "\n"; }

std::size_t parse_size(const std::string& text, const std::string& what) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw ConfigError(what + ": '" + text + "' is not a non-negative integer");
  return v;
}

std::vector<std::size_t> parse_list(const std::string& text, char sep, const std::string& what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, sep);) out.push_back(parse_size(item, what));
  if (out.empty()) throw ConfigError(what + " is empty");
  return out;
}

// "RxC" / "HxW"
std::pair<std::size_t, std::size_t> parse_pair(const std::string& text, const std::string& what) {
  const auto v = parse_list(text, 'x', what);
  if (v.size() != 2) throw ConfigError(what + ": expected AxB, got '" + text + "'");
  return {v[0], v[1]};
}

// Model selection shared by several subcommands.
struct ModelArgs {
  std::string model;
  std::string depths;
  std::size_t width = 0;
  std::optional<std::size_t> classes;
  std::size_t in_channels = 3;

  void attach(CLI::App* app) {
    app->add_option("--model", model, "named instance (A F P N T S B L XL)");
    app->add_option("--depths", depths, "custom depths, e.g. 2,2,6+0,2 (stage 3 as LarK+SmaK)");
    app->add_option("--width", width, "custom base width C");
    app->add_option("--classes", classes, "number of classes");
    app->add_option("--in-channels", in_channels, "input channels C'");
  }

  ArchConfig resolve() const {
    ArchConfig cfg;
    if (!model.empty()) {
      if (!depths.empty()) throw ConfigError("--model and --depths are exclusive");
      cfg = named_config(model);
      if (classes) cfg.num_classes = *classes;
      cfg.in_channels = in_channels;
    } else if (!depths.empty()) {
      if (width == 0) throw ConfigError("--depths needs --width");
      cfg = custom_config(depths, width, classes.value_or(1000), in_channels);
    } else {
      throw ConfigError("pass --model NAME or --depths/--width");
    }
    cfg.validate();
    return cfg;
  }
};

std::string label(const ArchConfig& cfg) { return cfg.name.empty() ? "custom" : cfg.name; }

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
  ModelArgs model;
  std::vector<std::string> adhoc;
  std::uint64_t seed = 0;
  std::size_t trials = 0;  // 0: 5 for models, 20 for --adhoc
  std::optional<double> tolerance;
  bool f32 = false;
  std::size_t res = 64;
};

DilatedReparamCfg parse_adhoc(const std::vector<std::string>& tokens) {
  std::map<std::string, std::string> kv;
  for (const auto& t : tokens) {
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("--adhoc expects key=value, got '" + t + "'");
    kv[t.substr(0, eq)] = t.substr(eq + 1);
  }
  auto take = [&](const std::string& key, const std::string& fallback) {
    const auto it = kv.find(key);
    std::string v = it == kv.end() ? fallback : it->second;
    if (it != kv.end()) kv.erase(it);
    return v;
  };
  DilatedReparamCfg cfg;
  cfg.in_channels = parse_size(take("in", "4"), "in");
  cfg.out_channels = parse_size(take("out", std::to_string(cfg.in_channels)), "out");
  cfg.groups = parse_size(take("groups", "1"), "groups");
  cfg.kernel_size = parse_size(take("K", "13"), "K");
  const auto ks = parse_list(take("k", "3"), ',', "k");
  const auto rs = parse_list(take("r", "3"), ',', "r");
  if (!kv.empty()) throw ConfigError("--adhoc: unknown key '" + kv.begin()->first + "'");
  if (ks.size() != rs.size()) throw ConfigError("--adhoc: k and r lists differ in length");
  for (std::size_t i = 0; i < ks.size(); ++i) cfg.branches.push_back({ks[i], rs[i]});
  cfg.validate();
  return cfg;
}

template <typename T>
double adhoc_trial(const DilatedReparamCfg& cfg, Rng& rng, std::size_t res) {
  const auto block = random_reparam_block<T>(cfg, rng, true);
  const auto merged = merge_dilated_reparam(block);
  const auto x = random_tensor<T>(Shape4{2, cfg.in_channels, res, res}, rng);
  return relative_l1_error(conv2d(x, merged), block.forward(x));
}

int verify_adhoc(const VerifyArgs& a, std::ostream& out) {
  const DilatedReparamCfg cfg = parse_adhoc(a.adhoc);
  const std::size_t trials = a.trials ? a.trials : 20;
  const double tol = a.tolerance.value_or(a.f32 ? 1e-5 : 1e-9);
  Rng rng(a.seed);
  std::vector<double> errs;
  for (std::size_t t = 0; t < trials; ++t)
    errs.push_back(a.f32 ? adhoc_trial<float>(cfg, rng, a.res) : adhoc_trial<double>(cfg, rng, a.res));
  const double worst = *std::max_element(errs.begin(), errs.end());

  Json j = header("verify");
  j["kind"] = "adhoc";
  j["dtype"] = a.f32 ? "f32" : "f64";
  j["config"] = {{"in_channels", cfg.in_channels}, {"out_channels", cfg.out_channels},
                 {"groups", cfg.groups},           {"kernel_size", cfg.kernel_size}};
  Json branches = Json::array();
  for (const auto& b : cfg.branches)
    branches.push_back({{"kernel", b.kernel},
                        {"dilation", b.dilation},
                        {"equivalent", equivalent_kernel_size(b.kernel, b.dilation)}});
  j["config"]["branches"] = branches;
  j["seed"] = a.seed;
  j["trials"] = trials;
  j["resolution"] = a.res;
  j["tolerance"] = tol;
  j["rel_errs"] = errs;
  j["max_rel_err"] = worst;
  j["pass"] = worst <= tol;
  emit(out, j);
  return worst <= tol ? kOk : kVerificationFailed;
}

int verify_model(const VerifyArgs& a, std::ostream& out) {
  if (a.f32) throw ConfigError("--f32 applies to --adhoc only; model verification runs in f64");
  const ArchConfig cfg = a.model.resolve();
  const std::size_t trials = a.trials ? a.trials : 5;
  const double tol = a.tolerance.value_or(1e-9);
  if (a.res % 32 != 0) throw ConfigError("--res must be a multiple of 32");

  InitOptions init;
  init.perturb_norms = true;
  ModelInstance model = build_model(cfg, a.seed, init);
  Rng rng(a.seed ^ 0x5eedULL);

  // Block suite: each block against its own merge, on inputs at the block's
  // natural resolution.
  Json blocks = Json::array();
  double block_max = 0.0;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const std::size_t side = a.res >> (s + 2);
    for (std::size_t b = 0; b < model.stages[s].blocks.size(); ++b) {
      const Block& block = model.stages[s].blocks[b];
      const Block merged = merge_block(block);
      double worst = 0.0;
      for (std::size_t t = 0; t < trials; ++t) {
        const Tensor4 x = random_tensor(Shape4{1, block.channels, side, side}, rng);
        worst = std::max(worst, relative_l1_error(block_forward(x, merged), block_forward(x, block)));
      }
      block_max = std::max(block_max, worst);
      blocks.push_back({{"name", "stage" + std::to_string(s + 1) + ".block" + std::to_string(b)},
                        {"kind", to_string(block.kind)},
                        {"kernel", merged.dw_kernel()},
                        {"max_rel_err", worst}});
    }
  }

  // Model suite: train logits first, then merge in place to bound memory.
  std::vector<Tensor4> inputs, reference;
  for (std::size_t t = 0; t < trials; ++t) {
    inputs.push_back(random_tensor(Shape4{1, cfg.in_channels, a.res, a.res}, rng));
    reference.push_back(forward(model, inputs.back()));
  }
  const ModelInstance merged = merge_for_deploy(std::move(model));
  std::vector<double> model_errs;
  for (std::size_t t = 0; t < trials; ++t)
    model_errs.push_back(relative_l1_error(forward(merged, inputs[t]), reference[t]));
  const double model_max = *std::max_element(model_errs.begin(), model_errs.end());
  const bool pass = block_max <= tol && model_max <= tol;

  Json j = header("verify");
  j["kind"] = "model";
  j["model"] = label(cfg);
  j["dtype"] = "f64";
  j["seed"] = a.seed;
  j["trials"] = trials;
  j["resolution"] = a.res;
  j["tolerance"] = tol;
  j["blocks"] = blocks;
  j["block_max_rel_err"] = block_max;
  j["model_rel_errs"] = model_errs;
  j["model_max_rel_err"] = model_max;
  j["max_rel_err"] = std::max(block_max, model_max);
  j["pass"] = pass;
  emit(out, j);
  return pass ? kOk : kVerificationFailed;
}

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  if (a.tolerance && !(*a.tolerance >= 0.0)) throw ConfigError("--tolerance must be >= 0");
  if (a.res == 0) throw ConfigError("--res must be >= 1");
  const bool adhoc = !a.adhoc.empty();
  if (adhoc && (!a.model.model.empty() || !a.model.depths.empty()))
    throw ConfigError("--adhoc and --model/--depths are exclusive");
  return adhoc ? verify_adhoc(a, out) : verify_model(a, out);
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  ModelArgs model;
  std::string mode = "merged";
  std::size_t batch = 8;
  std::size_t res = 64;
  std::size_t runs = 9;
  std::size_t warmup = 2;
  std::uint64_t seed = 0;
  bool compare = false;
};

inline constexpr std::size_t kMinTimedRuns = 5;
inline constexpr std::size_t kMinWarmupRuns = 2;

std::uint64_t available_memory() {
  const long pages = sysconf(_SC_PHYS_PAGES), page = sysconf(_SC_PAGE_SIZE);
  std::uint64_t limit = pages > 0 && page > 0 ? static_cast<std::uint64_t>(pages) * page
                                              : std::numeric_limits<std::uint64_t>::max();
  for (const char* path : {"/sys/fs/cgroup/memory.max", "/sys/fs/cgroup/memory/memory.limit_in_bytes"}) {
    std::ifstream f(path);
    std::string text;
    if (f >> text) {
      std::uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec == std::errc() && v > 0) limit = std::min(limit, v);
    }
  }
  return limit;
}

// Rough upper bound: f64 weights of every model held at once plus a handful of
// live copies of the widest activation (the stage-1 FFN hidden map).
std::uint64_t bench_memory_estimate(const ArchConfig& cfg, const BenchArgs& a) {
  std::uint64_t weights = analytic_param_count(cfg, Mode::TrainStructure);
  if (a.compare || a.mode != "train") weights += analytic_param_count(cfg, Mode::Merged);
  const std::uint64_t side = a.res / 4;
  const std::uint64_t hidden = a.batch * kFfnExpansion * cfg.width * side * side;
  return 8 * (weights + 6 * hidden);
}

std::string digest(const Tensor4& t) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const double v : t.data()) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct Timed {
  std::vector<double> run_ms;
  std::string digest;
};

double time_forward(const ModelInstance& model, const Tensor4& x, Tensor4* logits) {
  const auto t0 = std::chrono::steady_clock::now();
  Tensor4 y = forward(model, x);
  const auto t1 = std::chrono::steady_clock::now();
  if (logits) *logits = std::move(y);
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

Json bench_report(const ArchConfig& cfg, const BenchArgs& a, Mode mode, const Timed& t) {
  const double med = median(t.run_ms);
  Json j;
  j["model"] = label(cfg);
  j["mode"] = to_string(mode);
  j["batch"] = a.batch;
  j["resolution"] = a.res;
  j["warmup_runs"] = a.warmup;
  j["timed_runs"] = t.run_ms.size();
  j["run_ms"] = t.run_ms;
  j["median_ms"] = med;
  j["throughput"] = static_cast<double>(a.batch) * 1000.0 / med;
  j["output_digest"] = t.digest;
  return j;
}

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  const ArchConfig cfg = a.model.resolve();
  const Mode mode = parse_mode(a.mode);
  if (a.runs < kMinTimedRuns) throw ConfigError("--runs must be >= " + std::to_string(kMinTimedRuns));
  if (a.warmup < kMinWarmupRuns)
    throw ConfigError("--warmup must be >= " + std::to_string(kMinWarmupRuns));
  if (a.batch == 0 || a.res == 0 || a.res % 32 != 0)
    throw ConfigError("--batch must be >= 1 and --res a positive multiple of 32");
  const std::uint64_t need = bench_memory_estimate(cfg, a), have = available_memory();
  if (need > have / 10 * 8) {
    err << "advisory: bench needs about " << need / (1 << 20) << " MiB but only " << have / (1 << 20)
        << " MiB are available; lower --batch or --res, or pick a smaller model\n";
    return kUsageError;
  }

  ModelInstance train = build_model(cfg, a.seed);
  Rng rng(a.seed ^ 0xbe4cULL);
  const Tensor4 x = random_tensor(Shape4{a.batch, cfg.in_channels, a.res, a.res}, rng);

  Json j = header("bench");
  j["seed"] = a.seed;
  j["threads"] = thread_count();
  if (!a.compare) {
    const ModelInstance model = mode == Mode::Merged ? merge_for_deploy(std::move(train)) : std::move(train);
    Timed t;
    Tensor4 logits;
    for (std::size_t i = 0; i < a.warmup; ++i) time_forward(model, x, &logits);
    for (std::size_t i = 0; i < a.runs; ++i) t.run_ms.push_back(time_forward(model, x, &logits));
    t.digest = digest(logits);
    j.update(bench_report(cfg, a, mode, t));
    emit(out, j);
    return kOk;
  }

  // Runs alternate between the two structures so drift hits both equally.
  const ModelInstance merged = merge_for_deploy(train);
  Timed tt, tm;
  Tensor4 lt, lm;
  for (std::size_t i = 0; i < a.warmup; ++i) {
    time_forward(train, x, &lt);
    time_forward(merged, x, &lm);
  }
  for (std::size_t i = 0; i < a.runs; ++i) {
    tt.run_ms.push_back(time_forward(train, x, &lt));
    tm.run_ms.push_back(time_forward(merged, x, &lm));
  }
  tt.digest = digest(lt);
  tm.digest = digest(lm);
  const Json rt = bench_report(cfg, a, Mode::TrainStructure, tt);
  const Json rm = bench_report(cfg, a, Mode::Merged, tm);
  j["compare"] = true;
  j["reports"] = Json::array({rt, rm});
  j["speedup"] = rm["throughput"].get<double>() / rt["throughput"].get<double>();
  j["max_rel_err"] = relative_l1_error(lm, lt);
  emit(out, j);
  return kOk;
}

// ---------------------------------------------------------------------------
// params

inline constexpr double kParamTolerance = 0.03;

struct ParamsArgs {
  ModelArgs model;
  std::string mode = "merged";
  bool table = false;
};

Json params_entry(const ArchConfig& cfg, Mode mode) {
  const auto modules = analytic_param_breakdown(cfg, mode);
  std::size_t total = 0;
  Json mods = Json::array();
  for (const auto& m : modules) {
    total += m.params;
    mods.push_back({{"module", m.module}, {"params", m.params}});
  }
  Json j;
  j["model"] = label(cfg);
  j["total"] = total;
  j["total_millions"] = static_cast<double>(total) / 1e6;
  if (!cfg.name.empty() && cfg.num_classes == 1000 && cfg.in_channels == 3) {
    const double published = published_params_millions(cfg.name);
    const double dev = static_cast<double>(total) / 1e6 / published - 1.0;
    j["published_millions"] = published;
    j["deviation"] = dev;
    j["within_tolerance"] = std::abs(dev) <= kParamTolerance;
  }
  j["modules"] = mods;
  return j;
}

void print_table(const Json& report, std::ostream& out) {
  for (const auto& inst : report["instances"]) {
    out << "model " << inst["model"].get<std::string>() << " (" << report["mode"].get<std::string>()
        << ")\n";
    for (const auto& m : inst["modules"])
      out << "  " << std::left << std::setw(14) << m["module"].get<std::string>() << std::right
          << std::setw(14) << m["params"].get<std::size_t>() << "\n";
    out << "  " << std::left << std::setw(14) << "total" << std::right << std::setw(14)
        << inst["total"].get<std::size_t>() << "\n";
    if (inst.contains("published_millions"))
      out << std::fixed << std::setprecision(1) << "  published "
          << inst["published_millions"].get<double>() << " M, deviation " << std::setprecision(2)
          << 100.0 * inst["deviation"].get<double>() << " %\n"
          << std::defaultfloat << std::setprecision(6);
  }
}

int cmd_params(const ParamsArgs& a, std::ostream& out) {
  const Mode mode = parse_mode(a.mode);
  std::vector<ArchConfig> cfgs;
  if (a.model.model == "all") {
    for (const auto& name : instance_names()) {
      ModelArgs m = a.model;
      m.model = name;
      cfgs.push_back(m.resolve());
    }
  } else {
    cfgs.push_back(a.model.resolve());
  }
  Json j = header("params");
  j["mode"] = to_string(mode);
  j["tolerance"] = kParamTolerance;
  j["instances"] = Json::array();
  for (const auto& cfg : cfgs) j["instances"].push_back(params_entry(cfg, mode));
  if (a.table)
    print_table(j, out);
  else
    emit(out, j);
  return kOk;
}

// ---------------------------------------------------------------------------
// export / import / forward

struct ExportArgs {
  ModelArgs model;
  std::uint64_t seed = 0;
  std::string mode = "train";
  std::string dtype = "f64";
  bool perturb_norms = false;
  std::string out;
};

Json model_summary(const ModelInstance& model) {
  Json j;
  j["model"] = label(model.config);
  j["mode"] = to_string(model.mode);
  j["stored_params"] = stored_param_count(model);
  j["params"] = param_count(model);
  return j;
}

int cmd_export(const ExportArgs& a, std::ostream& out) {
  const ArchConfig cfg = a.model.resolve();
  const Mode mode = parse_mode(a.mode);
  const DType dtype = parse_dtype(a.dtype);
  InitOptions init;
  init.perturb_norms = a.perturb_norms;
  ModelInstance model = build_model(cfg, a.seed, init);
  if (mode == Mode::Merged) model = merge_for_deploy(std::move(model));
  save_model(model, a.out, dtype);
  Json j = header("export");
  j.update(model_summary(model));
  j["seed"] = a.seed;
  j["dtype"] = to_string(dtype);
  j["tensors"] = read_manifest(a.out).tensors.size();
  j["path"] = a.out;
  j["bytes"] = fs::file_size(a.out);
  emit(out, j);
  return kOk;
}

struct ImportArgs {
  std::string weights;
  std::string out;
  std::string dtype = "f64";
};

int cmd_import(const ImportArgs& a, std::ostream& out) {
  const Manifest manifest = read_manifest(a.weights);
  const ModelInstance model = load_model(a.weights);
  Json j = header("import");
  j.update(model_summary(model));
  j["path"] = a.weights;
  j["tensors"] = manifest.tensors.size();
  j["arch"] = manifest.arch;
  if (!a.out.empty()) {
    save_model(model, a.out, parse_dtype(a.dtype));
    j["out"] = a.out;
  }
  emit(out, j);
  return kOk;
}

struct ForwardArgs {
  std::string weights;
  std::string input;
  std::string out;
  std::string format = "container";
};

int cmd_forward(const ForwardArgs& a, std::ostream& out) {
  if (a.format != "container" && a.format != "raw")
    throw ConfigError("--format must be container or raw");
  const ModelInstance model = load_model(a.weights);
  ArrayData in = read_array(a.input);
  if (in.shape.size() != 4)
    throw DimensionError("forward input must be rank 4 (B, C, H, W), got rank " +
                         std::to_string(in.shape.size()));
  const Tensor4 x(Shape4{in.shape[0], in.shape[1], in.shape[2], in.shape[3]}, std::move(in.values));
  const Tensor4 logits = forward(model, x);
  const std::vector<std::size_t> shape{logits.n(), logits.c()};
  if (a.format == "raw")
    write_raw_f32(a.out, ArrayData{shape, logits.storage()});
  else
    write_container(a.out, model.config.name, "logits",
                    {NamedTensor{"logits", shape, DType::F64, logits.storage()}});
  Json j = header("forward");
  j["model"] = label(model.config);
  j["mode"] = to_string(model.mode);
  j["input_shape"] = in.shape;
  j["output_shape"] = shape;
  j["format"] = a.format;
  j["out"] = a.out;
  j["output_digest"] = digest(logits);
  emit(out, j);
  return kOk;
}

// ---------------------------------------------------------------------------
// embed

struct EmbedArgs {
  std::string modality;
  std::string input;
  std::string out;
  std::string grid;
  std::size_t nodes = 1;
  std::size_t latent = 0;
  std::string hw;
  std::size_t batch = 1;
  std::string projection;
  std::uint64_t seed = 0;
  std::size_t res = kPointCloudResolution;
  std::string dtype = "f64";
};

void require_rank(const ArrayData& a, std::size_t rank, const std::string& what) {
  if (a.shape.size() != rank)
    throw DimensionError(what + " input must be rank " + std::to_string(rank) + ", got rank " +
                         std::to_string(a.shape.size()));
}

Linear load_projection(const EmbedArgs& a, std::size_t per_node) {
  if (!a.projection.empty()) {
    Linear lin;
    for (auto& t : read_container(a.projection)) {
      if (t.name == "weight") {
        if (t.shape.size() != 2) throw DimensionError("projection weight must be rank 2");
        lin.out_features = t.shape[0];
        lin.in_features = t.shape[1];
        lin.weight = std::move(t.values);
      } else if (t.name == "bias") {
        lin.bias = std::move(t.values);
      }
    }
    if (lin.weight.empty()) throw FormatError("projection container has no 'weight' tensor");
    lin.validate();
    return lin;
  }
  const std::size_t latent = a.latent ? a.latent : per_node;
  if (latent == per_node) return identity_projection(per_node);
  Rng rng(a.seed);
  Linear lin;
  lin.in_features = per_node;
  lin.out_features = latent;
  const double bound = 1.0 / std::sqrt(static_cast<double>(per_node));
  lin.weight.resize(latent * per_node);
  rng.fill_uniform(std::span<double>(lin.weight), -bound, bound);
  return lin;
}

Tensor4 embed_series(const EmbedArgs& a, std::vector<std::size_t>& in_shape) {
  ArrayData in = fs::path(a.input).extension() == ".csv" ? read_csv_series(a.input, a.batch)
                                                         : read_array(a.input);
  require_rank(in, 3, "time-series");
  in_shape = in.shape;
  TimeSeriesBatch batch{in.shape[0], in.shape[1], in.shape[2], std::move(in.values)};
  if (a.nodes == 0 || batch.dims % a.nodes != 0)
    throw DimensionError("time series: D = " + std::to_string(batch.dims) +
                         " is not divisible by n = " + std::to_string(a.nodes));
  TimeSeriesEmbedding opt;
  opt.nodes = a.nodes;
  opt.projection = load_projection(a, batch.dims / a.nodes);
  if (a.hw.empty()) {
    opt.height = batch.length;
    opt.width = opt.projection.out_features;
  } else {
    std::tie(opt.height, opt.width) = parse_pair(a.hw, "--hw");
  }
  return embed_time_series(batch, opt);
}

int cmd_embed(const EmbedArgs& a, std::ostream& out) {
  const DType dtype = parse_dtype(a.dtype);
  std::vector<std::size_t> in_shape;
  Tensor4 map;
  if (a.modality == "time-series") {
    map = embed_series(a, in_shape);
  } else {
    ArrayData in = read_array(a.input);
    in_shape = in.shape;
    if (a.modality == "audio") {
      require_rank(in, 3, "audio");
      map = embed_audio(AudioBatch{in.shape[0], in.shape[1], in.shape[2], std::move(in.values)});
    } else if (a.modality == "point-cloud") {
      require_rank(in, 3, "point-cloud");
      if (in.shape[2] != 3) throw DimensionError("point-cloud input must be (B, P, 3)");
      if (a.res == 0) throw ConfigError("--res must be >= 1");
      map = embed_pointcloud(PointCloudBatch{in.shape[0], in.shape[1], std::move(in.values)},
                             OrthographicProjector(a.res));
    } else if (a.modality == "video") {
      require_rank(in, 5, "video");
      if (in.shape[2] != 3) throw DimensionError("video input must be (B, N_F, 3, h, w)");
      std::optional<FrameGrid> grid;
      if (!a.grid.empty()) {
        const auto [r, c] = parse_pair(a.grid, "--grid");
        grid = FrameGrid{r, c};
      }
      map = embed_video(VideoBatch{in.shape[0], in.shape[1], in.shape[3], in.shape[4], std::move(in.values)},
                        grid);
    } else {
      throw ConfigError("unknown modality '" + a.modality + "'");
    }
  }
  const std::vector<std::size_t> shape = dims(map.shape());
  write_container(a.out, "embed", a.modality, {NamedTensor{"embedding", shape, dtype, map.storage()}});
  Json j = header("embed");
  j["modality"] = a.modality;
  j["input_shape"] = in_shape;
  j["output_shape"] = shape;
  j["dtype"] = to_string(dtype);
  j["out"] = a.out;
  emit(out, j);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"UniRepLKNet CPU inference and kernel-algebra toolkit", "urlk"};
  app.require_subcommand(1);

  VerifyArgs verify;
  auto* v = app.add_subcommand("verify", "check merged structures against the multi-branch ones");
  verify.model.attach(v);
  v->add_option("--adhoc", verify.adhoc, "single reparam block: in= out= groups= K= k= r=")
      ->expected(1, -1);
  v->add_option("--seed", verify.seed);
  v->add_option("--trials", verify.trials, "random inputs (default 5, 20 with --adhoc)");
  v->add_option("--tolerance", verify.tolerance, "max relative error (default 1e-9, 1e-5 with --f32)");
  v->add_flag("--f32", verify.f32, "run --adhoc in 32-bit floats");
  v->add_option("--res", verify.res, "input resolution");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "time forward passes");
  bench.model.attach(b);
  b->add_option("--mode", bench.mode, "train | merged");
  b->add_option("--batch", bench.batch);
  b->add_option("--res", bench.res);
  b->add_option("--runs", bench.runs, "timed runs (>= 5)");
  b->add_option("--warmup", bench.warmup, "untimed runs (>= 2)");
  b->add_option("--seed", bench.seed);
  b->add_flag("--compare", bench.compare, "time both structures and report merged/train speedup");

  ParamsArgs params;
  auto* p = app.add_subcommand("params", "count parameters per module");
  params.model.attach(p);
  p->add_option("--mode", params.mode, "train | merged");
  p->add_flag("--table", params.table, "plain text instead of JSON");

  ExportArgs exp;
  auto* e = app.add_subcommand("export", "write a model to a weight container");
  exp.model.attach(e);
  e->add_option("--seed", exp.seed);
  e->add_option("--mode", exp.mode, "train | merged");
  e->add_option("--dtype", exp.dtype, "f64 | f32");
  e->add_flag("--perturb-norms", exp.perturb_norms, "non-identity norm statistics");
  e->add_option("--out", exp.out)->required();

  ImportArgs imp;
  auto* i = app.add_subcommand("import", "load and check a weight container");
  i->add_option("--weights", imp.weights)->required();
  i->add_option("--out", imp.out, "write the loaded model back out");
  i->add_option("--dtype", imp.dtype, "f64 | f32 for --out");

  ForwardArgs fwd;
  auto* f = app.add_subcommand("forward", "run a stored model on an input array");
  f->add_option("--weights", fwd.weights)->required();
  f->add_option("--input", fwd.input)->required();
  f->add_option("--out", fwd.out)->required();
  f->add_option("--format", fwd.format, "container | raw");

  EmbedArgs emb;
  auto* m = app.add_subcommand("embed", "turn a non-image input into an embedding map");
  m->add_option("--modality", emb.modality, "audio | video | point-cloud | time-series")->required();
  m->add_option("--input", emb.input)->required();
  m->add_option("--out", emb.out)->required();
  m->add_option("--grid", emb.grid, "video frame grid RxC");
  m->add_option("--nodes", emb.nodes, "time-series node count n");
  m->add_option("--latent", emb.latent, "time-series latent width D'");
  m->add_option("--hw", emb.hw, "time-series map size HxW");
  m->add_option("--batch", emb.batch, "samples in a CSV input");
  m->add_option("--projection", emb.projection, "container with weight [D', D/n] and optional bias");
  m->add_option("--seed", emb.seed);
  m->add_option("--res", emb.res, "point-cloud view resolution");
  m->add_option("--dtype", emb.dtype, "f64 | f32");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*v) return cmd_verify(verify, out);
    if (*b) return cmd_bench(bench, out, err);
    if (*p) return cmd_params(params, out);
    if (*e) return cmd_export(exp, out);
    if (*i) return cmd_import(imp, out);
    if (*f) return cmd_forward(fwd, out);
    if (*m) return cmd_embed(emb, out);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsageError;
  } catch (const nlohmann::json::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsageError;
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsageError;
  } catch (const std::bad_alloc&) {
    err << "advisory: out of memory; lower --batch or --res, or pick a smaller model\n";
    return kUsageError;
  }
  return kUsageError;
}

}  // namespace urlk::cli
