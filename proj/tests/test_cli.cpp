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
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "urlk/array_io.hpp"
#include "urlk/container.hpp"

namespace urlk {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code;
  std::string out, err;
  json doc() const { return json::parse(out); }
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("urlk_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST(Cli, AdhocVerify) {
  const auto ok = run({"verify", "--adhoc", "in=8", "out=8", "groups=8", "K=9", "k=5,3,3", "r=1,2,3"});
  ASSERT_EQ(ok.code, cli::kOk) << ok.err;
  const auto j = ok.doc();
  EXPECT_EQ(j["kind"], "adhoc");
  EXPECT_TRUE(j["pass"].get<bool>());
  EXPECT_LE(j["max_rel_err"].get<double>(), 1e-9);

  const auto strict = run({"verify", "--adhoc", "in=4", "out=4", "groups=4", "K=7", "k=3", "r=2",
                           "--tolerance", "0"});
  EXPECT_EQ(strict.code, cli::kVerificationFailed);
  EXPECT_FALSE(strict.doc()["pass"].get<bool>());

  EXPECT_EQ(run({"verify", "--adhoc", "in=4", "out=4", "groups=4", "K=5", "k=5", "r=2"}).code,
            cli::kUsageError);
  EXPECT_EQ(run({"verify", "--model", "A", "--f32"}).code, cli::kUsageError);
}

TEST(Cli, ModelVerifyTiny) {
  const auto r = run({"verify", "--depths", "1,1,1+1,1", "--width", "8", "--classes", "10",
                      "--trials", "2", "--res", "32"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto j = r.doc();
  EXPECT_EQ(j["model_rel_errs"].size(), 2u);
  EXPECT_LE(j["max_rel_err"].get<double>(), 1e-9);
  EXPECT_EQ(j["blocks"].size(), 5u);
}

TEST(Cli, ParamsWithinPublishedTolerance) {
  const auto r = run({"params", "--model", "all"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto j = r.doc();
  ASSERT_EQ(j["instances"].size(), 9u);
  for (const auto& inst : j["instances"]) {
    EXPECT_TRUE(inst["within_tolerance"].get<bool>()) << inst["model"];
    if (inst["model"] == "XL") EXPECT_NEAR(inst["published_millions"].get<double>(), 386.4, 1e-9);
  }
  const auto n = run({"params", "--model", "N"}).doc()["instances"][0];
  EXPECT_LE(std::abs(n["deviation"].get<double>()), 0.03);
  EXPECT_EQ(run({"params", "--model", "N", "--table"}).code, cli::kOk);
}

TEST(Cli, BenchSchemaAndDigest) {
  const std::vector<std::string> args{"bench", "--depths", "1,1,1+0,1", "--width", "8", "--classes", "10",
                                      "--batch", "2", "--res", "32", "--runs", "5", "--seed", "4"};
  const auto a = run(args);
  ASSERT_EQ(a.code, cli::kOk) << a.err;
  const auto j = a.doc();
  for (const char* key : {"model", "mode", "batch", "resolution", "warmup_runs", "timed_runs", "run_ms",
                          "median_ms", "throughput", "output_digest"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["run_ms"].size(), 5u);
  EXPECT_EQ(j["mode"], "merged");
  EXPECT_GT(j["throughput"].get<double>(), 0.0);
  EXPECT_EQ(run(args).doc()["output_digest"], j["output_digest"]);

  auto cmp = args;
  cmp.push_back("--compare");
  const auto c = run(cmp);
  ASSERT_EQ(c.code, cli::kOk) << c.err;
  EXPECT_TRUE(c.doc()["compare"].get<bool>());
  EXPECT_EQ(c.doc()["reports"].size(), 2u);
  EXPECT_LE(c.doc()["max_rel_err"].get<double>(), 1e-9);

  EXPECT_EQ(run({"bench", "--model", "A", "--runs", "3"}).code, cli::kUsageError);
  EXPECT_EQ(run({"bench", "--model", "A", "--warmup", "1"}).code, cli::kUsageError);
}

TEST_F(CliTest, ExportImportForward) {
  const std::vector<std::string> model{"--depths", "1,1,1+0,1", "--width", "8", "--classes", "10"};
  auto exp = std::vector<std::string>{"export", "--seed", "2", "--perturb-norms", "--out", path("m.urlk")};
  exp.insert(exp.end(), model.begin(), model.end());
  ASSERT_EQ(run(exp).code, cli::kOk);

  const auto imp = run({"import", "--weights", path("m.urlk"), "--out", path("copy.urlk")});
  ASSERT_EQ(imp.code, cli::kOk) << imp.err;
  std::ifstream a(path("m.urlk"), std::ios::binary), b(path("copy.urlk"), std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));

  ArrayData x{{1, 3, 32, 32}, std::vector<double>(3 * 32 * 32)};
  for (std::size_t i = 0; i < x.values.size(); ++i) x.values[i] = static_cast<double>(i % 17) / 17.0;
  write_raw_f32(path("x.f32"), x);
  const auto f1 = run({"forward", "--weights", path("m.urlk"), "--input", path("x.f32"), "--out", path("y1.urlk")});
  ASSERT_EQ(f1.code, cli::kOk) << f1.err;
  const auto f2 = run({"forward", "--weights", path("copy.urlk"), "--input", path("x.f32"), "--out", path("y2.urlk")});
  EXPECT_EQ(f1.doc()["output_digest"], f2.doc()["output_digest"]);
  const auto logits = read_container(path("y1.urlk"));
  ASSERT_EQ(logits.size(), 1u);
  EXPECT_EQ(logits[0].name, "logits");
  EXPECT_EQ(logits[0].shape, (TensorShape{1, 10}));

  auto merged = exp;
  merged[5] = path("merged.urlk");
  merged.insert(merged.end(), {"--mode", "merged"});
  ASSERT_EQ(run(merged).code, cli::kOk);
  const auto f3 = run({"forward", "--weights", path("merged.urlk"), "--input", path("x.f32"), "--out",
                       path("y3.f32"), "--format", "raw"});
  ASSERT_EQ(f3.code, cli::kOk) << f3.err;
  const auto raw = read_raw_f32(path("y3.f32"));
  ASSERT_EQ(raw.values.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i)
    EXPECT_NEAR(raw.values[i], logits[0].values[i], 1e-5 * (1.0 + std::abs(logits[0].values[i])));

  std::ifstream in(path("m.urlk"), std::ios::binary);
  std::string bytes(std::istreambuf_iterator<char>(in), {});
  std::ofstream(path("cut.urlk"), std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  const auto cut = run({"import", "--weights", path("cut.urlk")});
  EXPECT_EQ(cut.code, cli::kUsageError);
  EXPECT_NE(cut.err.find("error"), std::string::npos);
}

TEST_F(CliTest, EmbedModalities) {
  write_raw_f32(path("a.f32"), ArrayData{{1, 128, 64}, std::vector<double>(128 * 64, 0.25)});
  ASSERT_EQ(run({"embed", "--modality", "audio", "--input", path("a.f32"), "--out", path("a.urlk")}).code,
            cli::kOk);
  EXPECT_EQ(read_container(path("a.urlk"))[0].shape, (TensorShape{1, 1, 128, 64}));

  write_raw_f32(path("v.f32"), ArrayData{{1, 16, 3, 8, 8}, std::vector<double>(16 * 3 * 64, 1.0)});
  const auto v = run({"embed", "--modality", "video", "--input", path("v.f32"), "--out", path("v.urlk"),
                      "--grid", "4x4"});
  ASSERT_EQ(v.code, cli::kOk) << v.err;
  EXPECT_EQ(read_container(path("v.urlk"))[0].shape, (TensorShape{1, 3, 32, 32}));

  std::ofstream(path("s.csv")) << "t,a,b,c,d\n1,2,3,4,5\n6,7,8,9,10\n";
  const auto ts = run({"embed", "--modality", "time-series", "--input", path("s.csv"), "--out",
                       path("s.urlk"), "--hw", "5x2"});
  ASSERT_EQ(ts.code, cli::kOk) << ts.err;
  const auto map = read_container(path("s.urlk"))[0];
  EXPECT_EQ(map.shape, (TensorShape{1, 1, 5, 2}));
  EXPECT_EQ(map.values, (std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
  EXPECT_EQ(run({"embed", "--modality", "time-series", "--input", path("s.csv"), "--out", path("bad.urlk"),
                 "--hw", "4x2"}).code,
            cli::kUsageError);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({"frobnicate"}).code, cli::kUsageError);
  EXPECT_EQ(run({}).code, cli::kUsageError);
  EXPECT_EQ(run({"params", "--model", "Q"}).code, cli::kUsageError);
  EXPECT_EQ(run({"--help"}).code, cli::kOk);
}

}  // namespace
}  // namespace urlk
