// Copyright 2026 The cardioseq Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <sys/wait.h>

#include "cardioseq/metrics.hpp"
#include "json.hpp"
#include "test_util.hpp"

namespace cardioseq {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code = -1;
  std::string output;
};

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Result cli(const std::string& args, const fs::path& scratch) {
  const fs::path log = scratch / "cli_output.txt";
  const std::string cmd =
      std::string(CARDIOSEQ_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, file_bytes(log)};
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

// Relative path -> bytes for every regular file below `root`.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = file_bytes(e.path());
  }
  return out;
}

const char* kSmallPhantom = R"({"dims": [24, 24, 24], "center": [11.5, 11.5, 11.5],
  "semi_axes": [4.5, 4.5, 5.0], "thickness": 2.0, "papillary_radius": 1.2,
  "taper_width": 2.0, "time_points": 6})";

TEST(Cli, UnknownSubcommandPrintsUsage) {
  testing::TempDir tmp;
  const Result r = cli("frobnicate", tmp.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("phantom-gen"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("ablate-intervals"), std::string::npos);
  EXPECT_EQ(cli("", tmp.path()).code, 1);
  EXPECT_EQ(cli("phantom-gen --precision f16", tmp.path()).code, 1);
}

TEST(Cli, PhantomGenIsDeterministic) {
  testing::TempDir tmp;
  write_file(tmp.path() / "phantom.json", kSmallPhantom);
  const std::string base = "phantom-gen --seed 7 --studies 2 --config " +
                           (tmp.path() / "phantom.json").string() + " --out-dir ";
  ASSERT_EQ(cli(base + (tmp.path() / "a").string(), tmp.path()).code, 0);
  ASSERT_EQ(cli(base + (tmp.path() / "b").string(), tmp.path()).code, 0);
  const auto a = tree(tmp.path() / "a"), b = tree(tmp.path() / "b");
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.count("run_manifest.json"));
  EXPECT_TRUE(a.count("phantom_001/t5.mask.raw"));
  const json manifest = json::parse(a.at("run_manifest.json"));
  EXPECT_EQ(manifest["seed"], 7);
  EXPECT_EQ(manifest["config"]["phantom"]["seed"], 7);

  ASSERT_EQ(cli("phantom-gen --seed 8 --studies 2 --config " +
                    (tmp.path() / "phantom.json").string() + " --out-dir " +
                    (tmp.path() / "c").string(),
                tmp.path())
                .code,
            0);
  EXPECT_NE(tree(tmp.path() / "c").at("phantom_000/t0.vol.raw"), a.at("phantom_000/t0.vol.raw"));
}

TEST(Cli, EvalOnIdenticalMasksReportsPerfectDice) {
  testing::TempDir tmp;
  write_file(tmp.path() / "phantom.json", kSmallPhantom);
  ASSERT_EQ(cli("phantom-gen --studies 1 --config " + (tmp.path() / "phantom.json").string() +
                    " --out-dir " + (tmp.path() / "gen").string(),
                tmp.path())
                .code,
            0);
  const fs::path study = tmp.path() / "gen" / "phantom_000";
  const Result r = cli("eval --pred " + study.string() + " --truth " + study.string() +
                           " --out-dir " + (tmp.path() / "eval").string(),
                       tmp.path());
  ASSERT_EQ(r.code, 0) << r.output;
  const json s = json::parse(file_bytes(tmp.path() / "eval" / "summary.json"));
  EXPECT_EQ(s["overall"]["dice"]["mean"], 1.0);
  EXPECT_EQ(s["overall"]["dice"]["count"], 6);
  EXPECT_EQ(s["overall"]["hausdorff_mm"]["mean"], 0.0);
  EXPECT_TRUE(fs::exists(tmp.path() / "eval" / "run_manifest.json"));
  const std::string csv = file_bytes(tmp.path() / "eval" / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "study_id,time_index,class_id,dice,jaccard,hausdorff_mm,epe_voxels,error");
}

TEST(Cli, ErrorsMapToExitCodes) {
  testing::TempDir tmp;
  write_file(tmp.path() / "bad.json", R"({"epochs_motion": 1, "mystery": 3})");
  const Result bad = cli("train-motion --config " + (tmp.path() / "bad.json").string() +
                             " --out-dir " + (tmp.path() / "o").string(),
                         tmp.path());
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.output.find("mystery"), std::string::npos) << bad.output;
  const Result missing = cli("infer --motion /nonexistent/a --seg /nonexistent/b --study "
                             "/nonexistent/c --out-dir " + (tmp.path() / "o").string(),
                             tmp.path());
  EXPECT_EQ(missing.code, 2) << missing.output;
}

TEST(Cli, EndToEndOnTinyCohort) {
  testing::TempDir tmp;
  const fs::path root = tmp.path();
  write_file(root / "phantom.json", kSmallPhantom);
  ASSERT_EQ(cli("phantom-gen --studies 2 --config " + (root / "phantom.json").string() +
                    " --out-dir " + (root / "data").string(),
                root)
                .code,
            0);
  write_file(root / "train.json", R"({
    "train_studies": ["data/phantom_000"], "epochs_motion": 1, "epochs_seg": 1,
    "patch": [16, 16, 16], "lr_motion": 0.001, "lr_seg": 0.001,
    "ssnet": {"base_channels": 4, "depth": 2}, "sssl": {"base_channels": 4, "depth": 2}})");
  const std::string cfg = " --config " + (root / "train.json").string();
  Result r = cli("train-motion" + cfg + " --out-dir " + (root / "motion").string(), root);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(root / "motion" / "motion_loss.csv"));
  r = cli("train-seg" + cfg + " --motion " + (root / "motion" / "ssnet").string() +
              " --out-dir " + (root / "seg").string(),
          root);
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string models = " --motion " + (root / "motion" / "ssnet").string() + " --seg " +
                             (root / "seg" / "sssl").string();
  const std::string held_out = (root / "data" / "phantom_001").string();
  r = cli("infer" + models + " --study " + held_out + " --out-dir " + (root / "pred").string(),
          root);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(root / "pred" / "t5.mask.json"));
  r = cli("infer" + models + " --study " + held_out + " --phase 6 --out-dir " +
              (root / "pred2").string(),
          root);
  EXPECT_EQ(r.code, 1) << r.output;
  r = cli("eval --pred " + (root / "pred").string() + " --truth " + held_out + " --out-dir " +
              (root / "eval").string(),
          root);
  ASSERT_EQ(r.code, 0) << r.output;
  r = cli("ablate-intervals" + models + " --study " + held_out + " --out-dir " +
              (root / "ablation").string(),
          root);
  ASSERT_EQ(r.code, 0) << r.output;
  const json ab = json::parse(file_bytes(root / "ablation" / "ablation.json"));
  for (const char* s : {"D0", "D1", "D3", "D5"}) EXPECT_TRUE(ab.contains(s)) << s;
  r = cli("report --run " + (root / "eval").string() + " --run " + (root / "ablation").string() +
              " --out-dir " + (root / "report").string(),
          root);
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string md = file_bytes(root / "report" / "report.md");
  EXPECT_NE(md.find("| D5 |"), std::string::npos) << md;
  for (const char* d : {"motion", "seg", "pred", "eval", "ablation", "report"}) {
    EXPECT_TRUE(fs::exists(root / d / "run_manifest.json")) << d;
  }
}

}  // namespace
}  // namespace cardioseq
