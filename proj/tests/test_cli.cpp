/* Copyright 2026 The implicit-align Authors. All Rights Reserved.

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
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "implicit_align/config.hpp"

namespace ialign {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("ialign_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(IALIGN_BINARY) + " " + args + " > " +
                            path("stdout.txt") + " 2> " + path("stderr.txt");
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  std::string stderr_text() const { return read_text_file(path("stderr.txt")); }

  void gen(const std::string& out, int dim = 3) const {
    ASSERT_EQ(run("gen-data --seed 3 --classes 5 --dim " + std::to_string(dim) +
                  " --shift tx=1,ty=0.5 --source-profile balanced --target-profile extreme"
                  " --max-count 30 --out " + path(out)),
              0)
        << stderr_text();
  }

  std::string train_args(const std::string& data, const std::string& out) const {
    return "train --source " + path(data + "/source.csv") + " --target " +
           path(data + "/target.csv") + " --target-labels " + path(data + "/target_labels.csv") +
           " --steps 120 --eval-period 40 -N 3 -K 2 --hidden 8 --feature-dim 4 --head-hidden 4"
           " --lr 0.01 --seed 2 --out " + path(out);
  }

  fs::path dir_;
};

TEST_F(CliTest, GenDataIsReproducible) {
  gen("a");
  gen("b");
  for (const char* f : {"source.csv", "target.csv", "target_labels.csv"})
    EXPECT_EQ(read_text_file(path(std::string("a/") + f)),
              read_text_file(path(std::string("b/") + f)))
        << f;
  auto m = read_json_file(path("a/manifest.json"));
  EXPECT_TRUE(is_manifest(m));
  EXPECT_EQ(m["command"], "gen-data");
  EXPECT_EQ(m["status"], "complete");
  const auto head = read_text_file(path("a/target.csv")).substr(0, 40);
  EXPECT_EQ(head.rfind("domain,label,f0,f1,f2\ntarget,-1,", 0), 0u);
}

TEST_F(CliTest, GenDataRejectsBadArguments) {
  EXPECT_NE(run("gen-data --classes 1 --out " + path("x")), 0);
  EXPECT_NE(stderr_text().find("error:"), std::string::npos);
  EXPECT_NE(run("gen-data --shift shear=1 --out " + path("x")), 0);
  EXPECT_NE(run("gen-data --source-profile zipf --out " + path("x")), 0);
}

TEST_F(CliTest, TrainEvalAndManifestRerun) {
  gen("data");
  ASSERT_EQ(run(train_args("data", "run1") + " --objective mdd --mask on"), 0) << stderr_text();
  const auto metrics = read_text_file(path("run1/metrics.jsonl"));
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 3);
  auto manifest = read_json_file(path("run1/manifest.json"));
  EXPECT_EQ(manifest["status"], "complete");
  EXPECT_EQ(manifest["config"]["objective.kind"], "mdd_masked");
  EXPECT_EQ(manifest["config"]["model.num_classes"], 5);
  EXPECT_EQ(manifest["config"]["model.input_dim"], 3);

  // Re-running from the manifest reproduces the metrics log byte for byte.
  ASSERT_EQ(run("train --config " + path("run1/manifest.json") + " --out " + path("run2")), 0)
      << stderr_text();
  EXPECT_EQ(read_text_file(path("run2/metrics.jsonl")), metrics);
  EXPECT_EQ(read_text_file(path("run2/checkpoint.json")), read_text_file(path("run1/checkpoint.json")));

  // eval reproduces the final record's target metrics.
  ASSERT_EQ(run("eval --checkpoint " + path("run1/checkpoint.json") + " --data " +
                path("data/target.csv") + " --labels " + path("data/target_labels.csv") +
                " --out " + path("eval.json")),
            0)
      << stderr_text();
  auto ev = read_json_file(path("eval.json"));
  std::string last;
  std::istringstream in(metrics);
  for (std::string line; std::getline(in, line);) last = line;
  auto rec = nlohmann::json::parse(last);
  EXPECT_EQ(ev["accuracy"], rec["target_accuracy"]);
  EXPECT_EQ(ev["per_class_accuracy"], rec["target_per_class_accuracy"]);
  EXPECT_EQ(ev["macro_f1"], rec["target_macro_f1"]);
}

TEST_F(CliTest, TrainReportsAllConfigErrors) {
  gen("data");
  EXPECT_NE(run(train_args("data", "bad") + " --set steps=0 --set batch.per_class=0 --set objective.gamma=0.5"), 0);
  const auto err = stderr_text();
  EXPECT_NE(err.find("steps must be positive"), std::string::npos) << err;
  EXPECT_NE(err.find("per_class"), std::string::npos) << err;
  EXPECT_NE(err.find("gamma"), std::string::npos) << err;
  EXPECT_NE(run(train_args("data", "bad") + " --set nonsense=1"), 0);
  EXPECT_NE(stderr_text().find("unknown config key 'nonsense'"), std::string::npos);
  EXPECT_NE(run(train_args("data", "bad") + " --sampler random --objective mdd_masked"), 0);
}

TEST_F(CliTest, ManifestRerunDetectsChangedInputs) {
  gen("data");
  ASSERT_EQ(run(train_args("data", "run1")), 0) << stderr_text();
  write_text_file(path("data/target_labels.csv"), "index,label\n0,0\n");
  EXPECT_NE(run("train --config " + path("run1/manifest.json") + " --out " + path("run2")), 0);
  EXPECT_NE(stderr_text().find("changed"), std::string::npos);
}

TEST_F(CliTest, EvalRejectsMismatchedInput) {
  gen("data");
  gen("wide", 4);
  ASSERT_EQ(run(train_args("data", "run1")), 0) << stderr_text();
  EXPECT_NE(run("eval --checkpoint " + path("run1/checkpoint.json") + " --data " +
                path("wide/source.csv")),
            0);
  EXPECT_NE(stderr_text().find("input_dim"), std::string::npos);
  EXPECT_NE(run("eval --checkpoint " + path("run1/checkpoint.json") + " --data " +
                path("data/target.csv")),
            0);
}

TEST_F(CliTest, AblateWritesOneRowPerCell) {
  gen("data");
  const std::string args = train_args("data", "grid");
  ASSERT_EQ(run("ablate" + args.substr(5) + " --grid mask_sampling --seeds 2 --jobs 2"), 0)
      << stderr_text();
  const auto csv = read_text_file(path("grid/ablation.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(csv.rfind("cell,masking,sampling,seeds,failed,", 0), 0u);
  const auto runs = read_text_file(path("grid/runs.jsonl"));
  EXPECT_EQ(std::count(runs.begin(), runs.end(), '\n'), 8);
  EXPECT_EQ(read_json_file(path("grid/manifest.json"))["status"], "complete");
}

TEST_F(CliTest, DivergenceOracleSamplerHasNoMisalignedTerm) {
  gen("data");
  const std::string common = "divergence --source " + path("data/source.csv") + " --target " +
                             path("data/target.csv") + " --target-labels " +
                             path("data/target_labels.csv") + " --pairs 20 -N 3 -K 2";
  ASSERT_EQ(run(common + " --sampler aligned_oracle --out " + path("oracle.json")), 0)
      << stderr_text();
  auto j = read_json_file(path("oracle.json"));
  EXPECT_EQ(j["max_abs_xi_misaligned"], 0);
  EXPECT_EQ(j["mean_d_hat"], 0.0);
  EXPECT_EQ(j["reports"].size(), 20u);
  ASSERT_EQ(run(common + " --sampler random --out " + path("random.json")), 0) << stderr_text();
  EXPECT_GT(read_json_file(path("random.json"))["mean_d_hat"].get<double>(), 0.0);
  EXPECT_NE(run(common + " --sampler aligned"), 0);
}

}  // namespace
}  // namespace ialign
