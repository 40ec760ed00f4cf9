// Copyright 2026 The MITKD Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <functional>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "scratch_dir.hpp"
#include "mitkd/pipeline/config.hpp"
#include "mitkd_cli/cli.hpp"

namespace mitkd::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::ScratchDir;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Writes the smoke config with output_dir pointed into the scratch dir.
fs::path write_config(const ScratchDir& dir, const std::function<void(json&)>& edit = {}) {
  std::ifstream in(testing::smoke_config_path());
  json doc = json::parse(in);
  doc["output_dir"] = (dir.path() / "runs").string();
  if (edit) edit(doc);
  const fs::path path = dir.path() / "config.json";
  std::ofstream(path) << doc.dump(2);
  return path;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override { unsetenv("MITKD_OUT"); }
  void TearDown() override { unsetenv("MITKD_OUT"); }
};

TEST_F(Cli, MissingConfigFlagIsAnInvalidInvocation) {
  EXPECT_EQ(run({"report"}).code, kExitInvalidConfig);
  EXPECT_EQ(run({}).code, kExitInvalidConfig);
  EXPECT_EQ(run({"bogus", "--config", "x"}).code, kExitInvalidConfig);
}

TEST_F(Cli, HelpExitsCleanly) { EXPECT_EQ(run({"--help"}).code, kExitOk); }

TEST_F(Cli, VariantIsRequiredAndChecked) {
  ScratchDir dir("cli-variant");
  const auto cfg = write_config(dir).string();
  EXPECT_EQ(run({"distill", "--config", cfg}).code, kExitInvalidConfig);
  EXPECT_EQ(run({"distill", "--config", cfg, "--variant", "teacherless"}).code, kExitInvalidConfig);
}

TEST_F(Cli, ViolatedConstraintIsReported) {
  ScratchDir dir("cli-invalid");
  const auto cfg = write_config(dir, [](json& d) { d["distill"]["relation_heads"] = 3; }).string();
  const Outcome o = run({"pretrain", "--config", cfg, "--quiet"});
  EXPECT_EQ(o.code, kExitInvalidConfig);
  EXPECT_NE(o.err.find("relation_heads"), std::string::npos) << o.err;
}

TEST_F(Cli, MalformedJsonIsAnInvalidConfig) {
  ScratchDir dir("cli-malformed");
  std::ofstream(dir.path() / "bad.json") << "{\"seed\": ";
  EXPECT_EQ(run({"pretrain", "--config", (dir.path() / "bad.json").string()}).code, kExitInvalidConfig);
}

TEST_F(Cli, MissingConfigFileNamesThePath) {
  const Outcome o = run({"pretrain", "--config", "/nonexistent/cfg.json"});
  EXPECT_EQ(o.code, kExitMissingPrerequisite);
  EXPECT_NE(o.err.find("/nonexistent/cfg.json"), std::string::npos);
}

TEST_F(Cli, StagesOutOfOrderNameTheMissingPath) {
  ScratchDir dir("cli-order");
  const auto cfg = write_config(dir).string();
  Outcome o = run({"report", "--config", cfg, "--quiet"});
  EXPECT_EQ(o.code, kExitMissingPrerequisite);
  EXPECT_NE(o.err.find("run_results.jsonl"), std::string::npos) << o.err;
  o = run({"distill", "--config", cfg, "--variant", "mtl", "--quiet"});
  EXPECT_EQ(o.code, kExitMissingPrerequisite);
  EXPECT_NE(o.err.find("teacher-mtl"), std::string::npos) << o.err;
}

TEST_F(Cli, EnvironmentOverridesOutputDirectory) {
  ScratchDir dir("cli-env");
  const auto cfg = write_config(dir).string();
  setenv("MITKD_OUT", (dir.path() / "elsewhere").c_str(), 1);
  const Outcome o = run({"pretrain", "--config", cfg, "--quiet"});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  EXPECT_TRUE(fs::exists(dir.path() / "elsewhere"));
  EXPECT_FALSE(fs::exists(dir.path() / "runs"));
}

TEST_F(Cli, StagesRunInSequence) {
  ScratchDir dir("cli-seq");
  const auto cfg = write_config(dir).string();
  for (std::vector<std::string> args : {std::vector<std::string>{"pretrain"},
                                        {"prepare-teacher", "--variant", "mtl"},
                                        {"distill", "--variant", "mtl"}}) {
    args.insert(args.end(), {"--config", cfg, "--quiet"});
    const Outcome o = run(args);
    ASSERT_EQ(o.code, kExitOk) << args.front() << ": " << o.err;
  }
  // Evaluation needs every configured variant, not only the one distilled so far.
  EXPECT_EQ(run({"evaluate", "--config", cfg, "--quiet"}).code, kExitMissingPrerequisite);
}

}  // namespace
}  // namespace mitkd::cli
