// Copyright 2026 The OCARM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "ocarm/checkpoint.hpp"
#include "ocarm/config.hpp"
#include "test_support.hpp"

namespace ocarm {
namespace {

namespace fs = std::filesystem;
using testing::scratch_dir;
using testing::tiny_gen;
using testing::tiny_model;
using testing::tiny_train;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "ocarm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliWorkflow : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = scratch_dir(std::string("cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    GenConfig g = tiny_gen(11);
    g.n_users = 300;
    write_file_atomic(dir_ / "gen.json", to_json(g));
    write_file_atomic(dir_ / "model.json", to_json(tiny_model()));
    write_file_atomic(dir_ / "train.json", to_json(tiny_train(1, 1)));
  }

  fs::path p(const std::string& leaf) const { return dir_ / leaf; }
  std::string s(const std::string& leaf) const { return p(leaf).string(); }

  Outcome gen(const std::string& out) { return invoke({"gen-data", "--config", s("gen.json"), "--out", s(out)}); }
  Outcome train(int stage, const std::string& out, const std::vector<std::string>& extra = {}) {
    std::vector<std::string> a = {"train",          "--stage", std::to_string(stage), "--data",
                                  s("data"),        "--model-config", s("model.json"), "--train-config",
                                  s("train.json"), "--out",   s(out)};
    a.insert(a.end(), extra.begin(), extra.end());
    return invoke(a);
  }

  fs::path dir_;
};

TEST_F(CliWorkflow, EndToEnd) {
  Outcome r = gen("data");
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  for (const char* f : {"train.jsonl", "test.jsonl", "gen_config.json", "manifest.txt"}) {
    EXPECT_TRUE(fs::exists(p("data") / f)) << f;
  }
  const std::string manifest = read_file(p("data") / "manifest.txt");
  EXPECT_NE(manifest.find("command: gen-data"), std::string::npos);
  EXPECT_NE(manifest.find("exit-status: 0"), std::string::npos);

  r = train(1, "s1");
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const std::string teacher = (p("s1") / "checkpoint.ckpt").string();

  r = invoke({"eval", "--checkpoint", teacher, "--data", (p("data") / "test.jsonl").string(), "--report",
              s("upper.txt")});
  EXPECT_EQ(r.code, cli::kExitRefused);
  EXPECT_NE(r.err.find("--allow-leakage"), std::string::npos);
  EXPECT_FALSE(fs::exists(p("upper.txt")));

  r = invoke({"eval", "--checkpoint", teacher, "--data", (p("data") / "test.jsonl").string(), "--report",
              s("upper.txt"), "--allow-leakage"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(read_file(p("upper.txt")).find("leaked-evaluation: true"), std::string::npos);

  r = train(2, "s2");
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("--teacher"), std::string::npos);

  r = train(2, "s2", {"--teacher", teacher});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const Checkpoint student = load_checkpoint(p("s2") / "checkpoint.ckpt");
  EXPECT_EQ(student.stage, StageTag::kStage2);

  r = invoke({"eval", "--checkpoint", (p("s2") / "checkpoint.ckpt").string(), "--data",
              (p("data") / "test.jsonl").string(), "--report", s("full.txt")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const std::string report = read_file(p("full.txt"));
  EXPECT_EQ(r.out, report);
  EXPECT_NE(report.find("leaked-evaluation: false"), std::string::npos);
  EXPECT_NE(report.find("alignment"), std::string::npos);
}

TEST_F(CliWorkflow, RerunsAreByteIdentical) {
  ASSERT_EQ(gen("data").code, cli::kExitOk);
  ASSERT_EQ(gen("data_again").code, cli::kExitOk);
  for (const char* f : {"train.jsonl", "test.jsonl", "gen_config.json"}) {
    EXPECT_EQ(read_file(p("data") / f), read_file(p("data_again") / f)) << f;
  }
  ASSERT_EQ(train(1, "a").code, cli::kExitOk);
  ASSERT_EQ(train(1, "b").code, cli::kExitOk);
  EXPECT_EQ(read_file(p("a") / "checkpoint.ckpt"), read_file(p("b") / "checkpoint.ckpt"));
  EXPECT_EQ(read_file(p("a") / "loss.txt"), read_file(p("b") / "loss.txt"));
}

TEST_F(CliWorkflow, SeedFlagOverridesConfig) {
  ASSERT_EQ(gen("data").code, cli::kExitOk);
  ASSERT_EQ(invoke({"gen-data", "--config", s("gen.json"), "--out", s("other"), "--seed", "12"}).code, cli::kExitOk);
  EXPECT_NE(read_file(p("data") / "train.jsonl"), read_file(p("other") / "train.jsonl"));
  EXPECT_EQ(load_gen_config(p("other") / "gen_config.json").seed, 12u);
}

TEST_F(CliWorkflow, ExitCodes) {
  EXPECT_EQ(invoke({}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"gen-data"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"gen-data", "--config", s("gen.json"), "--bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, cli::kExitUsage);

  write_file_atomic(p("bad_gen.json"), R"({"alpha": 2})");
  Outcome r = invoke({"gen-data", "--config", s("bad_gen.json"), "--out", s("x")});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("alpha"), std::string::npos);

  ASSERT_EQ(gen("data").code, cli::kExitOk);
  ASSERT_EQ(train(1, "s1").code, cli::kExitOk);
  const std::string teacher = (p("s1") / "checkpoint.ckpt").string();

  // A teacher built for another embedding width does not fit.
  ModelConfig wide = tiny_model();
  wide.d_emb = 12;
  write_file_atomic(p("model.json"), to_json(wide));
  EXPECT_EQ(train(2, "s2", {"--teacher", teacher}).code, cli::kExitIncompatible);
  write_file_atomic(p("model.json"), to_json(tiny_model()));

  std::string bytes = read_file(teacher);
  bytes[bytes.size() / 2] ^= 0x01;
  write_file_atomic(p("broken.ckpt"), bytes);
  EXPECT_EQ(invoke({"eval", "--checkpoint", s("broken.ckpt"), "--data", (p("data") / "test.jsonl").string(),
                    "--allow-leakage"})
                .code,
            cli::kExitIntegrity);

  write_file_atomic(p("broken.jsonl"), "not a dataset\n");
  EXPECT_EQ(invoke({"eval", "--checkpoint", teacher, "--data", s("broken.jsonl"), "--allow-leakage"}).code,
            cli::kExitIntegrity);
  EXPECT_EQ(invoke({"eval", "--checkpoint", s("missing.ckpt"), "--data", s("broken.jsonl")}).code,
            cli::kExitFailure);
  EXPECT_EQ(train(3, "s3").code, cli::kExitUsage);
}

TEST_F(CliWorkflow, MatrixAndAlignmentAnalysis) {
  MatrixConfig m;
  m.gen = tiny_gen(2);
  m.gen.n_users = 300;
  m.model = tiny_model();
  m.train = tiny_train(1, 1);
  m.seeds = {1, 2, 3};
  write_file_atomic(p("matrix.json"), to_json(m));
  Outcome r = invoke({"matrix", "--config", s("matrix.json"), "--out", s("matrix"), "--seeds", "4,5"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("row.Full.seeds: 4,5"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("verdict.full_over_base.LT1:"), std::string::npos);
  EXPECT_EQ(read_file(p("matrix") / "aggregate.txt"), r.out);
  EXPECT_TRUE(fs::exists(p("matrix") / "alignment_LT3.tsv"));
  const std::string tsv = read_file(p("matrix") / "alignment_LT1.tsv");

  fs::remove(p("matrix") / "alignment_LT1.tsv");
  r = invoke({"analyze-alignment", "--run", s("matrix")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("alignment.LT1.spearman: "), std::string::npos);
  // Re-deriving from the per-run reports reproduces the matrix output.
  EXPECT_EQ(read_file(p("matrix") / "alignment_LT1.tsv"), tsv);

  EXPECT_EQ(invoke({"analyze-alignment", "--run", s("nowhere")}).code, cli::kExitFailure);
}

TEST(CliRunRoot, FollowsEnvironment) {
  ::setenv("OCARM_RUN_ROOT", "/tmp/ocarm_elsewhere", 1);
  EXPECT_EQ(cli::run_root(), fs::path("/tmp/ocarm_elsewhere"));
  ::unsetenv("OCARM_RUN_ROOT");
  EXPECT_EQ(cli::run_root(), fs::path("runs"));
}

}  // namespace
}  // namespace ocarm
