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

#ifndef OCARM_TOOLS_COMMANDS_HPP_
#define OCARM_TOOLS_COMMANDS_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ocarm::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,       // runtime failure, or any matrix row failed
  kExitUsage = 2,         // bad flags or missing required inputs
  kExitConfig = 3,        // a config file failed validation
  kExitIncompatible = 4,  // checkpoint does not fit the requested model
  kExitRefused = 5,       // leaked evaluation without --allow-leakage
  kExitIntegrity = 6,     // corrupted or unparsable artifact
};

// Run root for commands invoked without --out: $OCARM_RUN_ROOT, else ./runs.
std::filesystem::path run_root();

struct GenDataArgs {
  std::filesystem::path config;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
};

struct TrainArgs {
  int stage = 1;
  std::filesystem::path data_dir;
  std::filesystem::path model_config;
  std::filesystem::path train_config;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> teacher;
};

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path report;
  bool allow_leakage = false;
};

struct MatrixArgs {
  std::filesystem::path config;
  std::filesystem::path out_dir;
  std::vector<std::uint64_t> seeds;  // empty keeps the config's seeds
  int threads = 0;
};

struct AnalyzeArgs {
  std::filesystem::path run_dir;  // output directory of a matrix run
};

// Each command writes its artifacts plus manifest.txt, prints diagnostics to
// `err`, and returns an ExitCode.
int cmd_gen_data(const GenDataArgs& args, std::ostream& out, std::ostream& err);
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_matrix(const MatrixArgs& args, std::ostream& out, std::ostream& err);
int cmd_analyze_alignment(const AnalyzeArgs& args, std::ostream& out, std::ostream& err);

// Parses argv and dispatches; shared by the executable and tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ocarm::cli

#endif  // OCARM_TOOLS_COMMANDS_HPP_
