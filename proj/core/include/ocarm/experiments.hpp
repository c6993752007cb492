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

#ifndef OCARM_EXPERIMENTS_HPP_
#define OCARM_EXPERIMENTS_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ocarm/checkpoint.hpp"
#include "ocarm/config.hpp"
#include "ocarm/datagen.hpp"
#include "ocarm/metrics.hpp"

namespace ocarm {

inline constexpr const char* kRowBase = "Base";
inline constexpr const char* kRowUpperBound = "Stage1_UpperBound";
inline constexpr const char* kRowStage2Only = "Stage2_Only";
inline constexpr const char* kRowFull = "Full";
inline constexpr const char* kRowVariant1 = "Variant1";
inline constexpr const char* kRowVariant2 = "Variant2";
inline constexpr const char* kRowVariant3 = "Variant3";

struct Aggregate {
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation; 0 for a single seed
  int count = 0;

  bool operator==(const Aggregate&) const = default;
};

Aggregate aggregate(std::span<const double> values);

struct MatrixRow {
  std::string name;
  std::string config_delta;  // human-readable change relative to the base model config
  std::uint64_t model_config_hash = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<EvalReport> reports;  // parallel to seeds
  // Keys "<task>.auc", "<task>.gauc", "<task>.delta_auc", "<task>.alignment".
  std::map<std::string, Aggregate> aggregates;
  std::string error;  // non-empty when a sub-run failed; the row then has no aggregates

  bool failed() const { return !error.empty(); }
};

// Recomputes `row.aggregates` from its per-seed reports. delta_auc pairs each
// seed with the same seed of `base` (skipped when base is null).
void recompute_aggregates(MatrixRow& row, const MatrixRow* base);

struct ExperimentOptions {
  // Run-directory root; nothing is written when empty.
  std::filesystem::path out_dir;
  int threads = 0;
  // Progress lines ("row seed: status"); may be empty.
  std::function<void(const std::string&)> log;
};

// Runs every configuration of one seed lazily and caches what later rows reuse
// (datasets, the Base report, the stage-1 teacher).
class Experiment {
 public:
  Experiment(MatrixConfig config, ExperimentOptions options);
  ~Experiment();

  // Base, Stage1_UpperBound, Stage2_Only, Full.
  std::vector<MatrixRow> run_matrix();
  // Variant1 (MLP/MLP), Variant2 (HAE/MLP), Variant3 (HAE/SFE, the Full run).
  std::vector<MatrixRow> run_variants();
  // One named row over every seed; Base is trained first when the row needs
  // deltas. Results are cached, so rows shared between calls run once.
  MatrixRow run_row(const std::string& name);

  const MatrixConfig& config() const { return config_; }

 private:
  struct SeedState;
  SeedState& seed_state(std::uint64_t seed);
  EvalReport run_one(const std::string& name, SeedState& state);

  MatrixConfig config_;
  ExperimentOptions options_;
  std::map<std::uint64_t, std::unique_ptr<SeedState>> seeds_;
  std::map<std::string, MatrixRow> finished_;
};

std::vector<MatrixRow> run_matrix(const MatrixConfig& config, const ExperimentOptions& options = {});
std::vector<MatrixRow> run_variants(const MatrixConfig& config, const ExperimentOptions& options = {});

// Model and train-config deltas that define each row.
ModelConfig row_model_config(const std::string& row, const ModelConfig& base);

struct AlignmentPoint {
  std::string variant;
  std::uint64_t seed = 0;
  std::string task;
  double similarity = 0.0;
  double delta_auc = 0.0;
};

struct AlignmentAnalysis {
  std::vector<AlignmentPoint> points;
  std::map<std::string, double> spearman;  // per task
};

// Spearman correlation with average ranks for ties. Needs at least 3 points
// (InsufficientDataError); returns 0 when either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

// One point per (variant row, seed, task); `base` supplies the paired AUCs.
AlignmentAnalysis alignment_gain_analysis(std::span<const MatrixRow> variant_rows, const MatrixRow& base);

std::string format_alignment_points(const AlignmentAnalysis& analysis, const std::string& task);

struct Verdict {
  std::string rule;
  bool pass = false;
  std::string detail;
};

// Ordering rules over per-task mean AUCs: the training-stage ordering, the
// variant ladder, and the similarity/gain rank correlation.
std::vector<Verdict> ordering_verdicts(std::span<const MatrixRow> rows, const AlignmentAnalysis* analysis);

// Structured text: per-row, per-metric mean/stdev followed by the verdicts.
std::string format_aggregate_report(std::span<const MatrixRow> rows, const AlignmentAnalysis* analysis,
                                    std::span<const Verdict> verdicts);

const MatrixRow* find_row(std::span<const MatrixRow> rows, const std::string& name);

}  // namespace ocarm

#endif  // OCARM_EXPERIMENTS_HPP_
