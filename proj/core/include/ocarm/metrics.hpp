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

#ifndef OCARM_METRICS_HPP_
#define OCARM_METRICS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ocarm/checkpoint.hpp"
#include "ocarm/datagen.hpp"

namespace ocarm {

struct ScoredSample {
  double score = 0.0;
  int label = 0;  // 0 or 1
  std::int64_t group_id = 0;
};

// Rank-based ROC-AUC; tied scores share their mean rank (count 1/2).
// Throws UndefinedMetricError unless both classes are present.
double auc(std::span<const ScoredSample> samples);

// Sample-count-weighted mean of per-group AUCs. Groups with a single class
// are skipped; throws UndefinedMetricError when no group remains.
double gauc(std::span<const ScoredSample> samples);

// Relevance used by both metrics.
inline int binary_label(int label_count) { return label_count > 0 ? 1 : 0; }

struct TaskMetrics {
  std::string task;
  double auc = 0.0;
  double gauc = 0.0;
  std::optional<double> alignment_similarity;
  std::int64_t samples = 0;
  std::int64_t positives = 0;
  std::int64_t gauc_groups = 0;  // groups that contributed to gauc

  bool operator==(const TaskMetrics&) const = default;
};

struct EvalReport {
  std::string stage;
  bool leaked_evaluation = false;
  std::uint64_t model_config_hash = 0;
  std::uint64_t gen_config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<TaskMetrics> tasks;

  const TaskMetrics& task(std::string_view name) const;  // throws ContractError
  bool operator==(const EvalReport&) const = default;
};

// Line-oriented "key: value" text. Reals are written with 17 significant
// digits so parse(format(r)) == r.
std::string format_eval_report(const EvalReport& report);
EvalReport parse_eval_report(std::string_view text);

struct EvalOptions {
  // Stage-1 checkpoints score through the teacher, which reads onboarding
  // content. Refused unless this is set.
  bool allow_leakage = false;
  bool alignment = true;  // fill alignment_similarity when a student exists
  int threads = 0;
};

// Per-record, per-task scores on the path evaluate() uses: the leakage-free
// serving path, or the teacher path for stage-1 checkpoints when allowed.
std::vector<std::vector<double>> score_records(const Checkpoint& checkpoint,
                                               std::span<const UserJourneyRecord> records,
                                               const EvalOptions& options = {});

EvalReport evaluate(const Checkpoint& checkpoint, const Dataset& data, const EvalOptions& options = {});

// Per-task mean of cos(e_u, e_c) over records; needs onboarding content.
std::map<std::string, double> mean_alignment_similarity(const Checkpoint& checkpoint,
                                                        std::span<const UserJourneyRecord> records,
                                                        int threads = 0);

}  // namespace ocarm

#endif  // OCARM_METRICS_HPP_
