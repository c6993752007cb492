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

#include "ocarm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "ocarm/config.hpp"
#include "ocarm/errors.hpp"
#include "ocarm/model.hpp"
#include "ocarm/trainer.hpp"
#include "parallel.hpp"

namespace ocarm {
namespace {

std::string format_real(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ParseError(0, "key '" + key + "': not a number: " + v);
  }
}

template <typename T>
std::vector<std::vector<double>> score_all(const Model<T>& model, std::span<const UserJourneyRecord> records,
                                           bool leaked, int threads) {
  std::vector<std::vector<double>> scores(records.size());
  detail::parallel_for(static_cast<int>(records.size()), threads, [&](int i) {
    scores[i] = leaked ? model.score_with_content(records[i]) : model.infer(observable(records[i]));
  });
  return scores;
}

template <typename T>
std::map<std::string, double> similarity_impl(const Model<T>& model, std::span<const UserJourneyRecord> records,
                                              int threads) {
  std::vector<std::vector<double>> sims(records.size());
  detail::parallel_for(static_cast<int>(records.size()), threads,
                       [&](int i) { sims[i] = model.alignment_similarity(records[i]); });
  std::map<std::string, double> out;
  for (int t = 0; t < model.num_tasks(); ++t) {
    double sum = 0.0;
    for (const auto& s : sims) sum += s[t];
    out[model.config().tasks[t].name] = std::clamp(sum / static_cast<double>(sims.size()), -1.0, 1.0);
  }
  return out;
}

}  // namespace

double auc(std::span<const ScoredSample> samples) {
  const std::size_t n = samples.size();
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw InputError("auc: non-finite score");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });

  // Sum of 1-based mid-ranks of the positives.
  double rank_sum = 0.0;
  std::int64_t positives = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    std::int64_t tied_pos = 0;
    while (j < n && samples[order[j]].score == samples[order[i]].score) {
      tied_pos += samples[order[j]].label != 0;
      ++j;
    }
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += mid_rank * static_cast<double>(tied_pos);
    positives += tied_pos;
    i = j;
  }
  const std::int64_t negatives = static_cast<std::int64_t>(n) - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("auc needs both classes (positives " + std::to_string(positives) + ", negatives " +
                               std::to_string(negatives) + ")");
  }
  const double p = static_cast<double>(positives);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

double gauc(std::span<const ScoredSample> samples) {
  std::map<std::int64_t, std::vector<ScoredSample>> groups;
  for (const auto& s : samples) groups[s.group_id].push_back(s);
  double weighted = 0.0;
  double weight = 0.0;
  for (const auto& [id, members] : groups) {
    const auto pos = std::count_if(members.begin(), members.end(), [](const ScoredSample& s) { return s.label != 0; });
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(members.size())) continue;
    const double w = static_cast<double>(members.size());
    weighted += w * auc(members);
    weight += w;
  }
  if (weight == 0.0) throw UndefinedMetricError("gauc: no group contains both classes");
  return weighted / weight;
}

const TaskMetrics& EvalReport::task(std::string_view name) const {
  for (const auto& t : tasks) {
    if (t.task == name) return t;
  }
  throw ContractError("report has no task " + std::string(name));
}

std::string format_eval_report(const EvalReport& r) {
  std::ostringstream out;
  out << "stage: " << r.stage << '\n';
  out << "leaked-evaluation: " << (r.leaked_evaluation ? "true" : "false") << '\n';
  out << "model-config-hash: " << hex64(r.model_config_hash) << '\n';
  out << "gen-config-hash: " << hex64(r.gen_config_hash) << '\n';
  out << "seed: " << r.seed << '\n';
  out << "tasks: " << r.tasks.size() << '\n';
  for (const auto& t : r.tasks) {
    const std::string p = "task." + t.task + ".";
    out << p << "auc: " << format_real(t.auc) << '\n';
    out << p << "gauc: " << format_real(t.gauc) << '\n';
    out << p << "alignment-similarity: "
        << (t.alignment_similarity ? format_real(*t.alignment_similarity) : std::string("none")) << '\n';
    out << p << "samples: " << t.samples << '\n';
    out << p << "positives: " << t.positives << '\n';
    out << p << "gauc-groups: " << t.gauc_groups << '\n';
  }
  return out.str();
}

EvalReport parse_eval_report(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::vector<std::string> task_order;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto colon = line.find(": ");
    if (colon == std::string::npos) throw ParseError(line_no, "expected 'key: value'");
    const std::string key = line.substr(0, colon);
    kv[key] = line.substr(colon + 2);
    if (key.starts_with("task.") && key.ends_with(".auc")) task_order.push_back(key.substr(5, key.size() - 9));
  }
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw SchemaError(0, key);
    return it->second;
  };
  EvalReport r;
  r.stage = get("stage");
  r.leaked_evaluation = get("leaked-evaluation") == "true";
  r.model_config_hash = std::stoull(get("model-config-hash"), nullptr, 16);
  r.gen_config_hash = std::stoull(get("gen-config-hash"), nullptr, 16);
  r.seed = std::stoull(get("seed"));
  for (const auto& name : task_order) {
    const std::string p = "task." + name + ".";
    TaskMetrics t;
    t.task = name;
    t.auc = parse_real(p + "auc", get(p + "auc"));
    t.gauc = parse_real(p + "gauc", get(p + "gauc"));
    const auto& sim = get(p + "alignment-similarity");
    if (sim != "none") t.alignment_similarity = parse_real(p + "alignment-similarity", sim);
    t.samples = std::stoll(get(p + "samples"));
    t.positives = std::stoll(get(p + "positives"));
    t.gauc_groups = std::stoll(get(p + "gauc-groups"));
    r.tasks.push_back(std::move(t));
  }
  return r;
}

std::vector<std::vector<double>> score_records(const Checkpoint& checkpoint,
                                               std::span<const UserJourneyRecord> records,
                                               const EvalOptions& options) {
  const bool leaked = checkpoint.stage == StageTag::kStage1;
  if (leaked && !options.allow_leakage) {
    throw ContractError(
        "stage-1 checkpoints score through the content encoder, which reads post-conversion onboarding "
        "content that is unavailable at bid time; pass allow_leakage to produce an upper-bound report");
  }
  std::vector<std::vector<double>> scores;
  std::visit(
      [&](const auto& store) {
        using T = typename std::decay_t<decltype(store)>::Mat::Scalar;
        const Model<T> model = restore_model<T>(checkpoint);
        scores = score_all(model, records, leaked, options.threads);
      },
      checkpoint.params);
  return scores;
}

EvalReport evaluate(const Checkpoint& checkpoint, const Dataset& data, const EvalOptions& options) {
  const bool leaked = checkpoint.stage == StageTag::kStage1;
  if (leaked && !options.allow_leakage) {
    throw ContractError(
        "stage-1 checkpoints score through the content encoder, which reads post-conversion onboarding "
        "content that is unavailable at bid time; pass allow_leakage to produce an upper-bound report");
  }
  if (data.records.empty()) throw InputError("evaluation set is empty");

  std::vector<std::vector<double>> scores;
  std::map<std::string, double> similarity;
  const bool with_alignment = options.alignment && checkpoint.stage == StageTag::kStage2;
  std::visit(
      [&](const auto& store) {
        using T = typename std::decay_t<decltype(store)>::Mat::Scalar;
        const Model<T> model = restore_model<T>(checkpoint);
        scores = score_all(model, data.records, leaked, options.threads);
        if (with_alignment) similarity = similarity_impl(model, data.records, options.threads);
      },
      checkpoint.params);

  EvalReport report;
  report.stage = stage_name(checkpoint.stage);
  report.leaked_evaluation = leaked;
  report.model_config_hash = config_hash(checkpoint.model_config);
  report.gen_config_hash = data.gen_config_hash;
  report.seed = checkpoint.seed;
  const auto& tasks = checkpoint.model_config.tasks;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    std::vector<ScoredSample> samples;
    samples.reserve(data.records.size());
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      const auto& counts = data.records[i].label_counts;
      const auto it = counts.find(tasks[t].name);
      if (it == counts.end()) throw InputError("record lacks label for task " + tasks[t].name);
      samples.push_back({scores[i][t], binary_label(it->second), data.records[i].user_id});
    }
    TaskMetrics m;
    m.task = tasks[t].name;
    m.auc = auc(samples);
    m.gauc = gauc(samples);
    m.samples = static_cast<std::int64_t>(samples.size());
    for (const auto& s : samples) m.positives += s.label;
    std::map<std::int64_t, std::pair<int, int>> per_group;
    for (const auto& s : samples) {
      auto& [pos, n] = per_group[s.group_id];
      pos += s.label;
      ++n;
    }
    for (const auto& [id, pn] : per_group) m.gauc_groups += (pn.first > 0 && pn.first < pn.second);
    if (with_alignment) m.alignment_similarity = similarity.at(tasks[t].name);
    report.tasks.push_back(std::move(m));
  }
  return report;
}

std::map<std::string, double> mean_alignment_similarity(const Checkpoint& checkpoint,
                                                        std::span<const UserJourneyRecord> records, int threads) {
  if (checkpoint.stage == StageTag::kBase) {
    throw ContractError("base checkpoints carry no trained content encoder to align against");
  }
  if (checkpoint.model_config.zero_aux) throw ContractError("checkpoint was trained without teacher groups");
  if (records.empty()) throw InputError("alignment similarity needs at least one record");
  std::map<std::string, double> out;
  std::visit(
      [&](const auto& store) {
        using T = typename std::decay_t<decltype(store)>::Mat::Scalar;
        const Model<T> model = restore_model<T>(checkpoint);
        out = similarity_impl(model, records, threads);
      },
      checkpoint.params);
  return out;
}

}  // namespace ocarm
