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

#include "ocarm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "ocarm/dataset_io.hpp"
#include "ocarm/errors.hpp"
#include "ocarm/trainer.hpp"

namespace ocarm {
namespace {

std::string real(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

std::string short_real(double v) {
  std::ostringstream out;
  out.precision(5);
  out << std::fixed << v;
  return out.str();
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mid;
    i = j;
  }
  return ranks;
}

// Replaces every onboarding item with a different id; scores on the
// leakage-free path must not move.
void check_onboarding_invariance(const Checkpoint& ckpt, std::span<const UserJourneyRecord> records, int threads) {
  const std::size_t n = std::min<std::size_t>(records.size(), 32);
  std::vector<UserJourneyRecord> perturbed(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(n));
  const int vocab = ckpt.model_config.vocab_size;
  for (auto& r : perturbed) {
    for (auto& day : r.onboarding) {
      for (auto& v : day) v = (v + 1 + vocab / 2) % vocab;
      day.push_back(0);
    }
  }
  EvalOptions opts;
  opts.threads = threads;
  const auto a = score_records(ckpt, records.subspan(0, n), opts);
  const auto b = score_records(ckpt, perturbed, opts);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < a[i].size(); ++t) {
      if (std::memcmp(&a[i][t], &b[i][t], sizeof(double)) != 0) {
        throw IntegrityError("serving score moved when onboarding content changed (user " +
                             std::to_string(records[i].user_id) + ")");
      }
    }
  }
}

}  // namespace

Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  a.count = static_cast<int>(values.size());
  if (values.empty()) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stdev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

void recompute_aggregates(MatrixRow& row, const MatrixRow* base) {
  row.aggregates.clear();
  if (row.reports.empty()) return;
  for (const auto& task : row.reports.front().tasks) {
    std::vector<double> aucs, gaucs, deltas, sims;
    for (std::size_t s = 0; s < row.reports.size(); ++s) {
      const auto& m = row.reports[s].task(task.task);
      aucs.push_back(m.auc);
      gaucs.push_back(m.gauc);
      if (m.alignment_similarity) sims.push_back(*m.alignment_similarity);
      if (base != nullptr && !base->failed()) {
        const auto it = std::find(base->seeds.begin(), base->seeds.end(), row.seeds[s]);
        if (it != base->seeds.end()) {
          deltas.push_back(m.auc - base->reports[static_cast<std::size_t>(it - base->seeds.begin())].task(task.task).auc);
        }
      }
    }
    row.aggregates[task.task + ".auc"] = aggregate(aucs);
    row.aggregates[task.task + ".gauc"] = aggregate(gaucs);
    if (deltas.size() == row.reports.size()) row.aggregates[task.task + ".delta_auc"] = aggregate(deltas);
    if (sims.size() == row.reports.size()) row.aggregates[task.task + ".alignment"] = aggregate(sims);
  }
}

ModelConfig row_model_config(const std::string& row, const ModelConfig& base) {
  ModelConfig m = base;
  m.zero_aux = false;
  m.teacher_pretrained = true;
  m.stop_gradient = true;
  m.content_encoder = ContentEncoder::kHae;
  m.user_encoder = UserEncoder::kSfe;
  if (row == kRowBase) {
    m.zero_aux = true;
  } else if (row == kRowStage2Only) {
    m.teacher_pretrained = false;
    m.stop_gradient = false;
  } else if (row == kRowVariant1) {
    m.content_encoder = ContentEncoder::kMlp;
    m.user_encoder = UserEncoder::kMlp;
  } else if (row == kRowVariant2) {
    m.user_encoder = UserEncoder::kMlp;
  } else if (row != kRowUpperBound && row != kRowFull && row != kRowVariant3) {
    throw ContractError("unknown matrix row " + row);
  }
  return m;
}

namespace {

std::string row_delta(const std::string& row) {
  if (row == kRowBase) return "zero_aux=true; backbone only";
  if (row == kRowUpperBound) return "stage 1 teacher path; evaluated with onboarding content (leaked)";
  if (row == kRowStage2Only) return "teacher_pretrained=false; stop_gradient=false";
  if (row == kRowFull) return "two-stage; HAE teacher, SFE student";
  if (row == kRowVariant1) return "content_encoder=mlp; user_encoder=mlp";
  if (row == kRowVariant2) return "content_encoder=hae; user_encoder=mlp";
  return "content_encoder=hae; user_encoder=sfe (same run as Full)";
}

}  // namespace

struct Experiment::SeedState {
  std::uint64_t seed = 0;
  GenConfig gen;
  ModelConfig model;  // schema-filled base config
  TrainConfig train;
  Dataset train_set;
  Dataset test_set;
  std::map<ContentEncoder, Checkpoint> teachers;
  std::map<std::string, EvalReport> reports;
};

Experiment::Experiment(MatrixConfig config, ExperimentOptions options)
    : config_(std::move(config)), options_(std::move(options)) {
  if (config_.seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  config_.gen.validate();
  config_.train.validate();
}

Experiment::~Experiment() = default;

Experiment::SeedState& Experiment::seed_state(std::uint64_t seed) {
  auto& slot = seeds_[seed];
  if (slot) return *slot;
  auto state = std::make_unique<SeedState>();
  state->seed = seed;
  state->gen = config_.gen;
  state->gen.seed = seed;
  state->model = with_schema(config_.model, state->gen);
  state->train = config_.train;
  state->train.seed = seed;
  if (options_.log) options_.log("seed " + std::to_string(seed) + ": generating data");
  auto [train, test] = generate_dataset(state->gen);
  state->train_set = std::move(train);
  state->test_set = std::move(test);
  slot = std::move(state);
  return *slot;
}

EvalReport Experiment::run_one(const std::string& name, SeedState& st) {
  if (const auto it = st.reports.find(name); it != st.reports.end()) return it->second;
  if (name == kRowVariant3) {
    EvalReport r = run_one(kRowFull, st);
    st.reports[name] = r;
    // Same run as Full; the report is repeated so the row reloads from disk.
    if (!options_.out_dir.empty()) {
      const auto dir = options_.out_dir / "runs" / name / ("seed-" + std::to_string(st.seed));
      std::filesystem::create_directories(dir);
      write_file_atomic(dir / "eval.txt", format_eval_report(r));
    }
    return r;
  }

  const std::filesystem::path dir = options_.out_dir.empty()
                                        ? std::filesystem::path()
                                        : options_.out_dir / "runs" / name / ("seed-" + std::to_string(st.seed));
  const ModelConfig mc = row_model_config(name, st.model);
  if (!dir.empty()) {
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "gen_config.json", to_json(st.gen));
    write_file_atomic(dir / "model_config.json", to_json(mc));
  }
  auto log = [&](const std::string& what) {
    if (options_.log) options_.log(name + " seed " + std::to_string(st.seed) + ": " + what);
  };

  TrainConfig tc1 = st.train;
  tc1.stage = 1;
  if (tc1.threads == 0) tc1.threads = options_.threads;
  TrainConfig tc2 = tc1;
  tc2.stage = 2;

  auto teacher_for = [&](ContentEncoder enc) -> const Checkpoint& {
    if (const auto it = st.teachers.find(enc); it != st.teachers.end()) return it->second;
    ModelConfig tm = mc;
    tm.content_encoder = enc;
    tm.user_encoder = UserEncoder::kSfe;  // fixed so the teacher init does not depend on row order
    tm.teacher_pretrained = true;
    tm.stop_gradient = true;
    tm.zero_aux = false;
    log("training stage-1 teacher");
    TrainResult res = train_stage1(st.train_set.records, tm, tc1);
    if (!dir.empty()) {
      save_checkpoint(res.checkpoint, dir / "teacher.ckpt");
      write_file_atomic(dir / "teacher_loss.txt", format_loss_log(res.loss_log));
    }
    return st.teachers.emplace(enc, std::move(res.checkpoint)).first->second;
  };

  EvalOptions eval_opts;
  eval_opts.threads = options_.threads;
  TrainResult res;
  const TrainConfig* used = &tc2;
  if (name == kRowBase) {
    log("training backbone");
    res = train_stage1(st.train_set.records, mc, tc1);
    used = &tc1;
  } else if (name == kRowUpperBound) {
    res.checkpoint = teacher_for(ContentEncoder::kHae);
    used = &tc1;
  } else if (name == kRowStage2Only) {
    log("training joint stage 2 without teacher");
    res = train_stage2(st.train_set.records, nullptr, mc, tc2);
  } else {
    const Checkpoint& teacher = teacher_for(mc.content_encoder);
    log("training stage-2 student");
    res = train_stage2(st.train_set.records, &teacher, mc, tc2);
  }

  EvalReport report;
  if (name == kRowUpperBound) {
    eval_opts.allow_leakage = true;
    report = evaluate(res.checkpoint, st.test_set, eval_opts);
  } else {
    check_onboarding_invariance(res.checkpoint, st.test_set.records, options_.threads);
    report = evaluate(res.checkpoint, st.test_set, eval_opts);
  }
  if (!dir.empty()) {
    write_file_atomic(dir / "train_config.json", to_json(*used));
    if (name != kRowUpperBound) {
      save_checkpoint(res.checkpoint, dir / "model.ckpt");
      write_file_atomic(dir / "loss.txt", format_loss_log(res.loss_log));
    }
    write_file_atomic(dir / "eval.txt", format_eval_report(report));
  }
  std::string summary = "done";
  for (const auto& t : report.tasks) summary += " " + t.task + ".auc=" + short_real(t.auc);
  log(summary);
  st.reports[name] = report;
  return report;
}

MatrixRow Experiment::run_row(const std::string& name) {
  if (const auto it = finished_.find(name); it != finished_.end()) return it->second;
  MatrixRow row;
  row.name = name;
  row.config_delta = row_delta(name);
  row.model_config_hash = config_hash(row_model_config(name, with_schema(config_.model, config_.gen)));
  for (std::uint64_t seed : config_.seeds) {
    try {
      EvalReport r = run_one(name, seed_state(seed));
      row.seeds.push_back(seed);
      row.reports.push_back(std::move(r));
    } catch (const std::exception& e) {
      row.error = "seed " + std::to_string(seed) + ": " + e.what();
      if (options_.log) options_.log(name + " failed: " + row.error);
      row.seeds.clear();
      row.reports.clear();
      break;
    }
  }
  const MatrixRow* base = nullptr;
  MatrixRow base_row;
  if (name != kRowBase) {
    base_row = run_row(kRowBase);
    base = &base_row;
  }
  if (!row.failed()) recompute_aggregates(row, name == kRowBase ? &row : base);
  finished_[name] = row;
  return row;
}

std::vector<MatrixRow> Experiment::run_matrix() {
  return {run_row(kRowBase), run_row(kRowUpperBound), run_row(kRowStage2Only), run_row(kRowFull)};
}

std::vector<MatrixRow> Experiment::run_variants() {
  return {run_row(kRowVariant1), run_row(kRowVariant2), run_row(kRowVariant3)};
}

std::vector<MatrixRow> run_matrix(const MatrixConfig& config, const ExperimentOptions& options) {
  Experiment e(config, options);
  return e.run_matrix();
}

std::vector<MatrixRow> run_variants(const MatrixConfig& config, const ExperimentOptions& options) {
  Experiment e(config, options);
  return e.run_variants();
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractError("spearman: length mismatch");
  if (x.size() < 3) {
    throw InsufficientDataError("rank correlation needs at least 3 points, got " + std::to_string(x.size()));
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

AlignmentAnalysis alignment_gain_analysis(std::span<const MatrixRow> variant_rows, const MatrixRow& base) {
  AlignmentAnalysis out;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per_task;
  for (const auto& row : variant_rows) {
    if (row.failed()) continue;
    for (std::size_t s = 0; s < row.reports.size(); ++s) {
      const auto it = std::find(base.seeds.begin(), base.seeds.end(), row.seeds[s]);
      if (it == base.seeds.end()) continue;
      const auto& base_report = base.reports[static_cast<std::size_t>(it - base.seeds.begin())];
      for (const auto& m : row.reports[s].tasks) {
        if (!m.alignment_similarity) continue;
        AlignmentPoint p{row.name, row.seeds[s], m.task, *m.alignment_similarity,
                         m.auc - base_report.task(m.task).auc};
        per_task[m.task].first.push_back(p.similarity);
        per_task[m.task].second.push_back(p.delta_auc);
        out.points.push_back(std::move(p));
      }
    }
  }
  if (per_task.empty()) throw InsufficientDataError("no variant run carries an alignment similarity");
  for (const auto& [task, xy] : per_task) out.spearman[task] = spearman(xy.first, xy.second);
  return out;
}

std::string format_alignment_points(const AlignmentAnalysis& analysis, const std::string& task) {
  std::ostringstream out;
  out << "variant\tseed\tsimilarity\tdelta_auc\n";
  for (const auto& p : analysis.points) {
    if (p.task != task) continue;
    out << p.variant << '\t' << p.seed << '\t' << real(p.similarity) << '\t' << real(p.delta_auc) << '\n';
  }
  return out.str();
}

const MatrixRow* find_row(std::span<const MatrixRow> rows, const std::string& name) {
  for (const auto& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

std::vector<Verdict> ordering_verdicts(std::span<const MatrixRow> rows, const AlignmentAnalysis* analysis) {
  std::vector<Verdict> out;
  std::vector<std::string> tasks;
  for (const auto& r : rows) {
    if (!r.failed() && !r.reports.empty()) {
      for (const auto& t : r.reports.front().tasks) tasks.push_back(t.task);
      break;
    }
  }
  auto mean = [&](const std::string& row, const std::string& key) -> std::optional<double> {
    const MatrixRow* r = find_row(rows, row);
    if (r == nullptr || r->failed()) return std::nullopt;
    const auto it = r->aggregates.find(key);
    if (it == r->aggregates.end()) return std::nullopt;
    return it->second.mean;
  };
  auto compare = [&](const std::string& rule, std::optional<double> lhs, std::optional<double> rhs, double margin,
                     bool strict, const std::string& text) {
    Verdict v{rule, false, ""};
    if (!lhs || !rhs) {
      v.detail = "missing row";
    } else {
      v.pass = strict ? *lhs > *rhs + margin : *lhs >= *rhs + margin;
      v.detail = short_real(*lhs) + " vs " + short_real(*rhs) + text;
    }
    out.push_back(std::move(v));
  };

  const bool have_matrix = find_row(rows, kRowBase) && find_row(rows, kRowFull);
  const bool have_variants = find_row(rows, kRowVariant1) != nullptr;
  for (const auto& t : tasks) {
    const std::string auc = t + ".auc";
    if (have_matrix) {
      compare("upper_bound_over_full." + t, mean(kRowUpperBound, auc), mean(kRowFull, auc), 0.003, false,
              " (needs >= +0.003)");
      compare("full_over_base." + t, mean(kRowFull, auc), mean(kRowBase, auc), 0.005, false, " (needs >= +0.005)");
      compare("full_over_stage2_only." + t, mean(kRowFull, auc), mean(kRowStage2Only, auc), 0.0, true,
              " (needs >)");
    }
    if (have_variants) {
      const std::string d = t + ".delta_auc";
      compare("variant1_gain_positive." + t, mean(kRowVariant1, d), 0.0, 0.0, true, " (needs > 0)");
      compare("variant2_over_variant1." + t, mean(kRowVariant2, d), mean(kRowVariant1, d), 0.0, true, " (needs >)");
      compare("variant3_over_variant2." + t, mean(kRowVariant3, d), mean(kRowVariant2, d), 0.0, true, " (needs >)");
    }
    if (analysis != nullptr) {
      const auto it = analysis->spearman.find(t);
      Verdict v{"similarity_gain_rank_correlation." + t, false, "missing"};
      if (it != analysis->spearman.end()) {
        v.pass = it->second > 0.0;
        v.detail = "spearman " + short_real(it->second) + " (needs > 0)";
      }
      out.push_back(std::move(v));
    }
  }
  return out;
}

std::string format_aggregate_report(std::span<const MatrixRow> rows, const AlignmentAnalysis* analysis,
                                    std::span<const Verdict> verdicts) {
  std::ostringstream out;
  for (const auto& r : rows) {
    const std::string p = "row." + r.name + ".";
    out << p << "config-delta: " << r.config_delta << '\n';
    out << p << "model-config-hash: " << hex64(r.model_config_hash) << '\n';
    out << p << "status: " << (r.failed() ? "failed" : "ok") << '\n';
    if (r.failed()) {
      out << p << "error: " << r.error << '\n';
      continue;
    }
    std::string seeds;
    for (auto s : r.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
    out << p << "seeds: " << seeds << '\n';
    if (!r.reports.empty()) {
      out << p << "leaked-evaluation: " << (r.reports.front().leaked_evaluation ? "true" : "false") << '\n';
    }
    for (const auto& [key, a] : r.aggregates) {
      out << p << key << ".mean: " << real(a.mean) << '\n';
      out << p << key << ".stdev: " << real(a.stdev) << '\n';
    }
  }
  if (analysis != nullptr) {
    for (const auto& [task, rho] : analysis->spearman) out << "alignment." << task << ".spearman: " << real(rho) << '\n';
  }
  for (const auto& v : verdicts) {
    out << "verdict." << v.rule << ": " << (v.pass ? "pass" : "fail") << " (" << v.detail << ")\n";
  }
  return out.str();
}

}  // namespace ocarm
