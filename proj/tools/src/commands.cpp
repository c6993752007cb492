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

#include "commands.hpp"

#include <cstdlib>
#include <functional>
#include <iostream>
#include <regex>

#include <CLI11.hpp>

#include "manifest.hpp"
#include "ocarm/checkpoint.hpp"
#include "ocarm/config.hpp"
#include "ocarm/dataset_io.hpp"
#include "ocarm/errors.hpp"
#include "ocarm/experiments.hpp"
#include "ocarm/metrics.hpp"
#include "ocarm/trainer.hpp"

namespace ocarm::cli {
namespace {

namespace fs = std::filesystem;

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IncompatibleError& e) {
    err << "incompatible checkpoint: " << e.what() << '\n';
    return kExitIncompatible;
  } catch (const IntegrityError& e) {
    err << "integrity error: " << e.what() << '\n';
    return kExitIntegrity;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitIntegrity;
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << '\n';
    return kExitIntegrity;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

void make_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
}

fs::path default_out(const fs::path& given, const std::string& name) {
  return given.empty() ? run_root() / name : given;
}

// Model configs omit the data schema; it comes from the generator snapshot
// that gen-data leaves next to the dataset files.
ModelConfig model_for_data(const fs::path& model_path, const fs::path& data_dir) {
  ModelConfig model = load_model_config(model_path);
  const fs::path gen_path = data_dir / "gen_config.json";
  if (fs::exists(gen_path)) model = with_schema(model, load_gen_config(gen_path));
  model.validate();
  return model;
}

std::vector<MatrixRow> load_rows(const fs::path& run_dir, const std::vector<std::string>& names) {
  std::vector<MatrixRow> rows;
  const std::regex seed_dir("seed-([0-9]+)");
  for (const auto& name : names) {
    MatrixRow row;
    row.name = name;
    const fs::path dir = run_dir / "runs" / name;
    if (!fs::is_directory(dir)) throw InputError("no run directory for row " + name + " under " + run_dir.string());
    std::vector<std::pair<std::uint64_t, fs::path>> seeds;
    for (const auto& entry : fs::directory_iterator(dir)) {
      std::smatch m;
      const std::string leaf = entry.path().filename().string();
      if (entry.is_directory() && std::regex_match(leaf, m, seed_dir) && fs::exists(entry.path() / "eval.txt")) {
        seeds.emplace_back(std::stoull(m[1].str()), entry.path() / "eval.txt");
      }
    }
    std::sort(seeds.begin(), seeds.end());
    for (const auto& [seed, path] : seeds) {
      row.seeds.push_back(seed);
      row.reports.push_back(parse_eval_report(read_file(path)));
    }
    rows.push_back(std::move(row));
  }
  for (auto& row : rows) recompute_aggregates(row, &rows.front());
  return rows;
}

void write_alignment(const AlignmentAnalysis& analysis, const fs::path& dir, RunManifest& manifest) {
  for (const auto& [task, rho] : analysis.spearman) {
    const fs::path p = dir / ("alignment_" + task + ".tsv");
    write_file_atomic(p, format_alignment_points(analysis, task));
    manifest.artifacts.push_back(p.string());
  }
}

}  // namespace

fs::path run_root() {
  const char* env = std::getenv("OCARM_RUN_ROOT");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
}

int cmd_gen_data(const GenDataArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    RunManifest manifest{.command = "gen-data", .started = utc_now()};
    GenConfig gen = load_gen_config(args.config);
    if (args.seed) gen.seed = *args.seed;
    gen.validate();
    const fs::path dir = default_out(args.out_dir, "data-" + hex64(config_hash(gen)));
    make_out_dir(dir);
    manifest.configs.emplace_back(args.config.string(), hex64(config_hash(gen)));
    manifest.seed = gen.seed;

    auto [train, test] = generate_dataset(gen);
    serialize_dataset(train, dir / "train.jsonl");
    serialize_dataset(test, dir / "test.jsonl");
    write_file_atomic(dir / "gen_config.json", to_json(gen));
    manifest.artifacts = {(dir / "train.jsonl").string(), (dir / "test.jsonl").string(),
                          (dir / "gen_config.json").string()};
    out << "wrote " << train.records.size() << " train and " << test.records.size() << " test records to "
        << dir.string() << '\n';
    return finalize_manifest(manifest, dir) ? kExitOk : kExitFailure;
  });
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    RunManifest manifest{.command = "train", .started = utc_now()};
    if (args.stage != 1 && args.stage != 2) throw UsageError("--stage must be 1 or 2");
    const ModelConfig model = model_for_data(args.model_config, args.data_dir);
    TrainConfig train = load_train_config(args.train_config);
    train.stage = args.stage;
    train.validate();

    std::optional<Checkpoint> teacher;
    if (args.stage == 2 && model.teacher_pretrained) {
      if (!args.teacher) {
        throw UsageError("stage 2 with teacher_pretrained=true needs --teacher <stage-1 checkpoint>");
      }
      teacher = load_checkpoint(*args.teacher);
    }
    const Dataset data = deserialize_dataset(args.data_dir / "train.jsonl");
    if (data.split != Split::kTrain) throw InputError("train.jsonl does not hold the training split");

    const fs::path dir = default_out(args.out_dir, "train-stage" + std::to_string(args.stage) + "-" +
                                                      hex64(config_hash(model) ^ config_hash(train)));
    make_out_dir(dir);
    manifest.configs.emplace_back(args.model_config.string(), hex64(config_hash(model)));
    manifest.configs.emplace_back(args.train_config.string(), hex64(config_hash(train)));
    manifest.seed = train.seed;

    const TrainResult result = args.stage == 1
                                   ? train_stage1(data.records, model, train)
                                   : train_stage2(data.records, teacher ? &*teacher : nullptr, model, train);
    save_checkpoint(result.checkpoint, dir / "checkpoint.ckpt");
    write_file_atomic(dir / "loss.txt", format_loss_log(result.loss_log));
    write_file_atomic(dir / "model_config.json", to_json(model));
    write_file_atomic(dir / "train_config.json", to_json(train));
    manifest.artifacts = {(dir / "checkpoint.ckpt").string(), (dir / "loss.txt").string(),
                          (dir / "model_config.json").string(), (dir / "train_config.json").string()};
    out << "stage " << args.stage << " checkpoint (" << stage_name(result.checkpoint.stage) << ") after "
        << result.checkpoint.step << " steps written to " << dir.string() << '\n';
    return finalize_manifest(manifest, dir) ? kExitOk : kExitFailure;
  });
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    RunManifest manifest{.command = "eval", .started = utc_now()};
    const Checkpoint ckpt = load_checkpoint(args.checkpoint);
    if (ckpt.stage == StageTag::kStage1 && !args.allow_leakage) {
      err << "refusing to evaluate a stage-1 checkpoint: its scores read onboarding content, which only exists "
             "after the conversion being scored. Pass --allow-leakage to produce an upper-bound report labeled "
             "leaked-evaluation: true.\n";
      return static_cast<int>(kExitRefused);
    }
    const Dataset data = deserialize_dataset(args.data);
    EvalOptions opts;
    opts.allow_leakage = args.allow_leakage;
    const EvalReport report = evaluate(ckpt, data, opts);
    const fs::path report_path =
        args.report.empty() ? run_root() / ("eval-" + hex64(report.model_config_hash)) / "report.txt" : args.report;
    const fs::path dir = report_path.has_parent_path() ? report_path.parent_path() : fs::path(".");
    make_out_dir(dir);
    const std::string text = format_eval_report(report);
    write_file_atomic(report_path, text);
    out << text;
    manifest.configs.emplace_back(args.checkpoint.string(), hex64(report.model_config_hash));
    manifest.seed = report.seed;
    manifest.artifacts = {report_path.string()};
    return finalize_manifest(manifest, dir) ? kExitOk : kExitFailure;
  });
}

int cmd_matrix(const MatrixArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    RunManifest manifest{.command = "matrix", .started = utc_now()};
    MatrixConfig config = load_matrix_config(args.config);
    if (!args.seeds.empty()) config.seeds = args.seeds;
    const fs::path dir = default_out(args.out_dir, "matrix-" + hex64(fnv1a64(to_json(config))));
    make_out_dir(dir);
    write_file_atomic(dir / "matrix_config.json", to_json(config));
    manifest.configs.emplace_back(args.config.string(), hex64(fnv1a64(to_json(config))));
    manifest.seed = config.seeds.front();

    ExperimentOptions opts;
    opts.out_dir = dir;
    opts.threads = args.threads;
    opts.log = [&err](const std::string& line) { err << line << std::endl; };
    Experiment experiment(config, opts);
    std::vector<MatrixRow> rows = experiment.run_matrix();
    const std::vector<MatrixRow> variants = experiment.run_variants();
    rows.insert(rows.end(), variants.begin(), variants.end());

    std::optional<AlignmentAnalysis> analysis;
    const MatrixRow* base = find_row(rows, kRowBase);
    if (base != nullptr && !base->failed()) {
      try {
        analysis = alignment_gain_analysis(variants, *base);
        write_alignment(*analysis, dir, manifest);
      } catch (const InsufficientDataError& e) {
        err << "alignment analysis skipped: " << e.what() << '\n';
      }
    }
    const auto verdicts = ordering_verdicts(rows, analysis ? &*analysis : nullptr);
    const std::string report = format_aggregate_report(rows, analysis ? &*analysis : nullptr, verdicts);
    write_file_atomic(dir / "aggregate.txt", report);
    manifest.artifacts.push_back((dir / "aggregate.txt").string());
    manifest.artifacts.push_back((dir / "matrix_config.json").string());
    out << report;

    bool any_failed = false;
    for (const auto& r : rows) any_failed = any_failed || r.failed();
    manifest.exit_status = any_failed ? kExitFailure : kExitOk;
    const bool ok = finalize_manifest(manifest, dir);
    return any_failed || !ok ? kExitFailure : kExitOk;
  });
}

int cmd_analyze_alignment(const AnalyzeArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    RunManifest manifest{.command = "analyze-alignment", .started = utc_now()};
    const auto rows = load_rows(args.run_dir, {kRowBase, kRowVariant1, kRowVariant2, kRowVariant3});
    const AlignmentAnalysis analysis =
        alignment_gain_analysis(std::span<const MatrixRow>(rows).subspan(1), rows.front());
    write_alignment(analysis, args.run_dir, manifest);
    for (const auto& [task, rho] : analysis.spearman) out << "alignment." << task << ".spearman: " << rho << '\n';
    return finalize_manifest(manifest, args.run_dir) ? kExitOk : kExitFailure;
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ocarm: onboarding-content-aware retention modeling"};
  app.require_subcommand(1);

  GenDataArgs gen;
  std::uint64_t gen_seed = 0;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate synthetic train/test datasets");
  gen_cmd->add_option("--config", gen.config, "generator config (JSON)")->required();
  gen_cmd->add_option("--out", gen.out_dir, "output directory");
  auto* seed_opt = gen_cmd->add_option("--seed", gen_seed, "override the config seed");

  TrainArgs train;
  std::string teacher;
  auto* train_cmd = app.add_subcommand("train", "train a stage-1 or stage-2 model");
  train_cmd->add_option("--stage", train.stage, "1 or 2")->required();
  train_cmd->add_option("--data", train.data_dir, "directory written by gen-data")->required();
  train_cmd->add_option("--model-config", train.model_config, "model config (JSON)")->required();
  train_cmd->add_option("--train-config", train.train_config, "train config (JSON)")->required();
  train_cmd->add_option("--out", train.out_dir, "output directory");
  auto* teacher_opt = train_cmd->add_option("--teacher", teacher, "stage-1 checkpoint (stage 2)");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset file");
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
  eval_cmd->add_option("--data", eval.data, "dataset file, usually test.jsonl")->required();
  eval_cmd->add_option("--report", eval.report, "report path");
  eval_cmd->add_flag("--allow-leakage", eval.allow_leakage,
                     "score stage-1 checkpoints through the teacher (upper bound; reads onboarding content)");

  MatrixArgs matrix;
  auto* matrix_cmd = app.add_subcommand("matrix", "run the stage ablation and encoder variants over seeds");
  matrix_cmd->add_option("--config", matrix.config, "composite config (JSON)")->required();
  matrix_cmd->add_option("--out", matrix.out_dir, "output directory");
  matrix_cmd->add_option("--seeds", matrix.seeds, "comma-separated seeds")->delimiter(',');
  matrix_cmd->add_option("--threads", matrix.threads, "worker threads (0 = all cores)");

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze-alignment", "similarity vs. gain points from a matrix run");
  analyze_cmd->add_option("--run", analyze.run_dir, "matrix output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  if (*gen_cmd) {
    if (*seed_opt) gen.seed = gen_seed;
    return cmd_gen_data(gen, out, err);
  }
  if (*train_cmd) {
    if (*teacher_opt) train.teacher = teacher;
    return cmd_train(train, out, err);
  }
  if (*eval_cmd) return cmd_eval(eval, out, err);
  if (*matrix_cmd) return cmd_matrix(matrix, out, err);
  return cmd_analyze_alignment(analyze, out, err);
}

}  // namespace ocarm::cli
