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

#include "ocarm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ocarm/config.hpp"
#include "ocarm/errors.hpp"
#include "ocarm/optimizer.hpp"
#include "ocarm/rng.hpp"
#include "parallel.hpp"

namespace ocarm {
namespace {

constexpr std::uint64_t kShuffleDomain = 21;

// Stage 2 draws its fresh groups from a different stream than stage 1, so
// the fresh backbone is not a copy of the teacher-path backbone init.
std::uint64_t init_seed(std::uint64_t seed, int stage) {
  return stage == 1 ? seed : splitmix64(seed ^ 0x5354414745320000ULL);
}

GroupSet apply_freeze(GroupSet trainable, const TrainConfig& tc) {
  for (const auto& name : tc.freeze_groups) {
    const auto g = parse_group(name);
    if (!g) throw ConfigError("freeze_groups", "unknown group '" + name + "'");
    trainable.erase(*g);
  }
  return trainable;
}

void require_onboarding(std::span<const UserJourneyRecord> train, int days) {
  for (const auto& r : train) {
    if (static_cast<int>(r.onboarding.size()) != days) {
      throw InputError("record for user " + std::to_string(r.user_id) + " lacks onboarding content (" +
                       std::to_string(r.onboarding.size()) + " of " + std::to_string(days) + " days)");
    }
  }
}

template <typename Src, typename Dst>
void copy_param(const ParamStore<Src>& from, int from_id, ParamStore<Dst>& to, int to_id) {
  const auto& src = from.value(from_id);
  auto& dst = to.value(to_id);
  if (src.rows() != dst.rows() || src.cols() != dst.cols()) {
    throw IncompatibleError(to.name(to_id), "shape " + std::to_string(src.rows()) + "x" + std::to_string(src.cols()) +
                                                " does not match " + std::to_string(dst.rows()) + "x" +
                                                std::to_string(dst.cols()));
  }
  dst = src.template cast<Dst>();
}

template <typename T>
TrainResult run_training(Model<T>& model, std::span<const UserJourneyRecord> train, GroupSet trainable,
                         const TrainConfig& tc, StageTag tag, const typename BatchEvaluator<T>::RecordLoss& loss,
                         const EpochCallback& on_epoch) {
  TrainResult out;
  Adam<T> adam(model.params(), tc.step_size, 0.9, 0.999, 1e-8, tc.weight_decay);
  BatchEvaluator<T> evaluator(model.params(), trainable, tc.threads);
  GradientBuffer<T> grads(model.params(), trainable);

  std::vector<std::size_t> order(train.size());
  std::vector<const UserJourneyRecord*> batch;
  Rng shuffle_rng = make_stream(tc.seed, 0, kShuffleDomain);
  double window_sum = 0.0;
  int window_count = 0;
  auto snapshot = [&] {
    Checkpoint c;
    std::ostringstream state;
    state << shuffle_rng;
    c.stage = tag;
    c.model_config = model.config();
    c.train_config_hash = config_hash(tc);
    c.seed = tc.seed;
    c.rng_state = state.str();
    c.step = adam.steps();
    c.params = model.params();
    return c;
  };

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng = make_stream(tc.seed, static_cast<std::uint64_t>(epoch), kShuffleDomain);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_sum = 0.0;
    int epoch_batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(tc.batch_size));
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&train[order[i]]);

      const double value = evaluator.evaluate(batch, loss, grads);
      if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(adam.steps()));
      }
      adam.step(model.params(), grads);
      epoch_sum += value;
      ++epoch_batches;
      window_sum += value;
      ++window_count;
      if (tc.eval_every > 0 && adam.steps() % tc.eval_every == 0) {
        out.loss_log.push_back({epoch, adam.steps(), window_sum / window_count});
        window_sum = 0.0;
        window_count = 0;
      }
    }
    const double mean = epoch_batches > 0 ? epoch_sum / epoch_batches : 0.0;
    out.epoch_losses.push_back(mean);
    if (tc.eval_every == 0 && epoch_batches > 0) {
      out.loss_log.push_back({epoch, adam.steps(), mean});
      window_sum = 0.0;
      window_count = 0;
    }
    if (on_epoch) on_epoch(epoch, snapshot());
  }
  if (tc.eval_every > 0 && window_count > 0) {
    out.loss_log.push_back({tc.epochs - 1, adam.steps(), window_sum / window_count});
  }
  if (!model.params().all_finite()) throw NumericError("non-finite parameters after training");

  out.checkpoint = snapshot();
  return out;
}

template <typename T>
TrainResult stage1_impl(std::span<const UserJourneyRecord> train, const ModelConfig& mc, const TrainConfig& tc,
                        const EpochCallback& on_epoch) {
  Model<T> model(mc);
  model.initialize(init_seed(tc.seed, 1), GroupSet::all());
  const GroupSet trainable = apply_freeze(stage1_trainable(mc), tc);
  const Model<T>& m = model;
  return run_training(model, train, trainable, tc, mc.zero_aux ? StageTag::kBase : StageTag::kStage1,
                      [&m](Graph<T>& g, const UserJourneyRecord& r) { return m.record_loss_stage1(g, r); },
                      on_epoch);
}

template <typename T>
TrainResult stage2_impl(std::span<const UserJourneyRecord> train, const Checkpoint* teacher, const ModelConfig& mc,
                        const TrainConfig& tc, const EpochCallback& on_epoch) {
  Model<T> model(mc);
  model.initialize(init_seed(tc.seed, 2), GroupSet::all());
  if (mc.teacher_pretrained) {
    const GroupSet shared = teacher_groups();
    std::visit(
        [&](const auto& from) {
          auto& to = model.params();
          for (int id = 0; id < to.size(); ++id) {
            if (!shared.contains(to.group(id))) continue;
            const int src = from.find(to.name(id));
            if (src < 0) throw IncompatibleError(to.name(id), "missing from teacher checkpoint");
            copy_param(from, src, to, id);
          }
        },
        teacher->params);
  }
  const GroupSet trainable = apply_freeze(stage2_trainable(mc), tc);
  const Model<T>& m = model;
  return run_training(model, train, trainable, tc, StageTag::kStage2,
                      [&m](Graph<T>& g, const UserJourneyRecord& r) { return m.record_loss_stage2(g, r); },
                      on_epoch);
}

}  // namespace

template <typename T>
BatchEvaluator<T>::BatchEvaluator(const ParamStore<T>& params, GroupSet trainable, int threads)
    : params_(params), trainable_(trainable), threads_(detail::resolve_threads(threads)) {}

template <typename T>
double BatchEvaluator<T>::evaluate(std::span<const UserJourneyRecord* const> batch, const RecordLoss& loss,
                                   GradientBuffer<T>& grads) {
  grads.set_zero();
  if (batch.empty()) return 0.0;
  const int n = static_cast<int>(batch.size());
  const int chunks = (n + kChunkSize - 1) / kChunkSize;
  while (static_cast<int>(chunk_grads_.size()) < chunks) chunk_grads_.emplace_back(params_, trainable_);
  std::vector<double> chunk_loss(chunks, 0.0);
  const T seed = T(1) / static_cast<T>(n);

  auto run_chunk = [&](int c) {
    auto& buffer = chunk_grads_[c];
    buffer.set_zero();
    Graph<T> g(params_, &buffer);
    std::vector<Var> terms;
    const int begin = c * kChunkSize;
    const int end = std::min(n, begin + kChunkSize);
    for (int i = begin; i < end; ++i) terms.push_back(loss(g, *batch[i]));
    const Var total = g.tape().add_n(terms);
    chunk_loss[c] = static_cast<double>(g.value(total)(0, 0));
    g.tape().backward(total, seed);
  };

  detail::parallel_for(chunks, threads_, run_chunk);

  double total = 0.0;
  for (int c = 0; c < chunks; ++c) {
    grads.add(chunk_grads_[c]);
    total += chunk_loss[c];
  }
  return total / n;
}

GroupSet stage1_trainable(const ModelConfig& config) {
  if (config.zero_aux) return {Group::kEmbeddings, Group::kBackbone};
  return {Group::kEmbeddings, Group::kHae, Group::kHaeProj, Group::kBackbone};
}

GroupSet stage2_trainable(const ModelConfig& config) {
  if (!config.teacher_pretrained) return GroupSet::all();
  return {Group::kSfe, Group::kTaskTowers, Group::kBackbone};
}

GroupSet teacher_groups() { return {Group::kEmbeddings, Group::kHae, Group::kHaeProj}; }

TrainResult train_stage1(std::span<const UserJourneyRecord> train, const ModelConfig& model_config,
                         const TrainConfig& train_config, const EpochCallback& on_epoch) {
  model_config.validate();
  train_config.validate();
  if (train_config.stage != 1) throw ConfigError("stage", "train_stage1 requires stage = 1");
  if (train_config.epochs > 0 && train.empty()) throw InputError("training set is empty");
  if (!model_config.zero_aux) require_onboarding(train, model_config.days);
  if (train_config.precision == Precision::kFloat64) return stage1_impl<double>(train, model_config, train_config, on_epoch);
  return stage1_impl<float>(train, model_config, train_config, on_epoch);
}

TrainResult train_stage2(std::span<const UserJourneyRecord> train, const Checkpoint* teacher,
                         const ModelConfig& model_config, const TrainConfig& train_config,
                         const EpochCallback& on_epoch) {
  model_config.validate();
  train_config.validate();
  if (train_config.stage != 2) throw ConfigError("stage", "train_stage2 requires stage = 2");
  if (model_config.zero_aux) throw ConfigError("zero_aux", "stage 2 trains a student and needs zero_aux = false");
  if (model_config.teacher_pretrained) {
    if (teacher == nullptr) throw ContractError("teacher_pretrained is set but no stage-1 checkpoint was given");
    if (teacher->stage != StageTag::kStage1) {
      throw ContractError("teacher checkpoint is tagged " + stage_name(teacher->stage) + ", expected stage1");
    }
    if (teacher->model_config.d_repr != model_config.d_repr) {
      throw ConfigError("d_repr", "teacher width " + std::to_string(teacher->model_config.d_repr) +
                                      " does not match student width " + std::to_string(model_config.d_repr));
    }
    check_compatible(teacher->model_config, model_config, /*teacher_only=*/true);
  }
  if (train_config.epochs > 0 && train.empty()) throw InputError("training set is empty");
  require_onboarding(train, model_config.days);
  if (train_config.precision == Precision::kFloat64) {
    return stage2_impl<double>(train, teacher, model_config, train_config, on_epoch);
  }
  return stage2_impl<float>(train, teacher, model_config, train_config, on_epoch);
}

template <typename T>
Model<T> restore_model(const Checkpoint& checkpoint) {
  Model<T> model(checkpoint.model_config);
  std::visit(
      [&](const auto& from) {
        auto& to = model.params();
        if (from.size() != to.size()) {
          throw IncompatibleError("params", "checkpoint holds " + std::to_string(from.size()) + " arrays, model has " +
                                                std::to_string(to.size()));
        }
        for (int id = 0; id < to.size(); ++id) {
          const int src = from.find(to.name(id));
          if (src < 0) throw IncompatibleError(to.name(id), "missing from checkpoint");
          copy_param(from, src, to, id);
        }
      },
      checkpoint.params);
  return model;
}

std::string format_loss_log(const std::vector<LossRecord>& log) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch step loss\n";
  for (const auto& r : log) out << r.epoch << ' ' << r.step << ' ' << r.loss << '\n';
  return out.str();
}

template class BatchEvaluator<float>;
template class BatchEvaluator<double>;
template Model<float> restore_model<float>(const Checkpoint&);
template Model<double> restore_model<double>(const Checkpoint&);

}  // namespace ocarm
