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

#ifndef OCARM_TRAINER_HPP_
#define OCARM_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ocarm/checkpoint.hpp"
#include "ocarm/datagen.hpp"
#include "ocarm/model.hpp"
#include "ocarm/model_config.hpp"
#include "ocarm/params.hpp"
#include "ocarm/train_config.hpp"

namespace ocarm {

struct LossRecord {
  int epoch = 0;
  std::int64_t step = 0;  // optimizer steps taken when the record was written
  double loss = 0.0;      // mean batch loss since the previous record
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> loss_log;
  std::vector<double> epoch_losses;  // mean batch loss per epoch
};

// Records per gradient chunk. Chunk gradients are reduced in chunk order, so
// the summed gradient does not depend on how many workers evaluated them.
inline constexpr int kChunkSize = 16;

// Mean loss and gradient over a batch, evaluated in parallel chunks.
template <typename T>
class BatchEvaluator {
 public:
  using RecordLoss = std::function<Var(Graph<T>&, const UserJourneyRecord&)>;

  BatchEvaluator(const ParamStore<T>& params, GroupSet trainable, int threads);

  // Fills `grads` with d(mean loss)/d(params); returns the mean loss.
  double evaluate(std::span<const UserJourneyRecord* const> batch, const RecordLoss& loss, GradientBuffer<T>& grads);

 private:
  const ParamStore<T>& params_;
  GroupSet trainable_;
  int threads_;
  std::vector<GradientBuffer<T>> chunk_grads_;
};

// Groups each stage optimizes before freeze_groups is applied.
GroupSet stage1_trainable(const ModelConfig& config);
GroupSet stage2_trainable(const ModelConfig& config);
// Groups the stage-2 model takes from the stage-1 checkpoint.
GroupSet teacher_groups();

// Called after every epoch with the parameters reached so far (diagnostics).
using EpochCallback = std::function<void(int epoch, const Checkpoint& snapshot)>;

TrainResult train_stage1(std::span<const UserJourneyRecord> train, const ModelConfig& model_config,
                         const TrainConfig& train_config, const EpochCallback& on_epoch = {});
// `teacher` is required when model_config.teacher_pretrained is set and
// ignored otherwise.
TrainResult train_stage2(std::span<const UserJourneyRecord> train, const Checkpoint* teacher,
                         const ModelConfig& model_config, const TrainConfig& train_config,
                         const EpochCallback& on_epoch = {});

// Copies checkpoint arrays into a model built from the checkpoint's config.
template <typename T>
Model<T> restore_model(const Checkpoint& checkpoint);

std::string format_loss_log(const std::vector<LossRecord>& log);

extern template class BatchEvaluator<float>;
extern template class BatchEvaluator<double>;
extern template Model<float> restore_model<float>(const Checkpoint&);
extern template Model<double> restore_model<double>(const Checkpoint&);

}  // namespace ocarm

#endif  // OCARM_TRAINER_HPP_
