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

#ifndef OCARM_TRAIN_CONFIG_HPP_
#define OCARM_TRAIN_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace ocarm {

enum class Precision { kFloat32, kFloat64 };

struct TrainConfig {
  int stage = 1;
  int epochs = 6;
  int batch_size = 64;
  double step_size = 4e-3;
  double weight_decay = 0.0;  // decoupled, applied to trainable arrays each step
  std::uint64_t seed = 1;
  std::vector<std::string> freeze_groups;
  int eval_every = 0;  // steps between loss-log records; 0 = once per epoch
  Precision precision = Precision::kFloat32;
  // Worker threads for gradient evaluation; 0 picks hardware concurrency.
  // Results do not depend on this value.
  int threads = 0;

  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

}  // namespace ocarm

#endif  // OCARM_TRAIN_CONFIG_HPP_
