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

#ifndef OCARM_CHECKPOINT_HPP_
#define OCARM_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>

#include "ocarm/model_config.hpp"
#include "ocarm/params.hpp"
#include "ocarm/train_config.hpp"

namespace ocarm {

// base: backbone trained with a zero auxiliary vector.
// stage1: teacher + backbone trained on leaked onboarding content.
// stage2: student + fresh backbone trained against a teacher.
enum class StageTag { kBase, kStage1, kStage2 };

std::string stage_name(StageTag stage);
StageTag parse_stage(std::string_view name);

struct Checkpoint {
  StageTag stage = StageTag::kStage1;
  ModelConfig model_config;
  std::uint64_t train_config_hash = 0;
  std::uint64_t seed = 0;
  std::string rng_state;  // textual mt19937_64 state after training
  std::int64_t step = 0;
  std::variant<ParamStore<float>, ParamStore<double>> params;

  Precision precision() const {
    return std::holds_alternative<ParamStore<double>>(params) ? Precision::kFloat64 : Precision::kFloat32;
  }
  bool operator==(const Checkpoint& other) const;
};

// Container layout:
//   line 1: "OCARM-CHECKPOINT 1"
//   line 2: "<fnv1a64 hex> <header bytes> <payload bytes>"
//   header: JSON metadata (stage, configs, precision, array table)
//   payload: raw little-endian arrays in table order
// The checksum covers header and payload. Loading never returns a partially
// read checkpoint.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// As above, then requires the stored model config to match `expected`
// (IncompatibleError names the first differing field).
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);

// Fields that decide whether parameters can be shared. With `teacher_only`,
// only fields the content encoder and embeddings depend on are compared.
void check_compatible(const ModelConfig& stored, const ModelConfig& expected, bool teacher_only = false);

}  // namespace ocarm

#endif  // OCARM_CHECKPOINT_HPP_
