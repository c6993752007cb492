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

#ifndef OCARM_CONFIG_HPP_
#define OCARM_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ocarm/datagen.hpp"
#include "ocarm/model_config.hpp"
#include "ocarm/train_config.hpp"

namespace ocarm {

// Config files are JSON objects. Absent keys keep their defaults; unknown
// keys and out-of-range values raise ConfigError naming the key.

std::string to_json(const GenConfig& config);
std::string to_json(const ModelConfig& config);
std::string to_json(const TrainConfig& config);

GenConfig parse_gen_config(std::string_view text);
ModelConfig parse_model_config(std::string_view text);
TrainConfig parse_train_config(std::string_view text);

GenConfig load_gen_config(const std::filesystem::path& path);
ModelConfig load_model_config(const std::filesystem::path& path);
TrainConfig load_train_config(const std::filesystem::path& path);

// Composite config for experiment-matrix runs: {"gen": {...}, "model": {...},
// "train": {...}, "seeds": [...]}.
struct MatrixConfig {
  GenConfig gen;
  ModelConfig model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
};

MatrixConfig parse_matrix_config(std::string_view text);
MatrixConfig load_matrix_config(const std::filesystem::path& path);
std::string to_json(const MatrixConfig& config);

// FNV-1a over the canonical JSON form.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t config_hash(const GenConfig& config);
std::uint64_t config_hash(const ModelConfig& config);
std::uint64_t config_hash(const TrainConfig& config);
std::string hex64(std::uint64_t value);

// Model schema derived from a dataset generator (vocab, topics, days, tasks).
ModelConfig with_schema(ModelConfig model, const GenConfig& gen);

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace ocarm

#endif  // OCARM_CONFIG_HPP_
