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

#ifndef OCARM_MODEL_CONFIG_HPP_
#define OCARM_MODEL_CONFIG_HPP_

#include <string>
#include <vector>

namespace ocarm {

struct TaskSpec {
  std::string name;  // "LT1"
  int horizon = 1;   // d

  bool operator==(const TaskSpec&) const = default;
};

enum class ContentEncoder { kHae, kMlp };
enum class UserEncoder { kSfe, kMlp };
enum class AlignLoss { kCosine, kL2 };

struct ModelConfig {
  // Data schema.
  int vocab_size = 64;
  int num_topics = 8;
  int days = 7;          // D
  int per_day_cap = 16;  // N, first N interactions of a day are kept
  int hist_cap = 64;
  int ad_cap = 16;
  std::vector<TaskSpec> tasks = {{"LT1", 1}, {"LT7", 7}};

  // Architecture.
  int d_emb = 32;
  int n_heads = 2;
  int d_repr = 16;
  int num_queries = 4;  // K
  int proj_hidden = 32;
  int tower_hidden = 64;
  std::vector<int> backbone_hidden = {64, 32};
  ContentEncoder content_encoder = ContentEncoder::kHae;
  UserEncoder user_encoder = UserEncoder::kSfe;

  // Objective.
  double lambda = 1.0;
  AlignLoss align_loss = AlignLoss::kCosine;
  bool teacher_pretrained = true;
  bool stop_gradient = true;
  // Base configuration: the backbone sees a zero auxiliary vector.
  bool zero_aux = false;

  // Throws ConfigError naming the field.
  void validate() const;
  int profile_cat_width() const { return d_emb / 4; }
  int profile_dense_width() const { return d_emb - 3 * profile_cat_width(); }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace ocarm

#endif  // OCARM_MODEL_CONFIG_HPP_
