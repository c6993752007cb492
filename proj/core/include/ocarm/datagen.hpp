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

#ifndef OCARM_DATAGEN_HPP_
#define OCARM_DATAGEN_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ocarm/rng.hpp"

namespace ocarm {

// Synthetic world generator. The planted mechanism: onboarding content
// drives next-day activity through its affinity with the user's latent topic
// preference, the preference is partly visible through the bid-time profile
// and behavior sequences, and a per-calendar-day trend shared by all users
// injects content the profile cannot predict.

struct GenConfig {
  int vocab_size = 64;    // V
  int num_topics = 8;     // T
  int days = 7;           // D, onboarding days kept in the record
  int per_day_cap = 16;   // N
  int hist_len = 64;      // L_h
  int ad_len = 16;        // L_a
  std::vector<int> horizons = {1, 7};

  double alpha = 0.6;  // preference vs. trend weight in onboarding draws
  double profile_noise = 0.3;
  double kappa0 = -5.0;
  double kappa1 = 12.0;
  double kappa2 = 2.0;

  int events_min = 3;
  int events_max = 5;
  int n_users = 10000;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;

  double preference_concentration = 0.4;  // symmetric Dirichlet over topics
  double stickiness_a = 2.0;              // Beta(a, b) for p_stick
  double stickiness_b = 2.0;
  double hist_purity = 0.6;  // share of history items drawn from the preference
  double ad_purity = 0.3;    // share of ad items drawn from the preference
  double daily_items_mean = 8.0;
  int calendar_days = 120;
  double trend_concentration = 0.3;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
  int max_horizon() const;
};

std::string task_name(int horizon);  // 1 -> "LT1"

struct Catalog {
  int num_topics = 0;
  std::vector<int> item_topic;                     // item-id -> topic-id
  std::vector<std::vector<double>> topic_vectors;  // one-hot, T x T
  std::vector<double> item_popularity;             // unnormalized weights
  std::vector<std::vector<int>> topic_items;       // topic-id -> item-ids

  int vocab_size() const { return static_cast<int>(item_topic.size()); }
};

// Topics are a seeded permutation of round-robin labels, so every topic owns
// floor(V/T) or ceil(V/T) items.
Catalog build_catalog(const GenConfig& config, std::uint64_t seed);

// Catalog plus the exogenous per-calendar-day topic trend.
struct World {
  Catalog catalog;
  std::vector<std::vector<double>> trend;  // calendar day -> topic distribution
};

World build_world(const GenConfig& config);

// White-box state the generator used for a record. Never read by models.
struct Latent {
  std::vector<double> preference;  // z
  double stickiness = 0.0;         // p_stick
  int calendar_start = 0;

  bool operator==(const Latent&) const = default;
};

struct UserJourneyRecord {
  std::int64_t user_id = 0;
  std::vector<int> profile_cat;       // dominant topic, entropy bucket, activity bucket
  std::vector<double> profile_dense;  // z + noise, length T
  std::vector<int> hist_seq;
  std::vector<int> ad_seq;
  std::vector<std::vector<int>> onboarding;  // D day-records
  std::map<std::string, double> labels;
  std::map<std::string, int> label_counts;
  std::optional<Latent> latent;

  bool operator==(const UserJourneyRecord&) const = default;
};

inline constexpr int kEntropyBuckets = 2;
inline constexpr int kActivityBuckets = 4;

// Cardinality of each profile_cat slot for a given topic count.
std::vector<int> profile_cat_cardinalities(int num_topics);

// Affinity of a day's items with a preference vector: mean z[topic(v)].
double content_match(const Catalog& catalog, const std::vector<double>& preference,
                     const std::vector<int>& items);

// All conversion events of one user. Deterministic in (config.seed, user_id).
std::vector<UserJourneyRecord> sample_user_journey(const World& world, const GenConfig& config,
                                                   std::int64_t user_id);

enum class Split { kTrain, kTest };

struct Dataset {
  std::vector<UserJourneyRecord> records;
  Split split = Split::kTrain;
  std::uint64_t gen_config_hash = 0;

  bool operator==(const Dataset&) const = default;
};

std::string split_name(Split split);

std::pair<Dataset, Dataset> generate_dataset(const GenConfig& config);

// Monte-Carlo estimate of E[label_t | z, p_stick, onboarding days 1..d] for
// every task, replaying the activity recurrence from the last observed active
// day. Requires record.latent. Different `replicate` values draw independent
// estimates.
std::map<std::string, double> oracle_score(const UserJourneyRecord& record, const World& world,
                                           const GenConfig& config, int n_mc,
                                           std::uint64_t replicate = 0);

}  // namespace ocarm

#endif  // OCARM_DATAGEN_HPP_
