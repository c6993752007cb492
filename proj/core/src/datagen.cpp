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

#include "ocarm/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ocarm/config.hpp"
#include "ocarm/errors.hpp"

namespace ocarm {
namespace {

constexpr std::uint64_t kCatalogDomain = 1;
constexpr std::uint64_t kTrendDomain = 2;
constexpr std::uint64_t kUserDomain = 3;
constexpr std::uint64_t kSplitDomain = 4;
constexpr std::uint64_t kOracleDomain = 5;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

int bucketize(double value, int buckets) {
  return std::clamp(static_cast<int>(value * buckets), 0, buckets - 1);
}

int draw_item(Rng& rng, const World& world, const std::vector<double>& preference, double alpha,
              int calendar_day) {
  const auto& trend = world.trend[static_cast<std::size_t>(calendar_day) % world.trend.size()];
  std::vector<double> mix(preference.size());
  for (std::size_t k = 0; k < mix.size(); ++k) {
    mix[k] = alpha * preference[k] + (1.0 - alpha) * trend[k];
  }
  const auto topic = sample_categorical(rng, mix);
  const auto& pool = world.catalog.topic_items[topic];
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  return pool[pick(rng)];
}

std::vector<int> draw_day(Rng& rng, const World& world, const GenConfig& config,
                          const std::vector<double>& preference, int calendar_day) {
  std::poisson_distribution<int> extra(std::max(config.daily_items_mean - 1.0, 0.0));
  const int n = std::min(1 + extra(rng), config.per_day_cap);
  std::vector<int> items(static_cast<std::size_t>(n));
  for (auto& item : items) item = draw_item(rng, world, preference, config.alpha, calendar_day);
  return items;
}

double activity_probability(const GenConfig& config, double match, double stickiness) {
  return sigmoid(config.kappa0 + config.kappa1 * match + config.kappa2 * stickiness);
}

double normalized_entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h / std::log(static_cast<double>(p.size()));
}

}  // namespace

void GenConfig::validate() const {
  if (num_topics < 2) throw ConfigError("num_topics", "must be >= 2");
  if (vocab_size < num_topics) throw ConfigError("vocab_size", "must be >= num_topics");
  if (days < 1) throw ConfigError("days", "must be >= 1");
  if (per_day_cap < 1) throw ConfigError("per_day_cap", "must be >= 1");
  if (hist_len < 0) throw ConfigError("hist_len", "must be >= 0");
  if (ad_len < 0) throw ConfigError("ad_len", "must be >= 0");
  if (horizons.empty()) throw ConfigError("horizons", "must list at least one horizon");
  for (int h : horizons) {
    if (h < 1) throw ConfigError("horizons", "horizons must be >= 1");
    if (h > days) {
      throw ConfigError("horizons", "horizon " + std::to_string(h) + " exceeds days=" +
                                        std::to_string(days));
    }
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha", "must be in [0, 1]");
  if (!(profile_noise >= 0.0)) throw ConfigError("profile_noise", "must be >= 0");
  if (!std::isfinite(kappa0)) throw ConfigError("kappa0", "must be finite");
  if (!std::isfinite(kappa1) || kappa1 < 0.0) throw ConfigError("kappa1", "must be >= 0");
  if (!std::isfinite(kappa2)) throw ConfigError("kappa2", "must be finite");
  if (events_min < 1 || events_max < events_min) {
    throw ConfigError("events_per_user", "need 1 <= events_min <= events_max");
  }
  if (n_users < 1) throw ConfigError("n_users", "must be >= 1");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction", "must be in [0, 1)");
  }
  if (!(preference_concentration > 0.0)) {
    throw ConfigError("preference_concentration", "must be > 0");
  }
  if (!(stickiness_a > 0.0 && stickiness_b > 0.0)) {
    throw ConfigError("stickiness", "Beta parameters must be > 0");
  }
  if (!(hist_purity >= 0.0 && hist_purity <= 1.0)) throw ConfigError("hist_purity", "must be in [0, 1]");
  if (!(ad_purity >= 0.0 && ad_purity <= 1.0)) throw ConfigError("ad_purity", "must be in [0, 1]");
  if (!(daily_items_mean >= 1.0)) throw ConfigError("daily_items_mean", "must be >= 1");
  if (calendar_days < 1) throw ConfigError("calendar_days", "must be >= 1");
  if (!(trend_concentration > 0.0)) throw ConfigError("trend_concentration", "must be > 0");
}

int GenConfig::max_horizon() const { return *std::max_element(horizons.begin(), horizons.end()); }

std::string task_name(int horizon) { return "LT" + std::to_string(horizon); }

std::string split_name(Split split) { return split == Split::kTrain ? "train" : "test"; }

std::vector<int> profile_cat_cardinalities(int num_topics) {
  return {num_topics, kEntropyBuckets, kActivityBuckets};
}

Catalog build_catalog(const GenConfig& config, std::uint64_t seed) {
  if (config.num_topics < 2) throw ConfigError("num_topics", "must be >= 2");
  if (config.vocab_size < config.num_topics) throw ConfigError("vocab_size", "must be >= num_topics");

  Rng rng = make_stream(seed, 0, kCatalogDomain);
  Catalog catalog;
  catalog.num_topics = config.num_topics;
  catalog.item_topic.resize(static_cast<std::size_t>(config.vocab_size));
  for (int i = 0; i < config.vocab_size; ++i) catalog.item_topic[i] = i % config.num_topics;
  std::shuffle(catalog.item_topic.begin(), catalog.item_topic.end(), rng);

  catalog.topic_vectors.assign(config.num_topics, std::vector<double>(config.num_topics, 0.0));
  for (int k = 0; k < config.num_topics; ++k) catalog.topic_vectors[k][k] = 1.0;

  catalog.topic_items.assign(config.num_topics, {});
  for (int i = 0; i < config.vocab_size; ++i) catalog.topic_items[catalog.item_topic[i]].push_back(i);

  // Zipf-like popularity over a seeded item order.
  std::vector<int> order(static_cast<std::size_t>(config.vocab_size));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  catalog.item_popularity.assign(order.size(), 0.0);
  for (std::size_t r = 0; r < order.size(); ++r) {
    catalog.item_popularity[order[r]] = 1.0 / std::pow(static_cast<double>(r + 1), 0.8);
  }
  return catalog;
}

World build_world(const GenConfig& config) {
  config.validate();
  World world;
  world.catalog = build_catalog(config, config.seed);
  Rng rng = make_stream(config.seed, 0, kTrendDomain);
  const int span = config.calendar_days + 2 * config.max_horizon();
  world.trend.reserve(static_cast<std::size_t>(span));
  for (int c = 0; c < span; ++c) {
    world.trend.push_back(sample_dirichlet(rng, config.num_topics, config.trend_concentration));
  }
  return world;
}

double content_match(const Catalog& catalog, const std::vector<double>& preference,
                     const std::vector<int>& items) {
  if (items.empty()) return 0.0;
  double total = 0.0;
  for (int item : items) total += preference[catalog.item_topic[item]];
  return total / static_cast<double>(items.size());
}

std::vector<UserJourneyRecord> sample_user_journey(const World& world, const GenConfig& config,
                                                   std::int64_t user_id) {
  Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(user_id), kUserDomain);
  const Catalog& catalog = world.catalog;
  const int topics = catalog.num_topics;

  const auto preference = sample_dirichlet(rng, topics, config.preference_concentration);
  const double stickiness = sample_beta(rng, config.stickiness_a, config.stickiness_b);

  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> profile_dense(preference.size());
  for (std::size_t k = 0; k < preference.size(); ++k) {
    profile_dense[k] = preference[k] + config.profile_noise * noise(rng);
  }
  const int dominant = static_cast<int>(
      std::max_element(preference.begin(), preference.end()) - preference.begin());
  const std::vector<int> profile_cat = {dominant,
                                        bucketize(normalized_entropy(preference), kEntropyBuckets),
                                        bucketize(stickiness, kActivityBuckets)};

  std::uniform_int_distribution<int> events_dist(config.events_min, config.events_max);
  std::uniform_int_distribution<int> calendar_dist(0, config.calendar_days - 1);
  std::uniform_int_distribution<int> hist_len_dist(config.hist_len / 2, config.hist_len);
  std::uniform_int_distribution<int> ad_len_dist(0, config.ad_len);
  std::uniform_int_distribution<int> any_item(0, catalog.vocab_size() - 1);
  std::bernoulli_distribution hist_pure(config.hist_purity);
  std::bernoulli_distribution ad_pure(config.ad_purity);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int horizon_max = config.max_horizon();
  const int simulated_days = std::max(2 * horizon_max, config.days);
  const int events = events_dist(rng);

  std::vector<UserJourneyRecord> out;
  out.reserve(static_cast<std::size_t>(events));
  for (int e = 0; e < events; ++e) {
    UserJourneyRecord rec;
    rec.user_id = user_id;
    rec.profile_cat = profile_cat;
    rec.profile_dense = profile_dense;
    const int calendar_start = calendar_dist(rng);

    const int hist_n = hist_len_dist(rng);
    rec.hist_seq.reserve(static_cast<std::size_t>(hist_n));
    for (int j = 0; j < hist_n; ++j) {
      if (hist_pure(rng)) {
        const auto& pool = catalog.topic_items[sample_categorical(rng, preference)];
        rec.hist_seq.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
      } else {
        rec.hist_seq.push_back(any_item(rng));
      }
    }
    const int ad_n = ad_len_dist(rng);
    rec.ad_seq.reserve(static_cast<std::size_t>(ad_n));
    for (int j = 0; j < ad_n; ++j) {
      if (ad_pure(rng)) {
        const auto& pool = catalog.topic_items[sample_categorical(rng, preference)];
        rec.ad_seq.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
      } else {
        rec.ad_seq.push_back(static_cast<int>(sample_categorical(rng, catalog.item_popularity)));
      }
    }

    // Day 1 is the conversion day and always active.
    std::vector<bool> active(static_cast<std::size_t>(simulated_days) + 1, false);
    rec.onboarding.assign(static_cast<std::size_t>(config.days), {});
    auto day_items = draw_day(rng, world, config, preference, calendar_start);
    active[1] = true;
    double last_match = content_match(catalog, preference, day_items);
    rec.onboarding[0] = std::move(day_items);
    for (int t = 2; t <= simulated_days; ++t) {
      const double p = activity_probability(config, last_match, stickiness);
      if (unit(rng) < p) {
        active[t] = true;
        auto items = draw_day(rng, world, config, preference, calendar_start + t - 1);
        last_match = content_match(catalog, preference, items);
        if (t <= config.days) rec.onboarding[t - 1] = std::move(items);
      }
    }

    for (int d : config.horizons) {
      int count = 0;
      for (int t = d + 1; t <= 2 * d; ++t) count += active[t] ? 1 : 0;
      const auto name = task_name(d);
      rec.label_counts[name] = count;
      rec.labels[name] = static_cast<double>(count) / static_cast<double>(d);
    }
    rec.latent = Latent{preference, stickiness, calendar_start};
    out.push_back(std::move(rec));
  }
  return out;
}

std::pair<Dataset, Dataset> generate_dataset(const GenConfig& config) {
  config.validate();
  const int n_test = static_cast<int>(std::lround(config.n_users * config.test_fraction));
  const int n_train = config.n_users - n_test;
  if (n_train < 1 || (config.test_fraction > 0.0 && n_test < 1)) {
    throw ConfigError("n_users", "too small for test_fraction=" + std::to_string(config.test_fraction));
  }
  const World world = build_world(config);

  std::vector<std::int64_t> users(static_cast<std::size_t>(config.n_users));
  std::iota(users.begin(), users.end(), 0);
  Rng split_rng = make_stream(config.seed, 0, kSplitDomain);
  std::shuffle(users.begin(), users.end(), split_rng);
  std::sort(users.begin(), users.begin() + n_test);
  std::sort(users.begin() + n_test, users.end());

  const std::uint64_t hash = config_hash(config);
  Dataset train{{}, Split::kTrain, hash};
  Dataset test{{}, Split::kTest, hash};
  for (std::size_t i = 0; i < users.size(); ++i) {
    auto records = sample_user_journey(world, config, users[i]);
    auto& target = static_cast<int>(i) < n_test ? test.records : train.records;
    for (auto& r : records) target.push_back(std::move(r));
  }
  return {std::move(train), std::move(test)};
}

std::map<std::string, double> oracle_score(const UserJourneyRecord& record, const World& world,
                                           const GenConfig& config, int n_mc,
                                           std::uint64_t replicate) {
  if (n_mc < 1) throw ConfigError("n_mc", "must be >= 1");
  if (!record.latent) throw InputError("oracle_score requires the record's latent state");
  const Latent& latent = *record.latent;
  const Catalog& catalog = world.catalog;

  Rng rng = make_stream(config.seed,
                        splitmix64(static_cast<std::uint64_t>(record.user_id)) ^
                            static_cast<std::uint64_t>(latent.calendar_start) ^
                            (replicate << 40),
                        kOracleDomain);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::map<std::string, double> out;
  for (int d : config.horizons) {
    // State after observing days 1..d: match of the last active day.
    double observed_match = 0.0;
    for (int t = std::min(d, static_cast<int>(record.onboarding.size())); t >= 1; --t) {
      if (!record.onboarding[t - 1].empty()) {
        observed_match = content_match(catalog, latent.preference, record.onboarding[t - 1]);
        break;
      }
    }
    double total = 0.0;
    for (int run = 0; run < n_mc; ++run) {
      // Accumulating the activity probability instead of the sampled indicator
      // keeps the same expectation with less variance.
      double match = observed_match;
      double count = 0.0;
      for (int t = d + 1; t <= 2 * d; ++t) {
        const double p = activity_probability(config, match, latent.stickiness);
        count += p;
        if (unit(rng) < p) {
          const auto items =
              draw_day(rng, world, config, latent.preference, latent.calendar_start + t - 1);
          match = content_match(catalog, latent.preference, items);
        }
      }
      total += count / static_cast<double>(d);
    }
    out[task_name(d)] = total / static_cast<double>(n_mc);
  }
  return out;
}

}  // namespace ocarm
