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

#include "ocarm/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ocarm/errors.hpp"
#include "ocarm/params.hpp"

namespace ocarm {
namespace {

using nlohmann::json;

// Pulls typed values out of a JSON object and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& object, std::string prefix) : object_(object), prefix_(std::move(prefix)) {
    if (!object_.is_object()) throw ConfigError(prefix_, "expected a JSON object");
  }

  template <typename V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end()) return;
    try {
      out = it->template get<V>();
    } catch (const json::exception& e) {
      throw ConfigError(qualified(key), std::string("wrong type: ") + e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = object_.begin(); it != object_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(qualified(it.key()), "unknown key");
    }
  }

  std::string qualified(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

 private:
  const json& object_;
  std::string prefix_;
  std::set<std::string> seen_;
};

json parse_text(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed config: ") + e.what());
  }
}

json gen_to_json(const GenConfig& c) {
  return json{{"vocab_size", c.vocab_size},
              {"num_topics", c.num_topics},
              {"days", c.days},
              {"per_day_cap", c.per_day_cap},
              {"hist_len", c.hist_len},
              {"ad_len", c.ad_len},
              {"horizons", c.horizons},
              {"alpha", c.alpha},
              {"profile_noise", c.profile_noise},
              {"kappa0", c.kappa0},
              {"kappa1", c.kappa1},
              {"kappa2", c.kappa2},
              {"events_per_user", std::vector<int>{c.events_min, c.events_max}},
              {"n_users", c.n_users},
              {"test_fraction", c.test_fraction},
              {"seed", c.seed},
              {"preference_concentration", c.preference_concentration},
              {"stickiness_a", c.stickiness_a},
              {"stickiness_b", c.stickiness_b},
              {"hist_purity", c.hist_purity},
              {"ad_purity", c.ad_purity},
              {"daily_items_mean", c.daily_items_mean},
              {"calendar_days", c.calendar_days},
              {"trend_concentration", c.trend_concentration}};
}

GenConfig gen_from_json(const json& j, const std::string& prefix) {
  GenConfig c;
  Reader r(j, prefix);
  r.get("vocab_size", c.vocab_size);
  r.get("num_topics", c.num_topics);
  r.get("days", c.days);
  r.get("per_day_cap", c.per_day_cap);
  r.get("hist_len", c.hist_len);
  r.get("ad_len", c.ad_len);
  r.get("horizons", c.horizons);
  r.get("alpha", c.alpha);
  r.get("profile_noise", c.profile_noise);
  r.get("kappa0", c.kappa0);
  r.get("kappa1", c.kappa1);
  r.get("kappa2", c.kappa2);
  std::vector<int> events = {c.events_min, c.events_max};
  r.get("events_per_user", events);
  if (events.size() != 2) throw ConfigError(r.qualified("events_per_user"), "expected [min, max]");
  c.events_min = events[0];
  c.events_max = events[1];
  r.get("n_users", c.n_users);
  r.get("test_fraction", c.test_fraction);
  r.get("seed", c.seed);
  r.get("preference_concentration", c.preference_concentration);
  r.get("stickiness_a", c.stickiness_a);
  r.get("stickiness_b", c.stickiness_b);
  r.get("hist_purity", c.hist_purity);
  r.get("ad_purity", c.ad_purity);
  r.get("daily_items_mean", c.daily_items_mean);
  r.get("calendar_days", c.calendar_days);
  r.get("trend_concentration", c.trend_concentration);
  r.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(r.qualified(e.field()), std::string(e.what()).substr(e.field().size() + 2));
  }
  return c;
}

const char* content_encoder_name(ContentEncoder e) { return e == ContentEncoder::kHae ? "HAE" : "MLP"; }
const char* user_encoder_name(UserEncoder e) { return e == UserEncoder::kSfe ? "SFE" : "MLP"; }
const char* align_loss_name(AlignLoss a) { return a == AlignLoss::kCosine ? "cosine" : "l2"; }

json model_to_json(const ModelConfig& c) {
  json tasks = json::array();
  for (const auto& t : c.tasks) tasks.push_back(json{{"name", t.name}, {"horizon", t.horizon}});
  return json{{"vocab_size", c.vocab_size},
              {"num_topics", c.num_topics},
              {"days", c.days},
              {"per_day_cap", c.per_day_cap},
              {"hist_cap", c.hist_cap},
              {"ad_cap", c.ad_cap},
              {"tasks", tasks},
              {"d_emb", c.d_emb},
              {"n_heads", c.n_heads},
              {"d_repr", c.d_repr},
              {"num_queries", c.num_queries},
              {"proj_hidden", c.proj_hidden},
              {"tower_hidden", c.tower_hidden},
              {"backbone_hidden", c.backbone_hidden},
              {"content_encoder", content_encoder_name(c.content_encoder)},
              {"user_encoder", user_encoder_name(c.user_encoder)},
              {"lambda", c.lambda},
              {"align_loss", align_loss_name(c.align_loss)},
              {"teacher_pretrained", c.teacher_pretrained},
              {"stop_gradient", c.stop_gradient},
              {"zero_aux", c.zero_aux}};
}

ModelConfig model_from_json(const json& j, const std::string& prefix) {
  ModelConfig c;
  Reader r(j, prefix);
  r.get("vocab_size", c.vocab_size);
  r.get("num_topics", c.num_topics);
  r.get("days", c.days);
  r.get("per_day_cap", c.per_day_cap);
  r.get("hist_cap", c.hist_cap);
  r.get("ad_cap", c.ad_cap);
  if (const json* tasks = r.sub("tasks")) {
    if (!tasks->is_array()) throw ConfigError(r.qualified("tasks"), "expected an array");
    c.tasks.clear();
    for (const auto& t : *tasks) {
      TaskSpec spec;
      Reader tr(t, r.qualified("tasks[]"));
      tr.get("name", spec.name);
      tr.get("horizon", spec.horizon);
      tr.finish();
      c.tasks.push_back(spec);
    }
  }
  r.get("d_emb", c.d_emb);
  r.get("n_heads", c.n_heads);
  r.get("d_repr", c.d_repr);
  r.get("num_queries", c.num_queries);
  r.get("proj_hidden", c.proj_hidden);
  r.get("tower_hidden", c.tower_hidden);
  r.get("backbone_hidden", c.backbone_hidden);
  std::string content = content_encoder_name(c.content_encoder);
  std::string user = user_encoder_name(c.user_encoder);
  std::string align = align_loss_name(c.align_loss);
  r.get("content_encoder", content);
  r.get("user_encoder", user);
  r.get("align_loss", align);
  if (content == "HAE") {
    c.content_encoder = ContentEncoder::kHae;
  } else if (content == "MLP") {
    c.content_encoder = ContentEncoder::kMlp;
  } else {
    throw ConfigError(r.qualified("content_encoder"), "must be HAE or MLP");
  }
  if (user == "SFE") {
    c.user_encoder = UserEncoder::kSfe;
  } else if (user == "MLP") {
    c.user_encoder = UserEncoder::kMlp;
  } else {
    throw ConfigError(r.qualified("user_encoder"), "must be SFE or MLP");
  }
  if (align == "cosine") {
    c.align_loss = AlignLoss::kCosine;
  } else if (align == "l2") {
    c.align_loss = AlignLoss::kL2;
  } else {
    throw ConfigError(r.qualified("align_loss"), "must be cosine or l2");
  }
  r.get("lambda", c.lambda);
  r.get("teacher_pretrained", c.teacher_pretrained);
  r.get("stop_gradient", c.stop_gradient);
  r.get("zero_aux", c.zero_aux);
  r.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(r.qualified(e.field()), std::string(e.what()).substr(e.field().size() + 2));
  }
  return c;
}

json train_to_json(const TrainConfig& c) {
  return json{{"stage", c.stage},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"step_size", c.step_size},
              {"weight_decay", c.weight_decay},
              {"seed", c.seed},
              {"freeze_groups", c.freeze_groups},
              {"eval_every", c.eval_every},
              {"precision", c.precision == Precision::kFloat64 ? "float64" : "float32"},
              {"threads", c.threads}};
}

TrainConfig train_from_json(const json& j, const std::string& prefix) {
  TrainConfig c;
  Reader r(j, prefix);
  r.get("stage", c.stage);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("step_size", c.step_size);
  r.get("weight_decay", c.weight_decay);
  r.get("seed", c.seed);
  r.get("freeze_groups", c.freeze_groups);
  r.get("eval_every", c.eval_every);
  std::string precision = "float32";
  r.get("precision", precision);
  if (precision == "float32") {
    c.precision = Precision::kFloat32;
  } else if (precision == "float64") {
    c.precision = Precision::kFloat64;
  } else {
    throw ConfigError(r.qualified("precision"), "must be float32 or float64");
  }
  r.get("threads", c.threads);
  r.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(r.qualified(e.field()), std::string(e.what()).substr(e.field().size() + 2));
  }
  return c;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 1) throw ConfigError("vocab_size", "must be >= 1");
  if (num_topics < 2) throw ConfigError("num_topics", "must be >= 2");
  if (days < 1) throw ConfigError("days", "must be >= 1");
  if (per_day_cap < 1) throw ConfigError("per_day_cap", "must be >= 1");
  if (hist_cap < 0) throw ConfigError("hist_cap", "must be >= 0");
  if (ad_cap < 0) throw ConfigError("ad_cap", "must be >= 0");
  if (tasks.empty()) throw ConfigError("tasks", "at least one task is required");
  std::set<std::string> names;
  for (const auto& t : tasks) {
    if (t.name.empty()) throw ConfigError("tasks", "task name must be non-empty");
    if (!names.insert(t.name).second) throw ConfigError("tasks", "duplicate task " + t.name);
    if (t.horizon < 1 || t.horizon > days) {
      throw ConfigError("tasks", "horizon of " + t.name + " must be in [1, days=" + std::to_string(days) + "]");
    }
  }
  if (d_emb < 4 || d_emb % 4 != 0) throw ConfigError("d_emb", "must be a positive multiple of 4");
  if (n_heads < 1 || d_emb % n_heads != 0) throw ConfigError("n_heads", "must divide d_emb");
  if (d_repr < 1) throw ConfigError("d_repr", "must be >= 1");
  if (num_queries < 1) throw ConfigError("num_queries", "K must be >= 1");
  if (proj_hidden < 1) throw ConfigError("proj_hidden", "must be >= 1");
  if (tower_hidden < 1) throw ConfigError("tower_hidden", "must be >= 1");
  if (backbone_hidden.empty()) throw ConfigError("backbone_hidden", "at least one hidden layer");
  for (int h : backbone_hidden) {
    if (h < 1) throw ConfigError("backbone_hidden", "widths must be >= 1");
  }
  if (!(lambda >= 0.0)) throw ConfigError("lambda", "must be >= 0");
}

void TrainConfig::validate() const {
  if (stage != 1 && stage != 2) throw ConfigError("stage", "must be 1 or 2");
  if (epochs < 0) throw ConfigError("epochs", "must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (!(step_size > 0.0)) throw ConfigError("step_size", "must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be >= 0");
  if (eval_every < 0) throw ConfigError("eval_every", "must be >= 0");
  if (threads < 0) throw ConfigError("threads", "must be >= 0");
  for (const auto& g : freeze_groups) {
    if (!parse_group(g)) throw ConfigError("freeze_groups", "unknown group '" + g + "'");
  }
}

std::string to_json(const GenConfig& config) { return gen_to_json(config).dump(2); }
std::string to_json(const ModelConfig& config) { return model_to_json(config).dump(2); }
std::string to_json(const TrainConfig& config) { return train_to_json(config).dump(2); }

GenConfig parse_gen_config(std::string_view text) { return gen_from_json(parse_text(text), ""); }
ModelConfig parse_model_config(std::string_view text) { return model_from_json(parse_text(text), ""); }
TrainConfig parse_train_config(std::string_view text) { return train_from_json(parse_text(text), ""); }

GenConfig load_gen_config(const std::filesystem::path& path) { return parse_gen_config(read_file(path)); }
ModelConfig load_model_config(const std::filesystem::path& path) { return parse_model_config(read_file(path)); }
TrainConfig load_train_config(const std::filesystem::path& path) { return parse_train_config(read_file(path)); }

MatrixConfig parse_matrix_config(std::string_view text) {
  const json j = parse_text(text);
  Reader r(j, "");
  MatrixConfig m;
  if (const json* g = r.sub("gen")) m.gen = gen_from_json(*g, "gen");
  if (const json* mo = r.sub("model")) m.model = model_from_json(*mo, "model");
  if (const json* t = r.sub("train")) m.train = train_from_json(*t, "train");
  r.get("seeds", m.seeds);
  r.finish();
  if (m.seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  return m;
}

MatrixConfig load_matrix_config(const std::filesystem::path& path) { return parse_matrix_config(read_file(path)); }

std::string to_json(const MatrixConfig& config) {
  json j{{"gen", gen_to_json(config.gen)},
         {"model", model_to_json(config.model)},
         {"train", train_to_json(config.train)},
         {"seeds", config.seeds}};
  return j.dump(2);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const GenConfig& config) { return fnv1a64(gen_to_json(config).dump()); }
std::uint64_t config_hash(const ModelConfig& config) { return fnv1a64(model_to_json(config).dump()); }
std::uint64_t config_hash(const TrainConfig& config) { return fnv1a64(train_to_json(config).dump()); }

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

ModelConfig with_schema(ModelConfig model, const GenConfig& gen) {
  model.vocab_size = gen.vocab_size;
  model.num_topics = gen.num_topics;
  model.days = gen.days;
  model.per_day_cap = gen.per_day_cap;
  model.hist_cap = gen.hist_len;
  model.ad_cap = gen.ad_len;
  model.tasks.clear();
  for (int h : gen.horizons) model.tasks.push_back(TaskSpec{task_name(h), h});
  return model;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw InputError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace ocarm
