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

#include "ocarm/model.hpp"

#include <cmath>
#include <random>

#include "ocarm/errors.hpp"
#include "ocarm/rng.hpp"

namespace ocarm {
namespace {

constexpr std::uint64_t kInitDomain = 11;
constexpr double kLayerNormEps = 1e-5;
constexpr double kCosineEps = 1e-8;

const char* kSeqNames[2] = {"hist", "ad"};

}  // namespace

ObservableRecord observable(const UserJourneyRecord& record) {
  return ObservableRecord{record.user_id, record.profile_cat, record.profile_dense, record.hist_seq,
                          record.ad_seq};
}

int SequenceRows::valid_count() const {
  int n = 0;
  for (unsigned char m : mask) n += m ? 1 : 0;
  return n;
}

// ---------------------------------------------------------------------------
// Graph

template <typename T>
Graph<T>::Graph(const ParamStore<T>& params, GradientBuffer<T>* grads)
    : params_(params), grads_(grads), cache_(static_cast<std::size_t>(params.size())) {}

template <typename T>
Var Graph<T>::param(int id) {
  Var& slot = cache_[id];
  if (!slot.valid()) slot = tape_.param(params_.value(id), grads_ ? grads_->sink(id) : nullptr);
  return slot;
}

template <typename T>
Var Graph<T>::embedding(int table_id, std::span<const int> ids) {
  return tape_.embedding(params_.value(table_id), grads_ ? grads_->sink(table_id) : nullptr, ids);
}

// ---------------------------------------------------------------------------
// Layout and initialization

template <typename T>
int Model<T>::add(Group group, const std::string& name, int rows, int cols, Init init) {
  const int id = params_.add(group, name, Matrix<T>::Zero(rows, cols));
  init_.push_back(init);
  if (init == Init::kOne) params_.value(id).setOnes();
  return id;
}

template <typename T>
typename Model<T>::AttentionIds Model<T>::add_attention(Group group, const std::string& prefix, int query_in,
                                                        int kv_in) {
  const int d = config_.d_emb;
  AttentionIds ids{};
  ids.wq = add(group, prefix + ".wq", query_in, d, Init::kXavier);
  ids.bq = add(group, prefix + ".bq", 1, d, Init::kZero);
  ids.wk = add(group, prefix + ".wk", kv_in, d, Init::kXavier);
  ids.bk = add(group, prefix + ".bk", 1, d, Init::kZero);
  ids.wv = add(group, prefix + ".wv", kv_in, d, Init::kXavier);
  ids.bv = add(group, prefix + ".bv", 1, d, Init::kZero);
  ids.wo = add(group, prefix + ".wo", d, d, Init::kXavier);
  ids.bo = add(group, prefix + ".bo", 1, d, Init::kZero);
  ids.ln_g = add(group, prefix + ".ln_gamma", 1, d, Init::kOne);
  ids.ln_b = add(group, prefix + ".ln_beta", 1, d, Init::kZero);
  return ids;
}

template <typename T>
typename Model<T>::MlpIds Model<T>::add_mlp(Group group, const std::string& prefix, int in, int hidden,
                                            int out) {
  MlpIds ids{};
  ids.w1 = add(group, prefix + ".w1", in, hidden, Init::kXavier);
  ids.b1 = add(group, prefix + ".b1", 1, hidden, Init::kZero);
  ids.w2 = add(group, prefix + ".w2", hidden, out, Init::kXavier);
  ids.b2 = add(group, prefix + ".b2", 1, out, Init::kZero);
  return ids;
}

template <typename T>
Model<T>::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const int d = config_.d_emb;
  const int tasks = num_tasks();

  item_table_ = add(Group::kEmbeddings, "item_embedding", config_.vocab_size, d, Init::kEmbedding);
  const auto cards = profile_cat_cardinalities(config_.num_topics);
  for (std::size_t k = 0; k < cards.size(); ++k) {
    cat_tables_.push_back(add(Group::kEmbeddings, "profile_cat" + std::to_string(k), cards[k],
                              config_.profile_cat_width(), Init::kEmbedding));
  }
  dense_w_ = add(Group::kEmbeddings, "profile_dense.w", config_.num_topics, config_.profile_dense_width(),
                 Init::kXavier);
  dense_b_ = add(Group::kEmbeddings, "profile_dense.b", 1, config_.profile_dense_width(), Init::kZero);

  if (config_.content_encoder == ContentEncoder::kHae) {
    day_placeholder_ = add(Group::kHae, "day_placeholder", 1, d, Init::kToken);
    day_attn_ = add_attention(Group::kHae, "day_attn", d, d);
    day_positions_ = add(Group::kHae, "day_positions", config_.days, d, Init::kToken);
    causal_attn_ = add_attention(Group::kHae, "causal_attn", d, d);
    for (int t = 0; t < tasks; ++t) {
      hae_proj_.push_back(add_mlp(Group::kHaeProj, "proj." + config_.tasks[t].name, d, config_.proj_hidden,
                                  config_.d_repr));
    }
  } else {
    for (int t = 0; t < tasks; ++t) {
      content_mlp_.push_back(add_mlp(Group::kHaeProj, "content_mlp." + config_.tasks[t].name, config_.days * d,
                                     config_.proj_hidden, config_.d_repr));
    }
  }

  if (config_.user_encoder == UserEncoder::kSfe) {
    for (int m = 0; m < 2; ++m) {
      SfeIds ids{};
      const std::string prefix = std::string("sfe.") + kSeqNames[m];
      ids.queries = add(Group::kSfe, prefix + ".queries", config_.num_queries, d, Init::kToken);
      ids.placeholder = add(Group::kSfe, prefix + ".placeholder", 1, 2 * d, Init::kToken);
      ids.attn = add_attention(Group::kSfe, prefix + ".attn", d, 2 * d);
      sfe_.push_back(ids);
    }
    const int tower_in = d + 2 * config_.num_queries * d;
    for (int t = 0; t < tasks; ++t) {
      towers_.push_back(add_mlp(Group::kTaskTowers, "tower." + config_.tasks[t].name, tower_in,
                                config_.tower_hidden, config_.d_repr));
    }
  } else {
    for (int t = 0; t < tasks; ++t) {
      towers_.push_back(add_mlp(Group::kTaskTowers, "user_mlp." + config_.tasks[t].name, 3 * d,
                                config_.tower_hidden, config_.d_repr));
    }
  }

  int in = d + config_.d_repr + 2 * d;
  for (std::size_t l = 0; l < config_.backbone_hidden.size(); ++l) {
    const int h = config_.backbone_hidden[l];
    const std::string prefix = "backbone.layer" + std::to_string(l);
    BackboneLayerIds ids{};
    ids.w = add(Group::kBackbone, prefix + ".w", in, h, Init::kXavier);
    ids.b = add(Group::kBackbone, prefix + ".b", 1, h, Init::kZero);
    ids.gate_w = add(Group::kBackbone, prefix + ".gate_w", d, h, Init::kXavier);
    ids.gate_b = add(Group::kBackbone, prefix + ".gate_b", 1, h, Init::kZero);
    backbone_.push_back(ids);
    in = h;
  }
  for (int t = 0; t < tasks; ++t) {
    const std::string prefix = "backbone.head." + config_.tasks[t].name;
    heads_.emplace_back(add(Group::kBackbone, prefix + ".w", in, 1, Init::kXavier),
                        add(Group::kBackbone, prefix + ".b", 1, 1, Init::kZero));
  }
}

template <typename T>
int Model<T>::task_index(const std::string& name) const {
  for (int t = 0; t < num_tasks(); ++t) {
    if (config_.tasks[t].name == name) return t;
  }
  throw ContractError("unknown task " + name);
}

template <typename T>
void Model<T>::initialize(std::uint64_t seed, GroupSet groups) {
  for (int id = 0; id < params_.size(); ++id) {
    if (!groups.contains(params_.group(id))) continue;
    auto& w = params_.value(id);
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(id), kInitDomain);
    switch (init_[id]) {
      case Init::kZero:
        w.setZero();
        break;
      case Init::kOne:
        w.setOnes();
        break;
      case Init::kXavier: {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(u(rng));
        break;
      }
      case Init::kEmbedding:
      case Init::kToken: {
        const double stddev = init_[id] == Init::kEmbedding ? 0.3 : 0.5;
        std::normal_distribution<double> n(0.0, stddev);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(n(rng));
        break;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Featurization

template <typename T>
Var Model<T>::profile_embedding(Graph<T>& g, const ObservableRecord& record) const {
  const auto cards = profile_cat_cardinalities(config_.num_topics);
  if (record.profile_cat.size() != cards.size()) {
    throw InputError("profile_cat: expected " + std::to_string(cards.size()) + " ids");
  }
  if (static_cast<int>(record.profile_dense.size()) != config_.num_topics) {
    throw InputError("profile_dense: expected " + std::to_string(config_.num_topics) + " values");
  }
  std::vector<Var> parts;
  for (std::size_t k = 0; k < cards.size(); ++k) {
    const int id = record.profile_cat[k];
    if (id < 0 || id >= cards[k]) throw InputError("profile_cat: id " + std::to_string(id) + " out of vocabulary");
    parts.push_back(g.embedding(cat_tables_[k], std::span<const int>(&id, 1)));
  }
  Matrix<T> dense(1, config_.num_topics);
  for (int k = 0; k < config_.num_topics; ++k) dense(0, k) = static_cast<T>(record.profile_dense[k]);
  auto& tape = g.tape();
  parts.push_back(tape.add_row(tape.matmul(tape.constant(std::move(dense)), g.param(dense_w_)), g.param(dense_b_)));
  return tape.concat_cols(parts);
}

template <typename T>
SequenceRows Model<T>::sequence_embedding(Graph<T>& g, std::span<const int> ids, int cap,
                                          const char* field) const {
  const auto kept = ids.first(std::min<std::size_t>(ids.size(), static_cast<std::size_t>(cap)));
  for (int id : kept) {
    if (id < 0 || id >= config_.vocab_size) {
      throw InputError(std::string(field) + ": item id " + std::to_string(id) + " out of vocabulary");
    }
  }
  SequenceRows out;
  out.mask.assign(kept.size(), 1);
  out.rows = kept.empty() ? g.tape().zeros(0, config_.d_emb) : g.embedding(item_table_, kept);
  return out;
}

template <typename T>
ObservableFeatures Model<T>::featurize(Graph<T>& g, const ObservableRecord& record) const {
  ObservableFeatures f;
  f.profile = profile_embedding(g, record);
  f.hist = sequence_embedding(g, record.hist_seq, config_.hist_cap, "hist_seq");
  f.ad = sequence_embedding(g, record.ad_seq, config_.ad_cap, "ad_seq");
  auto& tape = g.tape();
  f.pooled_hist = f.hist.mask.empty() ? tape.zeros(1, config_.d_emb) : tape.mean_rows(f.hist.rows);
  f.pooled_ad = f.ad.mask.empty() ? tape.zeros(1, config_.d_emb) : tape.mean_rows(f.ad.rows);
  return f;
}

template <typename T>
std::vector<SequenceRows> Model<T>::featurize_onboarding(Graph<T>& g,
                                                         const std::vector<std::vector<int>>& onboarding) const {
  if (static_cast<int>(onboarding.size()) != config_.days) {
    throw InputError("onboarding: expected " + std::to_string(config_.days) + " day-records, got " +
                     std::to_string(onboarding.size()));
  }
  std::vector<SequenceRows> days;
  days.reserve(onboarding.size());
  for (const auto& day : onboarding) {
    days.push_back(sequence_embedding(g, day, config_.per_day_cap, "onboarding"));
  }
  return days;
}

// ---------------------------------------------------------------------------
// Attention blocks

template <typename T>
Var Model<T>::attend(Graph<T>& g, Var queries, Var keys, const AttentionIds& ids, bool causal) const {
  auto& tape = g.tape();
  const Var q = tape.add_row(tape.matmul(queries, g.param(ids.wq)), g.param(ids.bq));
  const Var k = tape.add_row(tape.matmul(keys, g.param(ids.wk)), g.param(ids.bk));
  const Var v = tape.add_row(tape.matmul(keys, g.param(ids.wv)), g.param(ids.bv));
  const int heads = config_.n_heads;
  const int dh = config_.d_emb / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var qh = heads == 1 ? q : tape.slice_cols(q, h * dh, dh);
    const Var kh = heads == 1 ? k : tape.slice_cols(k, h * dh, dh);
    const Var vh = heads == 1 ? v : tape.slice_cols(v, h * dh, dh);
    const Var weights = tape.softmax_rows(tape.scale(tape.matmul_bt(qh, kh), inv_sqrt), causal);
    outs.push_back(tape.matmul(weights, vh));
  }
  const Var merged = heads == 1 ? outs[0] : tape.concat_cols(outs);
  return tape.add_row(tape.matmul(merged, g.param(ids.wo)), g.param(ids.bo));
}

template <typename T>
Var Model<T>::mlp(Graph<T>& g, Var x, const MlpIds& ids) const {
  auto& tape = g.tape();
  const Var h = tape.relu(tape.add_row(tape.matmul(x, g.param(ids.w1)), g.param(ids.b1)));
  return tape.add_row(tape.matmul(h, g.param(ids.w2)), g.param(ids.b2));
}

template <typename T>
Var Model<T>::compact(Graph<T>& g, Var rows, std::span<const unsigned char> mask, int placeholder) const {
  const auto& value = g.value(rows);
  if (static_cast<std::size_t>(value.rows()) != mask.size()) {
    throw ContractError("mask length " + std::to_string(mask.size()) + " does not match " +
                        std::to_string(value.rows()) + " rows");
  }
  std::vector<int> valid;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) valid.push_back(static_cast<int>(i));
  }
  if (valid.empty()) return g.param(placeholder);
  if (valid.size() == mask.size()) return rows;
  return g.tape().select_rows(rows, valid);
}

// ---------------------------------------------------------------------------
// Teacher

template <typename T>
Var Model<T>::hae_day_compress(Graph<T>& g, Var profile, Var day_items, std::span<const unsigned char> mask) const {
  if (config_.content_encoder != ContentEncoder::kHae) throw ContractError("model has no HAE");
  if (g.value(profile).rows() != 1 || g.value(profile).cols() != config_.d_emb) {
    throw ContractError("hae_day_compress: profile must be 1 x d_emb");
  }
  if (g.value(day_items).cols() != config_.d_emb) throw ContractError("hae_day_compress: item width != d_emb");
  auto& tape = g.tape();
  const Var keys = compact(g, day_items, mask, day_placeholder_);
  const Var attended = attend(g, profile, keys, day_attn_, false);
  return tape.layer_norm_rows(tape.add(profile, attended), g.param(day_attn_.ln_g), g.param(day_attn_.ln_b),
                              static_cast<T>(kLayerNormEps));
}

template <typename T>
Var Model<T>::hae_causal(Graph<T>& g, Var day_summaries) const {
  if (config_.content_encoder != ContentEncoder::kHae) throw ContractError("model has no HAE");
  const auto& s = g.value(day_summaries);
  if (s.rows() != config_.days || s.cols() != config_.d_emb) {
    throw ContractError("hae_causal: expected D x d_emb day summaries");
  }
  auto& tape = g.tape();
  const Var x = tape.add(day_summaries, g.param(day_positions_));
  const Var attended = attend(g, x, x, causal_attn_, true);
  return tape.layer_norm_rows(tape.add(x, attended), g.param(causal_attn_.ln_g), g.param(causal_attn_.ln_b),
                              static_cast<T>(kLayerNormEps));
}

template <typename T>
Var Model<T>::hae_project(Graph<T>& g, Var causal_summaries, int task) const {
  const int horizon = config_.tasks.at(static_cast<std::size_t>(task)).horizon;
  if (horizon > g.value(causal_summaries).rows()) {
    throw ConfigError("tasks", "horizon " + std::to_string(horizon) + " exceeds D");
  }
  const Var row = g.tape().slice_rows(causal_summaries, horizon - 1, 1);
  return mlp(g, row, hae_proj_.at(static_cast<std::size_t>(task)));
}

template <typename T>
Var Model<T>::content_mlp(Graph<T>& g, const std::vector<SequenceRows>& days, int task) const {
  if (config_.content_encoder != ContentEncoder::kMlp) throw ContractError("model has no content MLP");
  const int horizon = config_.tasks.at(static_cast<std::size_t>(task)).horizon;
  auto& tape = g.tape();
  std::vector<Var> means;
  means.reserve(days.size());
  for (int d = 0; d < static_cast<int>(days.size()); ++d) {
    const auto& day = days[d];
    if (d >= horizon || day.valid_count() == 0) {
      means.push_back(tape.zeros(1, config_.d_emb));
      continue;
    }
    std::vector<int> valid;
    for (std::size_t i = 0; i < day.mask.size(); ++i) {
      if (day.mask[i]) valid.push_back(static_cast<int>(i));
    }
    const Var rows = valid.size() == day.mask.size() ? day.rows : tape.select_rows(day.rows, valid);
    means.push_back(tape.mean_rows(rows));
  }
  return mlp(g, tape.concat_cols(means), content_mlp_.at(static_cast<std::size_t>(task)));
}

template <typename T>
std::vector<Var> Model<T>::teacher(Graph<T>& g, Var profile, const std::vector<SequenceRows>& days) const {
  std::vector<Var> out;
  out.reserve(static_cast<std::size_t>(num_tasks()));
  if (config_.content_encoder == ContentEncoder::kMlp) {
    for (int t = 0; t < num_tasks(); ++t) out.push_back(content_mlp(g, days, t));
    return out;
  }
  std::vector<Var> summaries;
  summaries.reserve(days.size());
  for (const auto& day : days) summaries.push_back(hae_day_compress(g, profile, day.rows, day.mask));
  const Var causal = hae_causal(g, g.tape().concat_rows(summaries));
  for (int t = 0; t < num_tasks(); ++t) out.push_back(hae_project(g, causal, t));
  return out;
}

// ---------------------------------------------------------------------------
// Student

template <typename T>
Var Model<T>::sfe_condition(Graph<T>& g, Var seq_rows, Var profile) const {
  auto& tape = g.tape();
  const int n = static_cast<int>(g.value(seq_rows).rows());
  const Var parts[2] = {seq_rows, tape.repeat_rows(profile, n)};
  return tape.concat_cols(parts);
}

template <typename T>
Var Model<T>::sfe_compress(Graph<T>& g, Var conditioned, std::span<const unsigned char> mask, int seq_type) const {
  if (config_.user_encoder != UserEncoder::kSfe) throw ContractError("model has no SFE");
  if (g.value(conditioned).cols() != 2 * config_.d_emb) {
    throw ContractError("sfe_compress: conditioned rows must be 2*d_emb wide");
  }
  const SfeIds& ids = sfe_.at(static_cast<std::size_t>(seq_type));
  auto& tape = g.tape();
  const Var keys = compact(g, conditioned, mask, ids.placeholder);
  const Var queries = g.param(ids.queries);
  const Var attended = attend(g, queries, keys, ids.attn, false);
  return tape.layer_norm_rows(tape.add(queries, attended), g.param(ids.attn.ln_g), g.param(ids.attn.ln_b),
                              static_cast<T>(kLayerNormEps));
}

template <typename T>
Var Model<T>::sfe_task_tower(Graph<T>& g, Var profile, std::span<const Var> compressed, int task) const {
  if (compressed.size() != 2) throw ContractError("sfe_task_tower: expected hist and ad representations");
  auto& tape = g.tape();
  const Var parts[3] = {profile, tape.flatten(compressed[0]), tape.flatten(compressed[1])};
  return mlp(g, tape.concat_cols(parts), towers_.at(static_cast<std::size_t>(task)));
}

template <typename T>
Var Model<T>::user_mlp(Graph<T>& g, const ObservableFeatures& f, int task) const {
  if (config_.user_encoder != UserEncoder::kMlp) throw ContractError("model has no user MLP");
  const Var parts[3] = {f.profile, f.pooled_hist, f.pooled_ad};
  return mlp(g, g.tape().concat_cols(parts), towers_.at(static_cast<std::size_t>(task)));
}

template <typename T>
std::vector<Var> Model<T>::student(Graph<T>& g, const ObservableFeatures& f) const {
  std::vector<Var> out;
  out.reserve(static_cast<std::size_t>(num_tasks()));
  if (config_.user_encoder == UserEncoder::kMlp) {
    for (int t = 0; t < num_tasks(); ++t) out.push_back(user_mlp(g, f, t));
    return out;
  }
  const Var compressed[2] = {
      sfe_compress(g, sfe_condition(g, f.hist.rows, f.profile), f.hist.mask, 0),
      sfe_compress(g, sfe_condition(g, f.ad.rows, f.profile), f.ad.mask, 1),
  };
  for (int t = 0; t < num_tasks(); ++t) out.push_back(sfe_task_tower(g, f.profile, compressed, t));
  return out;
}

// ---------------------------------------------------------------------------
// Backbone

template <typename T>
Var Model<T>::zero_aux(Graph<T>& g) const {
  return g.tape().zeros(1, config_.d_repr);
}

template <typename T>
Var Model<T>::backbone_logit(Graph<T>& g, const ObservableFeatures& f, Var aux, int task) const {
  if (g.value(aux).rows() != 1 || g.value(aux).cols() != config_.d_repr) {
    throw ContractError("backbone: aux must be 1 x d_repr");
  }
  auto& tape = g.tape();
  const Var parts[4] = {f.profile, aux, f.pooled_hist, f.pooled_ad};
  Var h = tape.concat_cols(parts);
  for (const auto& layer : backbone_) {
    const Var act = tape.relu(tape.add_row(tape.matmul(h, g.param(layer.w)), g.param(layer.b)));
    const Var gate =
        tape.scale(tape.sigmoid(tape.add_row(tape.matmul(f.profile, g.param(layer.gate_w)), g.param(layer.gate_b))),
                   T(2));
    h = tape.mul(act, gate);
  }
  const auto& head = heads_.at(static_cast<std::size_t>(task));
  const Var logit = tape.add_row(tape.matmul(h, g.param(head.first)), g.param(head.second));
  if (!std::isfinite(static_cast<double>(g.value(logit)(0, 0)))) {
    throw NumericError("backbone produced a non-finite logit for task " + config_.tasks[task].name);
  }
  return logit;
}

// ---------------------------------------------------------------------------
// Objectives

template <typename T>
Matrix<T> Model<T>::label_row(const UserJourneyRecord& record, int task) const {
  const auto& name = config_.tasks[task].name;
  auto it = record.labels.find(name);
  if (it == record.labels.end()) throw InputError("labels: missing task " + name);
  if (!(it->second >= 0.0 && it->second <= 1.0)) {
    throw InputError("labels: " + name + " = " + std::to_string(it->second) + " outside [0, 1]");
  }
  return Matrix<T>::Constant(1, 1, static_cast<T>(it->second));
}

template <typename T>
Var Model<T>::record_loss_stage1(Graph<T>& g, const UserJourneyRecord& record) const {
  auto& tape = g.tape();
  const ObservableFeatures f = featurize(g, observable(record));
  std::vector<Var> aux;
  if (config_.zero_aux) {
    aux.assign(static_cast<std::size_t>(num_tasks()), zero_aux(g));
  } else {
    aux = teacher(g, f.profile, featurize_onboarding(g, record.onboarding));
  }
  std::vector<Var> terms;
  for (int t = 0; t < num_tasks(); ++t) {
    terms.push_back(tape.bce_with_logits(backbone_logit(g, f, aux[t], t), label_row(record, t)));
  }
  return tape.scale(tape.add_n(terms), T(1) / static_cast<T>(num_tasks()));
}

template <typename T>
Var Model<T>::loss_align(Graph<T>& g, std::span<const Var> student, std::span<const Var> teacher) const {
  if (student.size() != teacher.size() || student.empty()) {
    throw ContractError("loss_align: task count mismatch");
  }
  auto& tape = g.tape();
  std::vector<Var> terms;
  for (std::size_t t = 0; t < student.size(); ++t) {
    const auto& u = g.value(student[t]);
    const auto& c = g.value(teacher[t]);
    if (u.rows() != c.rows() || u.cols() != c.cols()) {
      throw ContractError("loss_align: e_u and e_c widths differ for task " + std::to_string(t));
    }
    const Var target = tape.stop_gradient(teacher[t]);
    terms.push_back(config_.align_loss == AlignLoss::kCosine
                        ? tape.cosine_distance(student[t], target, static_cast<T>(kCosineEps))
                        : tape.squared_distance(student[t], target));
  }
  return tape.add_n(terms);
}

template <typename T>
Var Model<T>::record_loss_stage2(Graph<T>& g, const UserJourneyRecord& record) const {
  auto& tape = g.tape();
  const ObservableFeatures f = featurize(g, observable(record));
  const std::vector<Var> e_u = student(g, f);
  std::vector<Var> terms;
  for (int t = 0; t < num_tasks(); ++t) {
    terms.push_back(tape.bce_with_logits(backbone_logit(g, f, e_u[t], t), label_row(record, t)));
  }
  Var loss = tape.scale(tape.add_n(terms), T(1) / static_cast<T>(num_tasks()));
  if (config_.lambda == 0.0) return loss;

  const std::vector<Var> e_c = teacher(g, f.profile, featurize_onboarding(g, record.onboarding));
  Var align;
  if (config_.stop_gradient) {
    align = loss_align(g, e_u, e_c);
  } else {
    // Joint ablation: the similarity gradient also reaches the content encoder.
    std::vector<Var> sims;
    for (int t = 0; t < num_tasks(); ++t) {
      sims.push_back(config_.align_loss == AlignLoss::kCosine
                         ? tape.cosine_distance(e_u[t], e_c[t], static_cast<T>(kCosineEps))
                         : tape.squared_distance(e_u[t], e_c[t]));
    }
    align = tape.add_n(sims);
  }
  const Var parts[2] = {loss, tape.scale(align, static_cast<T>(config_.lambda))};
  return tape.add_n(parts);
}

// ---------------------------------------------------------------------------
// Scoring

namespace {

double sigmoid_of(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

template <typename T>
std::vector<double> Model<T>::infer(const ObservableRecord& record) const {
  Graph<T> g(params_, nullptr);
  const ObservableFeatures f = featurize(g, record);
  std::vector<Var> aux;
  if (config_.zero_aux) {
    aux.assign(static_cast<std::size_t>(num_tasks()), zero_aux(g));
  } else {
    aux = student(g, f);
  }
  std::vector<double> out;
  for (int t = 0; t < num_tasks(); ++t) {
    out.push_back(sigmoid_of(static_cast<double>(g.value(backbone_logit(g, f, aux[t], t))(0, 0))));
  }
  return out;
}

template <typename T>
std::vector<double> Model<T>::score_with_content(const UserJourneyRecord& record) const {
  Graph<T> g(params_, nullptr);
  const ObservableFeatures f = featurize(g, observable(record));
  std::vector<Var> aux;
  if (config_.zero_aux) {
    aux.assign(static_cast<std::size_t>(num_tasks()), zero_aux(g));
  } else {
    aux = teacher(g, f.profile, featurize_onboarding(g, record.onboarding));
  }
  std::vector<double> out;
  for (int t = 0; t < num_tasks(); ++t) {
    out.push_back(sigmoid_of(static_cast<double>(g.value(backbone_logit(g, f, aux[t], t))(0, 0))));
  }
  return out;
}

template <typename T>
std::vector<double> Model<T>::alignment_similarity(const UserJourneyRecord& record) const {
  Graph<T> g(params_, nullptr);
  const ObservableFeatures f = featurize(g, observable(record));
  const auto e_u = student(g, f);
  const auto e_c = teacher(g, f.profile, featurize_onboarding(g, record.onboarding));
  std::vector<double> out;
  for (int t = 0; t < num_tasks(); ++t) {
    const auto u = g.value(e_u[t]).template cast<double>();
    const auto c = g.value(e_c[t]).template cast<double>();
    const double denom = std::max(u.norm(), kCosineEps) * std::max(c.norm(), kCosineEps);
    out.push_back(std::clamp(u.cwiseProduct(c).sum() / denom, -1.0, 1.0));
  }
  return out;
}

template <typename T>
ForwardTrace<T> Model<T>::trace(const ObservableRecord& record,
                                const std::vector<std::vector<int>>* onboarding) const {
  Graph<T> g(params_, nullptr);
  ForwardTrace<T> tr;
  const ObservableFeatures f = featurize(g, record);
  tr.profile = g.value(f.profile);
  if (onboarding != nullptr) {
    tr.has_onboarding = true;
    const auto days = featurize_onboarding(g, *onboarding);
    for (const auto& day : days) tr.day_items.push_back(g.value(day.rows));
    if (config_.content_encoder == ContentEncoder::kHae) {
      std::vector<Var> summaries;
      for (const auto& day : days) summaries.push_back(hae_day_compress(g, f.profile, day.rows, day.mask));
      const Var s = g.tape().concat_rows(summaries);
      const Var causal = hae_causal(g, s);
      tr.day_summaries = g.value(s);
      tr.causal_summaries = g.value(causal);
      for (int t = 0; t < num_tasks(); ++t) tr.teacher.push_back(g.value(hae_project(g, causal, t)));
    } else {
      for (int t = 0; t < num_tasks(); ++t) tr.teacher.push_back(g.value(content_mlp(g, days, t)));
    }
  }
  if (config_.user_encoder == UserEncoder::kSfe) {
    const Var hist = sfe_condition(g, f.hist.rows, f.profile);
    const Var ad = sfe_condition(g, f.ad.rows, f.profile);
    tr.hist_conditioned = g.value(hist);
    tr.ad_conditioned = g.value(ad);
    tr.hist_queries = g.value(sfe_compress(g, hist, f.hist.mask, 0));
    tr.ad_queries = g.value(sfe_compress(g, ad, f.ad.mask, 1));
  }
  std::vector<Var> aux;
  if (config_.zero_aux) {
    aux.assign(static_cast<std::size_t>(num_tasks()), zero_aux(g));
  } else {
    aux = student(g, f);
    for (const Var e : aux) tr.student.push_back(g.value(e));
  }
  for (int t = 0; t < num_tasks(); ++t) {
    tr.logits.push_back(static_cast<double>(g.value(backbone_logit(g, f, aux[t], t))(0, 0)));
  }
  return tr;
}

template class Graph<float>;
template class Graph<double>;
template class Model<float>;
template class Model<double>;

}  // namespace ocarm
