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

#ifndef OCARM_MODEL_HPP_
#define OCARM_MODEL_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ocarm/autograd.hpp"
#include "ocarm/datagen.hpp"
#include "ocarm/model_config.hpp"
#include "ocarm/params.hpp"

namespace ocarm {

// Bid-time view of a conversion event. There is deliberately no onboarding
// field: anything scored from this type cannot see post-conversion content.
struct ObservableRecord {
  std::int64_t user_id = 0;
  std::vector<int> profile_cat;
  std::vector<double> profile_dense;
  std::vector<int> hist_seq;
  std::vector<int> ad_seq;
};

ObservableRecord observable(const UserJourneyRecord& record);

// One forward (and optionally backward) evaluation. Parameter nodes are
// created once per graph and shared by every record evaluated on it.
template <typename T>
class Graph {
 public:
  // `grads == nullptr` evaluates without any parameter gradients.
  Graph(const ParamStore<T>& params, GradientBuffer<T>* grads);

  Tape<T>& tape() { return tape_; }
  const Tape<T>& tape() const { return tape_; }
  Var param(int id);
  Var embedding(int table_id, std::span<const int> ids);
  const Matrix<T>& value(Var v) const { return tape_.value(v); }

 private:
  const ParamStore<T>& params_;
  GradientBuffer<T>* grads_;
  Tape<T> tape_;
  std::vector<Var> cache_;
};

// Item rows of one sequence plus a validity mask (1 = real item).
struct SequenceRows {
  Var rows;
  std::vector<unsigned char> mask;
  int valid_count() const;
};

struct ObservableFeatures {
  Var profile;  // x_u, 1 x d_emb
  SequenceRows hist;
  SequenceRows ad;
  Var pooled_hist;  // mean of valid rows; zeros when empty
  Var pooled_ad;
};

// Intermediate values of one record, for debugging dumps and tests.
template <typename T>
struct ForwardTrace {
  Matrix<T> profile;
  std::vector<Matrix<T>> day_items;  // H^(d), kept rows only
  Matrix<T> day_summaries;           // s^(1..D), rows
  Matrix<T> causal_summaries;        // s~^(1..D), rows
  std::vector<Matrix<T>> teacher;    // e_c per task
  Matrix<T> hist_conditioned;        // H^(hist)
  Matrix<T> ad_conditioned;          // H^(ad)
  Matrix<T> hist_queries;            // s^(hist), K rows
  Matrix<T> ad_queries;              // s^(ad), K rows
  std::vector<Matrix<T>> student;    // e_u per task
  std::vector<double> logits;        // backbone logits on the serving path
  bool has_onboarding = false;
};

template <typename T>
class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  int num_tasks() const { return static_cast<int>(config_.tasks.size()); }
  int task_index(const std::string& name) const;  // throws ContractError

  // Seeded initialization of the given groups; other groups are untouched.
  void initialize(std::uint64_t seed, GroupSet groups);

  // ---- featurization -------------------------------------------------------
  Var profile_embedding(Graph<T>& g, const ObservableRecord& record) const;
  // Keeps the first `cap` ids; `field` names the source in errors.
  SequenceRows sequence_embedding(Graph<T>& g, std::span<const int> ids, int cap, const char* field) const;
  ObservableFeatures featurize(Graph<T>& g, const ObservableRecord& record) const;
  // D day matrices, each holding the first N items of that day.
  std::vector<SequenceRows> featurize_onboarding(Graph<T>& g,
                                                 const std::vector<std::vector<int>>& onboarding) const;

  // ---- teacher: hierarchical attention encoder ----------------------------
  // Profile-query cross-attention over one day's items (residual + layer norm).
  Var hae_day_compress(Graph<T>& g, Var profile, Var day_items, std::span<const unsigned char> mask) const;
  // Causal self-attention over the D day summaries (rows).
  Var hae_causal(Graph<T>& g, Var day_summaries) const;
  // Per-task MLP on row `horizon - 1` of the causal summaries.
  Var hae_project(Graph<T>& g, Var causal_summaries, int task) const;
  // Content-encoder ablation: per-task MLP over day means of days 1..horizon.
  Var content_mlp(Graph<T>& g, const std::vector<SequenceRows>& days, int task) const;
  // e_c for every task, dispatching on config().content_encoder.
  std::vector<Var> teacher(Graph<T>& g, Var profile, const std::vector<SequenceRows>& days) const;

  // ---- student: sequence fusion encoder -----------------------------------
  // Row j is [e_j ; x_u].
  Var sfe_condition(Graph<T>& g, Var seq_rows, Var profile) const;
  // K learned queries attend over the conditioned rows. `seq_type` 0 = hist, 1 = ad.
  Var sfe_compress(Graph<T>& g, Var conditioned, std::span<const unsigned char> mask, int seq_type) const;
  Var sfe_task_tower(Graph<T>& g, Var profile, std::span<const Var> compressed, int task) const;
  // User-encoder ablation: per-task MLP over [x_u ; mean hist ; mean ad].
  Var user_mlp(Graph<T>& g, const ObservableFeatures& f, int task) const;
  // e_u for every task, dispatching on config().user_encoder.
  std::vector<Var> student(Graph<T>& g, const ObservableFeatures& f) const;

  // ---- retention backbone --------------------------------------------------
  // Gated MLP on [x_u ; aux ; pooled hist ; pooled ad]; returns the 1 x 1 logit.
  Var backbone_logit(Graph<T>& g, const ObservableFeatures& f, Var aux, int task) const;
  // Zero auxiliary vector of width d_repr.
  Var zero_aux(Graph<T>& g) const;

  // ---- objectives (per record; batch means are formed by the caller) ------
  // Mean over tasks of soft BCE(backbone([x_u; e_c]), y). Base configs use aux = 0.
  Var record_loss_stage1(Graph<T>& g, const UserJourneyRecord& record) const;
  // Mean over tasks of soft BCE(backbone([x_u; e_u]), y) + lambda * sum_t L_sim.
  Var record_loss_stage2(Graph<T>& g, const UserJourneyRecord& record) const;
  // sum_t L_sim(e_u^t, sg(e_c^t)).
  Var loss_align(Graph<T>& g, std::span<const Var> student, std::span<const Var> teacher) const;

  // ---- scoring -------------------------------------------------------------
  // Leakage-free serving score, one per task.
  std::vector<double> infer(const ObservableRecord& record) const;
  double infer(const ObservableRecord& record, int task) const { return infer(record)[task]; }
  // Scores with the teacher representation; reads onboarding content.
  std::vector<double> score_with_content(const UserJourneyRecord& record) const;
  // Per-task cosine between e_u and e_c.
  std::vector<double> alignment_similarity(const UserJourneyRecord& record) const;

  ForwardTrace<T> trace(const ObservableRecord& record, const std::vector<std::vector<int>>* onboarding) const;

 private:
  struct AttentionIds {
    int wq, bq, wk, bk, wv, bv, wo, bo, ln_g, ln_b;
  };
  struct MlpIds {
    int w1, b1, w2, b2;
  };
  struct SfeIds {
    int queries, placeholder;
    AttentionIds attn;
  };
  struct BackboneLayerIds {
    int w, b, gate_w, gate_b;
  };
  enum class Init { kXavier, kZero, kOne, kEmbedding, kToken };

  int add(Group group, const std::string& name, int rows, int cols, Init init);
  AttentionIds add_attention(Group group, const std::string& prefix, int query_in, int kv_in);
  MlpIds add_mlp(Group group, const std::string& prefix, int in, int hidden, int out);
  Var attend(Graph<T>& g, Var queries, Var keys, const AttentionIds& ids, bool causal) const;
  Var mlp(Graph<T>& g, Var x, const MlpIds& ids) const;
  Var compact(Graph<T>& g, Var rows, std::span<const unsigned char> mask, int placeholder) const;
  Matrix<T> label_row(const UserJourneyRecord& record, int task) const;

  ModelConfig config_;
  ParamStore<T> params_;
  std::vector<Init> init_;

  int item_table_ = -1;
  std::vector<int> cat_tables_;
  int dense_w_ = -1, dense_b_ = -1;

  int day_placeholder_ = -1;
  AttentionIds day_attn_{};
  int day_positions_ = -1;
  AttentionIds causal_attn_{};
  std::vector<MlpIds> hae_proj_;
  std::vector<MlpIds> content_mlp_;

  std::vector<SfeIds> sfe_;
  std::vector<MlpIds> towers_;

  std::vector<BackboneLayerIds> backbone_;
  std::vector<std::pair<int, int>> heads_;  // (w, b) per task
};

extern template class Graph<float>;
extern template class Graph<double>;
extern template class Model<float>;
extern template class Model<double>;

}  // namespace ocarm

#endif  // OCARM_MODEL_HPP_
