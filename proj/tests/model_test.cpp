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


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ocarm/errors.hpp"
#include "ocarm/model.hpp"
#include "test_support.hpp"

namespace ocarm {
namespace {

using testing::same_bits;
using testing::tiny_gen;
using testing::tiny_model;
using Mat = Matrix<double>;

bool same_bits(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (!same_bits(a.data()[i], b.data()[i])) return false;
  }
  return true;
}

Model<double> make_model(ModelConfig m = tiny_model(), std::uint64_t seed = 1) {
  Model<double> model(std::move(m));
  model.initialize(seed, GroupSet::all());
  return model;
}

std::vector<UserJourneyRecord> records(std::uint64_t seed = 1, int users = 40) {
  GenConfig g = tiny_gen(seed);
  g.n_users = users;
  return generate_dataset(g).first.records;
}

Mat& param(Model<double>& model, const std::string& name) {
  const int id = model.params().find(name);
  EXPECT_GE(id, 0) << name;
  return model.params().value(id);
}

Mat layer_norm(const Mat& x, const Mat& gamma, const Mat& beta) {
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  Mat out = ((x.array() - mean) / std::sqrt(var + 1e-5)).matrix();
  return (out.array() * gamma.array() + beta.array()).matrix();
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// ---- featurization ---------------------------------------------------------

TEST(Featurize, EmptySequenceHasNoRows) {
  const auto model = make_model();
  auto r = observable(records().front());
  r.ad_seq.clear();
  Graph<double> g(model.params(), nullptr);
  const auto f = model.featurize(g, r);
  EXPECT_EQ(g.value(f.ad.rows).rows(), 0);
  EXPECT_EQ(g.value(f.ad.rows).cols(), tiny_model().d_emb);
  EXPECT_TRUE(f.ad.mask.empty());
  EXPECT_TRUE(g.value(f.pooled_ad).isZero(0.0));
}

TEST(Featurize, KeepsFirstNItemsOfEachDay) {
  ModelConfig m = tiny_model();
  m.per_day_cap = 16;
  const auto model = make_model(m);
  std::vector<std::vector<int>> onboarding(static_cast<std::size_t>(m.days));
  for (int i = 0; i < 20; ++i) onboarding[0].push_back((i * 7) % m.vocab_size);
  onboarding[1] = {3};
  Graph<double> g(model.params(), nullptr);
  const auto days = model.featurize_onboarding(g, onboarding);
  const Mat& rows = g.value(days[0].rows);
  ASSERT_EQ(rows.rows(), 16);
  const Mat& table = model.params().value(model.params().find("item_embedding"));
  for (int i = 0; i < 16; ++i) EXPECT_TRUE(same_bits(Mat(rows.row(i)), Mat(table.row(onboarding[0][i]))));
  EXPECT_EQ(days[2].valid_count(), 0);
}

TEST(Featurize, OutOfVocabularyNamesField) {
  const auto model = make_model();
  auto r = observable(records().front());
  r.hist_seq.push_back(tiny_model().vocab_size);
  Graph<double> g(model.params(), nullptr);
  try {
    model.featurize(g, r);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("hist_seq"), std::string::npos);
  }
  auto bad = observable(records().front());
  bad.profile_cat[0] = 99;
  EXPECT_THROW(model.infer(bad), InputError);
}

TEST(Featurize, Deterministic) {
  const auto model = make_model();
  const auto r = records().front();
  const auto a = model.trace(observable(r), &r.onboarding);
  const auto b = model.trace(observable(r), &r.onboarding);
  EXPECT_TRUE(same_bits(a.profile, b.profile));
  EXPECT_TRUE(same_bits(a.causal_summaries, b.causal_summaries));
  EXPECT_EQ(a.logits, b.logits);
}

// ---- teacher ---------------------------------------------------------------

TEST(HaeDayCompress, SingleItemIsValueThenOutputProjection) {
  auto model = make_model();
  const auto r = observable(records().front());
  Graph<double> g(model.params(), nullptr);
  const auto f = model.featurize(g, r);
  const int item = 5;
  const Var rows = g.embedding(model.params().find("item_embedding"), std::span<const int>(&item, 1));
  const std::vector<unsigned char> mask = {1};
  const Mat got = g.value(model.hae_day_compress(g, f.profile, rows, mask));

  const Mat e = g.value(rows);
  const Mat v = e * param(model, "day_attn.wv") + param(model, "day_attn.bv");
  const Mat attended = v * param(model, "day_attn.wo") + param(model, "day_attn.bo");
  const Mat expected =
      layer_norm(g.value(f.profile) + attended, param(model, "day_attn.ln_gamma"), param(model, "day_attn.ln_beta"));
  EXPECT_LT((got - expected).norm(), 1e-12 * expected.norm());
}

TEST(HaeDayCompress, PermutationInvariant) {
  auto model = make_model();
  std::mt19937_64 rng(3);
  for (int c = 0; c < 50; ++c) {
    std::vector<int> ids(4);
    for (auto& id : ids) id = std::uniform_int_distribution<int>(0, 39)(rng);
    auto perm = ids;
    std::shuffle(perm.begin(), perm.end(), rng);
    Graph<double> g(model.params(), nullptr);
    const auto f = model.featurize(g, observable(records().front()));
    const std::vector<unsigned char> mask(4, 1);
    const int table = model.params().find("item_embedding");
    const Mat a = g.value(model.hae_day_compress(g, f.profile, g.embedding(table, ids), mask));
    const Mat b = g.value(model.hae_day_compress(g, f.profile, g.embedding(table, perm), mask));
    EXPECT_LE((a - b).norm(), 1e-6 * a.norm());
  }
}

TEST(HaeDayCompress, MaskedPaddingIsInvisible) {
  auto model = make_model();
  Graph<double> g(model.params(), nullptr);
  const auto f = model.featurize(g, observable(records().front()));
  const std::vector<int> ids = {1, 2, 3};
  const Var rows = g.embedding(model.params().find("item_embedding"), ids);
  const std::vector<unsigned char> mask(3, 1);
  // Same rows followed by three garbage rows that the mask hides.
  Mat padded(6, tiny_model().d_emb);
  padded.topRows(3) = g.value(rows);
  padded.bottomRows(3).setConstant(1e6);
  const std::vector<unsigned char> padded_mask = {1, 1, 1, 0, 0, 0};
  const Mat a = g.value(model.hae_day_compress(g, f.profile, rows, mask));
  const Mat b = g.value(model.hae_day_compress(g, f.profile, g.tape().constant(padded), padded_mask));
  EXPECT_TRUE(same_bits(a, b));
}

TEST(HaeDayCompress, EmptyDayAttendsToPlaceholder) {
  auto model = make_model();
  Graph<double> g(model.params(), nullptr);
  const auto f = model.featurize(g, observable(records().front()));
  const std::vector<unsigned char> none;
  const Mat empty = g.value(model.hae_day_compress(g, f.profile, g.tape().zeros(0, tiny_model().d_emb), none));
  const Var placeholder = g.param(model.params().find("day_placeholder"));
  const std::vector<unsigned char> one = {1};
  const Mat single = g.value(model.hae_day_compress(g, f.profile, placeholder, one));
  EXPECT_TRUE(same_bits(empty, single));
  EXPECT_TRUE(empty.allFinite());
}

TEST(HaeDayCompress, ShapeContract) {
  auto model = make_model();
  Graph<double> g(model.params(), nullptr);
  const std::vector<unsigned char> mask = {1};
  EXPECT_THROW(model.hae_day_compress(g, g.tape().zeros(1, 3), g.tape().zeros(1, 8), mask), ContractError);
  EXPECT_THROW(model.hae_day_compress(g, g.tape().zeros(1, 8), g.tape().zeros(2, 8), mask), ContractError);
}

TEST(HaeCausal, EarlierDaysIgnoreLaterDays) {
  ModelConfig m = tiny_model();
  m.days = 5;
  m.tasks = {{"LT1", 1}, {"LT3", 3}};
  const auto model = make_model(m);
  GenConfig gen = tiny_gen(4);
  gen.days = 5;
  const auto data = generate_dataset(gen).first.records;
  std::mt19937_64 rng(8);
  for (int c = 0; c < 20; ++c) {
    const auto& r = data[static_cast<std::size_t>(c) % data.size()];
    for (int d = 1; d < m.days; ++d) {
      auto changed = r.onboarding;
      for (int t = d; t < m.days; ++t) {
        changed[t].clear();
        const int n = std::uniform_int_distribution<int>(0, m.per_day_cap + 2)(rng);
        for (int i = 0; i < n; ++i) changed[t].push_back(std::uniform_int_distribution<int>(0, 39)(rng));
      }
      const auto a = model.trace(observable(r), &r.onboarding);
      const auto b = model.trace(observable(r), &changed);
      EXPECT_TRUE(same_bits(Mat(a.causal_summaries.topRows(d)), Mat(b.causal_summaries.topRows(d))));
      EXPECT_TRUE(same_bits(a.teacher[0], b.teacher[0]));  // LT1 reads day 1 only
      if (d >= 3) EXPECT_TRUE(same_bits(a.teacher[1], b.teacher[1]));
    }
  }
}

TEST(HaeCausal, SingleDay) {
  ModelConfig m = tiny_model();
  m.days = 1;
  m.tasks = {{"LT1", 1}};
  const auto model = make_model(m);
  Graph<double> g(model.params(), nullptr);
  Mat s(1, m.d_emb);
  s.setConstant(0.25);
  s(0, 0) = -1.0;
  const Mat out = g.value(model.hae_causal(g, g.tape().constant(s)));
  // One position: softmax weight is 1, so attention returns its own value.
  Model<double>& mm = const_cast<Model<double>&>(model);
  const Mat x = s + param(mm, "day_positions");
  const Mat v = x * param(mm, "causal_attn.wv") + param(mm, "causal_attn.bv");
  const Mat a = v * param(mm, "causal_attn.wo") + param(mm, "causal_attn.bo");
  const Mat expected = layer_norm(x + a, param(mm, "causal_attn.ln_gamma"), param(mm, "causal_attn.ln_beta"));
  EXPECT_LT((out - expected).norm(), 1e-12 * expected.norm());
}

TEST(HaeCausal, ZeroOutputProjectionLeavesResidual) {
  auto model = make_model();
  param(model, "causal_attn.wo").setZero();
  param(model, "causal_attn.bo").setZero();
  const int days = tiny_model().days;
  Mat s(days, tiny_model().d_emb);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = nd(rng);
  Graph<double> g(model.params(), nullptr);
  const Mat out = g.value(model.hae_causal(g, g.tape().constant(s)));
  const Mat x = s + param(model, "day_positions");
  for (int d = 0; d < days; ++d) {
    const Mat expected = layer_norm(x.row(d), param(model, "causal_attn.ln_gamma"), param(model, "causal_attn.ln_beta"));
    EXPECT_LT((Mat(out.row(d)) - expected).norm(), 1e-12);
  }
}

TEST(HaeProject, OneEntryPerTask) {
  ModelConfig m = tiny_model();
  m.tasks = {{"LT1", 1}};
  const auto model = make_model(m);
  const auto r = records().front();
  EXPECT_EQ(model.trace(observable(r), &r.onboarding).teacher.size(), 1u);
}

TEST(HaeProject, TaskProjectionsAreIsolated) {
  auto model = make_model();
  const auto r = records().front();
  const auto before = model.trace(observable(r), &r.onboarding);
  param(model, "proj.LT3.w1").array() += 0.5;
  param(model, "proj.LT3.b2").array() -= 1.0;
  const auto after = model.trace(observable(r), &r.onboarding);
  EXPECT_TRUE(same_bits(before.teacher[0], after.teacher[0]));
  EXPECT_FALSE(same_bits(before.teacher[1], after.teacher[1]));
}

TEST(HaeProject, ZeroMlpGivesZero) {
  auto model = make_model();
  for (const char* n : {"proj.LT1.w1", "proj.LT1.b1", "proj.LT1.w2", "proj.LT1.b2"}) param(model, n).setZero();
  const auto r = records().front();
  EXPECT_TRUE(model.trace(observable(r), &r.onboarding).teacher[0].isZero(0.0));
}

TEST(HaeProject, HorizonBeyondDaysRejected) {
  ModelConfig m = tiny_model();
  m.tasks = {{"LT1", 1}, {"LT7", 7}};
  EXPECT_THROW(m.validate(), ConfigError);
}

// ---- student ---------------------------------------------------------------

TEST(SfeCondition, ConcatenatesProfile) {
  const auto model = make_model();
  Graph<double> g(model.params(), nullptr);
  const auto f = model.featurize(g, observable(records().front()));
  const int d = tiny_model().d_emb;
  EXPECT_EQ(g.value(model.sfe_condition(g, g.tape().zeros(0, d), f.profile)).rows(), 0);
  EXPECT_EQ(g.value(model.sfe_condition(g, g.tape().zeros(0, d), f.profile)).cols(), 2 * d);
  const int item = 7;
  const Var e = g.embedding(model.params().find("item_embedding"), std::span<const int>(&item, 1));
  const Mat h = g.value(model.sfe_condition(g, e, f.profile));
  EXPECT_TRUE(same_bits(Mat(h.leftCols(d)), g.value(e)));
  EXPECT_TRUE(same_bits(Mat(h.rightCols(d)), g.value(f.profile)));
}

TEST(SfeCondition, DependsOnProfile) {
  const auto model = make_model();
  const auto data = records();
  auto a = observable(data[0]);
  auto b = a;
  b.profile_dense[0] += 0.5;
  EXPECT_FALSE(same_bits(model.trace(a, nullptr).hist_conditioned, model.trace(b, nullptr).hist_conditioned));
}

TEST(SfeCompress, RepeatedIdenticalRowsMatchSingleRow) {
  const auto model = make_model();
  Graph<double> g(model.params(), nullptr);
  const auto f = model.featurize(g, observable(records().front()));
  const std::vector<int> one = {9};
  const std::vector<int> five(5, 9);
  const int table = model.params().find("item_embedding");
  const Var h1 = model.sfe_condition(g, g.embedding(table, one), f.profile);
  const Var h5 = model.sfe_condition(g, g.embedding(table, five), f.profile);
  const Mat a = g.value(model.sfe_compress(g, h1, std::vector<unsigned char>(1, 1), 0));
  const Mat b = g.value(model.sfe_compress(g, h5, std::vector<unsigned char>(5, 1), 0));
  ASSERT_EQ(a.rows(), tiny_model().num_queries);
  // Five weights of 1/5 summed in floating point; equal up to rounding.
  EXPECT_LE((a - b).norm(), 1e-12 * a.norm());
}

TEST(SfeCompress, EmptySequenceUsesPlaceholder) {
  const auto model = make_model();
  auto r = observable(records().front());
  r.ad_seq.clear();
  const auto a = model.trace(r, nullptr);
  const auto b = model.trace(r, nullptr);
  EXPECT_EQ(a.ad_queries.rows(), tiny_model().num_queries);
  EXPECT_TRUE(a.ad_queries.allFinite());
  EXPECT_TRUE(same_bits(a.ad_queries, b.ad_queries));
}

TEST(SfeCompress, MaskedPaddingIsInvisible) {
  const auto model = make_model();
  Graph<double> g(model.params(), nullptr);
  const auto f = model.featurize(g, observable(records().front()));
  const std::vector<int> ids = {4, 8};
  const Var h = model.sfe_condition(g, g.embedding(model.params().find("item_embedding"), ids), f.profile);
  Mat padded(4, 2 * tiny_model().d_emb);
  padded.topRows(2) = g.value(h);
  padded.bottomRows(2).setConstant(-3e5);
  const Mat a = g.value(model.sfe_compress(g, h, std::vector<unsigned char>(2, 1), 1));
  const Mat b = g.value(model.sfe_compress(g, g.tape().constant(padded), std::vector<unsigned char>{1, 1, 0, 0}, 1));
  EXPECT_TRUE(same_bits(a, b));
}

TEST(SfeCompress, SingleQuerySingleItem) {
  ModelConfig m = tiny_model();
  m.num_queries = 1;
  auto model = make_model(m);
  Graph<double> g(model.params(), nullptr);
  const auto f = model.featurize(g, observable(records().front()));
  const int item = 2;
  const Var h = model.sfe_condition(g, g.embedding(model.params().find("item_embedding"), std::span<const int>(&item, 1)), f.profile);
  const Mat got = g.value(model.sfe_compress(g, h, std::vector<unsigned char>(1, 1), 0));
  const Mat v = g.value(h) * param(model, "sfe.hist.attn.wv") + param(model, "sfe.hist.attn.bv");
  const Mat a = v * param(model, "sfe.hist.attn.wo") + param(model, "sfe.hist.attn.bo");
  const Mat expected = layer_norm(param(model, "sfe.hist.queries") + a, param(model, "sfe.hist.attn.ln_gamma"),
                                  param(model, "sfe.hist.attn.ln_beta"));
  EXPECT_LT((got - expected).norm(), 1e-12 * expected.norm());
}

TEST(SfeTaskTower, TowersAreIsolated) {
  auto model = make_model();
  const auto r = observable(records().front());
  const auto before = model.trace(r, nullptr);
  param(model, "tower.LT3.w2").array() *= -2.0;
  const auto after = model.trace(r, nullptr);
  EXPECT_TRUE(same_bits(before.student[0], after.student[0]));
  EXPECT_FALSE(same_bits(before.student[1], after.student[1]));
}

TEST(SfeTaskTower, ZeroTowerAndWidths) {
  auto model = make_model();
  const auto r = records().front();
  const auto tr = model.trace(observable(r), &r.onboarding);
  for (std::size_t t = 0; t < tr.student.size(); ++t) {
    EXPECT_EQ(tr.student[t].cols(), tr.teacher[t].cols());
    EXPECT_EQ(tr.student[t].cols(), tiny_model().d_repr);
  }
  for (const char* n : {"tower.LT1.w1", "tower.LT1.b1", "tower.LT1.w2", "tower.LT1.b2"}) param(model, n).setZero();
  EXPECT_TRUE(model.trace(observable(r), nullptr).student[0].isZero(0.0));
  Graph<double> g(model.params(), nullptr);
  const auto f = model.featurize(g, observable(r));
  const Var only_one[1] = {f.profile};
  EXPECT_THROW(model.sfe_task_tower(g, f.profile, only_one, 0), ContractError);
}

// ---- backbone --------------------------------------------------------------

TEST(Backbone, UnitGateIsPlainMlp) {
  ModelConfig m = tiny_model();
  m.zero_aux = true;
  auto model = make_model(m);
  for (int l = 0; l < 2; ++l) {
    param(model, "backbone.layer" + std::to_string(l) + ".gate_w").setZero();
    param(model, "backbone.layer" + std::to_string(l) + ".gate_b").setZero();
  }
  const auto r = observable(records().front());
  Graph<double> g(model.params(), nullptr);
  const auto f = model.featurize(g, r);
  Mat x(1, 3 * m.d_emb + m.d_repr);
  x << g.value(f.profile), Mat::Zero(1, m.d_repr), g.value(f.pooled_hist), g.value(f.pooled_ad);
  Mat h = x;
  for (int l = 0; l < 2; ++l) {
    const std::string p = "backbone.layer" + std::to_string(l);
    h = (h * param(model, p + ".w") + param(model, p + ".b")).cwiseMax(0.0);
  }
  const double logit = (h * param(model, "backbone.head.LT1.w") + param(model, "backbone.head.LT1.b"))(0, 0);
  EXPECT_NEAR(model.infer(r)[0], sigmoid(logit), 1e-14);
}

TEST(Backbone, ScoresStrictlyInsideUnitInterval) {
  const auto model = make_model();
  for (const auto& r : records(2, 80)) {
    for (double p : model.infer(observable(r))) {
      EXPECT_GT(p, 0.0);
      EXPECT_LT(p, 1.0);
    }
  }
}

TEST(Backbone, AuxOnlyEntersThroughItsWeights) {
  ModelConfig with_aux = tiny_model();
  ModelConfig base = tiny_model();
  base.zero_aux = true;
  auto a = make_model(with_aux, 4);
  auto b = make_model(base, 4);
  // Zero the aux rows of the first layer; then the teacher path and the base
  // path must score identically.
  const int d = with_aux.d_emb;
  param(a, "backbone.layer0.w").middleRows(d, with_aux.d_repr).setZero();
  param(b, "backbone.layer0.w") = param(a, "backbone.layer0.w");
  for (const auto& r : records(3)) {
    const auto sa = a.score_with_content(r);
    const auto sb = b.score_with_content(r);
    for (std::size_t t = 0; t < sa.size(); ++t) EXPECT_TRUE(same_bits(sa[t], sb[t]));
  }
}

// ---- losses ----------------------------------------------------------------

// Batch-mean loss with gradients into `grads` (if given).
double batch_loss(const Model<double>& model, const std::vector<UserJourneyRecord>& batch, int stage,
                  GradientBuffer<double>* grads) {
  Graph<double> g(model.params(), grads);
  std::vector<Var> terms;
  for (const auto& r : batch) {
    terms.push_back(stage == 1 ? model.record_loss_stage1(g, r) : model.record_loss_stage2(g, r));
  }
  const Var loss = g.tape().scale(g.tape().add_n(terms), 1.0 / static_cast<double>(batch.size()));
  if (grads != nullptr) g.tape().backward(loss);
  return g.value(loss)(0, 0);
}

// Central differences over every entry of every array in `groups`; returns
// the worst norm-relative error across arrays. A step of 1e-3 straddles ReLU
// kinks on these tiny instances often enough to fail spuriously, so 1e-4.
double worst_gradient_error(Model<double>& model, const std::vector<UserJourneyRecord>& batch, int stage,
                            GroupSet groups) {
  GradientBuffer<double> grads(model.params(), groups);
  grads.set_zero();
  batch_loss(model, batch, stage, &grads);
  constexpr double h = 1e-4;
  double worst = 0.0;
  for (int id = 0; id < model.params().size(); ++id) {
    if (!groups.contains(model.params().group(id))) continue;
    Mat& w = model.params().value(id);
    Mat fd(w.rows(), w.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double keep = w.data()[i];
      w.data()[i] = keep + h;
      const double up = batch_loss(model, batch, stage, nullptr);
      w.data()[i] = keep - h;
      const double down = batch_loss(model, batch, stage, nullptr);
      w.data()[i] = keep;
      fd.data()[i] = (up - down) / (2.0 * h);
    }
    const Mat& an = grads.grad(id);
    const double scale = std::max({an.norm(), fd.norm(), 1e-7});
    const double err = (an - fd).norm() / scale;
    if (err > worst) worst = err;
    EXPECT_LE(err, 1e-4) << model.params().name(id);
  }
  return worst;
}

// Zero-initialized biases put ReLU inputs exactly on the kink, where a
// one-sided derivative cannot match central differences. Jitter them.
Model<double> jittered_model(ModelConfig m, std::uint64_t seed) {
  auto model = make_model(std::move(m), seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.05);
  for (int id = 0; id < model.params().size(); ++id) {
    auto& w = model.params().value(id);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] += nd(rng);
  }
  return model;
}

std::vector<UserJourneyRecord> four_records(std::uint64_t seed = 6) {
  auto all = records(seed);
  all.resize(4);
  // Soft labels away from {0,1} exercise the full BCE expression.
  all[1].labels["LT3"] = 1.0 / 3.0;
  return all;
}

TEST(GradientCheck, Stage1AllGroups) {
  auto model = jittered_model(tiny_model(), 21);
  worst_gradient_error(model, four_records(), 1, GroupSet::all());
}

TEST(GradientCheck, Stage1ContentMlp) {
  ModelConfig m = tiny_model();
  m.content_encoder = ContentEncoder::kMlp;
  auto model = jittered_model(m, 22);
  worst_gradient_error(model, four_records(), 1, GroupSet::all());
}

TEST(GradientCheck, Stage1Base) {
  ModelConfig m = tiny_model();
  m.zero_aux = true;
  auto model = jittered_model(m, 23);
  worst_gradient_error(model, four_records(), 1, GroupSet::all());
}

TEST(GradientCheck, Stage2StudentGroups) {
  auto model = jittered_model(tiny_model(), 24);
  worst_gradient_error(model, four_records(), 2, {Group::kSfe, Group::kTaskTowers, Group::kBackbone});
}

TEST(GradientCheck, Stage2JointAllGroups) {
  ModelConfig m = tiny_model();
  m.teacher_pretrained = false;
  m.stop_gradient = false;
  auto model = jittered_model(m, 25);
  worst_gradient_error(model, four_records(), 2, GroupSet::all());
}

TEST(GradientCheck, Stage2SquaredAlignmentAndMlpEncoders) {
  ModelConfig m = tiny_model();
  m.align_loss = AlignLoss::kL2;
  m.user_encoder = UserEncoder::kMlp;
  m.lambda = 0.7;
  auto model = jittered_model(m, 26);
  // Embeddings also feed the teacher; finite differences see that path while
  // the stop-gradient target hides it from backprop. Stage 2 freezes them.
  worst_gradient_error(model, four_records(), 2, {Group::kTaskTowers, Group::kBackbone});
}

TEST(Stage1Loss, HalfProbabilityOnPositiveIsLn2) {
  ModelConfig m = tiny_model();
  m.tasks = {{"LT1", 1}};
  auto model = make_model(m);
  param(model, "backbone.head.LT1.w").setZero();
  param(model, "backbone.head.LT1.b").setZero();
  auto r = records().front();
  r.labels["LT1"] = 1.0;
  Graph<double> g(model.params(), nullptr);
  EXPECT_NEAR(g.value(model.record_loss_stage1(g, r))(0, 0), std::log(2.0), 1e-15);
}

TEST(Stage1Loss, MinimumIsBinaryEntropy) {
  ModelConfig m = tiny_model();
  auto model = make_model(m);
  const double y1 = 0.25, y3 = 2.0 / 3.0;
  param(model, "backbone.head.LT1.w").setZero();
  param(model, "backbone.head.LT3.w").setZero();
  param(model, "backbone.head.LT1.b").setConstant(std::log(y1 / (1 - y1)));
  param(model, "backbone.head.LT3.b").setConstant(std::log(y3 / (1 - y3)));
  auto r = records().front();
  r.labels["LT1"] = y1;
  r.labels["LT3"] = y3;
  auto entropy = [](double y) { return -(y * std::log(y) + (1 - y) * std::log(1 - y)); };
  Graph<double> g(model.params(), nullptr);
  EXPECT_NEAR(g.value(model.record_loss_stage1(g, r))(0, 0), 0.5 * (entropy(y1) + entropy(y3)), 1e-12);
}

TEST(Stage1Loss, LabelsOutsideUnitIntervalRejected) {
  const auto model = make_model();
  auto r = records().front();
  r.labels["LT1"] = 1.5;
  Graph<double> g(model.params(), nullptr);
  EXPECT_THROW(model.record_loss_stage1(g, r), InputError);
}

TEST(AlignLoss, CollinearAndAntipodal) {
  const auto model = make_model();
  Graph<double> g(model.params(), nullptr);
  auto& tape = g.tape();
  Mat c1(1, 4), c2(1, 4);
  c1 << 1.0, -2.0, 0.5, 3.0;
  c2 << -0.1, 0.2, 0.7, 0.0;
  const Var teacher[2] = {tape.constant(c1), tape.constant(c2)};
  const Var same[2] = {tape.constant(2.5 * c1), tape.constant(0.3 * c2)};
  const Var opposite[2] = {tape.constant(-c1), tape.constant(-c2)};
  EXPECT_NEAR(g.value(model.loss_align(g, same, teacher))(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(g.value(model.loss_align(g, opposite, teacher))(0, 0), 4.0, 1e-15);
  const Var narrow[2] = {tape.zeros(1, 3), tape.zeros(1, 3)};
  EXPECT_THROW(model.loss_align(g, narrow, teacher), ContractError);
}

TEST(AlignLoss, TeacherReceivesNoGradient) {
  const auto model = make_model();
  GradientBuffer<double> grads(model.params(), GroupSet::all());
  grads.set_zero();
  const auto r = records().front();
  Graph<double> g(model.params(), &grads);
  const auto f = model.featurize(g, observable(r));
  const auto e_u = model.student(g, f);
  const auto e_c = model.teacher(g, f.profile, model.featurize_onboarding(g, r.onboarding));
  g.tape().backward(model.loss_align(g, e_u, e_c));
  bool student_moved = false;
  for (int id = 0; id < model.params().size(); ++id) {
    const Group grp = model.params().group(id);
    if (grp == Group::kHae || grp == Group::kHaeProj) {
      EXPECT_TRUE(grads.grad(id).isZero(0.0)) << model.params().name(id);
    }
    if (grp == Group::kTaskTowers && !grads.grad(id).isZero(0.0)) student_moved = true;
  }
  EXPECT_TRUE(student_moved);
}

TEST(AlignLoss, PerTaskRange) {
  const auto model = make_model();
  for (const auto& r : records(5)) {
    for (double s : model.alignment_similarity(r)) {
      EXPECT_GE(1.0 - s, 0.0);
      EXPECT_LE(1.0 - s, 2.0);
    }
  }
}

TEST(Stage2Loss, LambdaZeroIsBceAlone) {
  ModelConfig m = tiny_model();
  ModelConfig m0 = m;
  m0.lambda = 0.0;
  const auto a = make_model(m, 9);
  const auto b = make_model(m0, 9);
  const auto r = records().front();
  Graph<double> ga(a.params(), nullptr), gb(b.params(), nullptr);
  const double full = ga.value(a.record_loss_stage2(ga, r))(0, 0);
  const double bce = gb.value(b.record_loss_stage2(gb, r))(0, 0);
  EXPECT_GT(full, bce);
  // Student and teacher terms add: full = bce + sum_t (1 - cos).
  double align = 0.0;
  for (double s : a.alignment_similarity(r)) align += 1.0 - s;
  EXPECT_NEAR(full, bce + align, 1e-12);
}

TEST(Stage2Loss, MatchingRepresentationsLeaveBce) {
  ModelConfig m = tiny_model();
  m.content_encoder = ContentEncoder::kMlp;
  m.user_encoder = UserEncoder::kMlp;
  ModelConfig m0 = m;
  m0.lambda = 0.0;
  auto a = make_model(m, 10);
  Matrix<double> bias(1, m.d_repr);
  bias << 0.4, -0.2, 0.9, 0.1;
  for (const char* task : {"LT1", "LT3"}) {
    param(a, std::string("content_mlp.") + task + ".w2").setZero();
    param(a, std::string("user_mlp.") + task + ".w2").setZero();
    param(a, std::string("content_mlp.") + task + ".b2") = bias;
    param(a, std::string("user_mlp.") + task + ".b2") = bias;
  }
  Model<double> b(m0);
  b.params() = a.params();
  const auto r = records().front();
  Graph<double> ga(a.params(), nullptr), gb(b.params(), nullptr);
  EXPECT_NEAR(ga.value(a.record_loss_stage2(ga, r))(0, 0), gb.value(b.record_loss_stage2(gb, r))(0, 0), 1e-14);
}

TEST(Stage2Loss, NegativeLambdaRejected) {
  ModelConfig m = tiny_model();
  m.lambda = -0.1;
  EXPECT_THROW(m.validate(), ConfigError);
  EXPECT_THROW(Model<double>{m}, ConfigError);
}

// ---- serving path ----------------------------------------------------------

TEST(Infer, IgnoresOnboardingContent) {
  const auto model = make_model();
  std::mt19937_64 rng(4);
  for (const auto& r : records(7)) {
    auto changed = r;
    for (auto& day : changed.onboarding) {
      day.clear();
      const int n = std::uniform_int_distribution<int>(0, 4)(rng);
      for (int i = 0; i < n; ++i) day.push_back(std::uniform_int_distribution<int>(0, 39)(rng));
    }
    auto removed = r;
    removed.onboarding.clear();
    const auto a = model.infer(observable(r));
    const auto b = model.infer(observable(changed));
    const auto c = model.infer(observable(removed));
    for (std::size_t t = 0; t < a.size(); ++t) {
      EXPECT_TRUE(same_bits(a[t], b[t]));
      EXPECT_TRUE(same_bits(a[t], c[t]));
    }
  }
}

TEST(Infer, MatchesTrainingTimeStudentPath) {
  const auto model = make_model();
  for (const auto& r : records(8)) {
    Graph<double> g(model.params(), nullptr);
    const auto f = model.featurize(g, observable(r));
    const auto e_u = model.student(g, f);
    const auto scores = model.infer(observable(r));
    for (int t = 0; t < model.num_tasks(); ++t) {
      const double logit = g.value(model.backbone_logit(g, f, e_u[t], t))(0, 0);
      EXPECT_TRUE(same_bits(scores[t], sigmoid(logit)));
      EXPECT_EQ(model.infer(observable(r), t), scores[t]);
    }
  }
}

TEST(Infer, BaseUsesZeroAux) {
  ModelConfig m = tiny_model();
  m.zero_aux = true;
  const auto model = make_model(m);
  for (const auto& r : records(9)) {
    Graph<double> g(model.params(), nullptr);
    const auto f = model.featurize(g, observable(r));
    const auto scores = model.infer(observable(r));
    for (int t = 0; t < model.num_tasks(); ++t) {
      EXPECT_TRUE(same_bits(scores[t], sigmoid(g.value(model.backbone_logit(g, f, model.zero_aux(g), t))(0, 0))));
    }
    // Base checkpoints have no teacher, so content cannot change the score.
    EXPECT_EQ(model.score_with_content(r), scores);
  }
}

TEST(Infer, SinglePrecisionAgreesWithDouble) {
  Model<double> d = make_model();
  Model<float> f(tiny_model());
  f.params() = d.params().cast<float>();
  for (const auto& r : records(10)) {
    const auto a = d.infer(observable(r));
    const auto b = f.infer(observable(r));
    for (std::size_t t = 0; t < a.size(); ++t) EXPECT_NEAR(a[t], b[t], 1e-4);
  }
}

}  // namespace
}  // namespace ocarm
