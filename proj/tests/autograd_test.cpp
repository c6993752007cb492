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

// Every tape operation is checked against central finite differences in
// double precision. Each case reduces the op output to a scalar with a fixed
// random weighting so all output entries contribute.

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ocarm/autograd.hpp"

namespace ocarm {
namespace {

using Mat = Matrix<double>;
using Build = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

Mat random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Scalar objective: sum(op(inputs) .* W) for a fixed random W.
double objective(const std::vector<Mat>& inputs, const Build& build, std::vector<Mat>* grads, std::uint64_t wseed) {
  Tape<double> tape;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    vars.push_back(tape.param(inputs[i], grads ? &(*grads)[i] : nullptr));
  }
  const Var out = build(tape, vars);
  std::mt19937_64 rng(wseed);
  const Mat& v = tape.value(out);
  const Var w = tape.constant(random_matrix(rng, static_cast<int>(v.rows()), static_cast<int>(v.cols())));
  const Var loss = tape.sum(tape.mul(out, w));
  if (grads) tape.backward(loss);
  return tape.value(loss)(0, 0);
}

// Largest per-input relative error ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8).
double gradient_error(std::vector<Mat> inputs, const Build& build, double h = 1e-5) {
  std::vector<Mat> grads;
  for (const auto& m : inputs) grads.push_back(Mat::Zero(m.rows(), m.cols()));
  objective(inputs, build, &grads, 99);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Mat numeric(inputs[i].rows(), inputs[i].cols());
    for (Eigen::Index k = 0; k < inputs[i].size(); ++k) {
      const double saved = inputs[i].data()[k];
      inputs[i].data()[k] = saved + h;
      const double up = objective(inputs, build, nullptr, 99);
      inputs[i].data()[k] = saved - h;
      const double down = objective(inputs, build, nullptr, 99);
      inputs[i].data()[k] = saved;
      numeric.data()[k] = (up - down) / (2.0 * h);
    }
    const double denom = std::max({grads[i].norm(), numeric.norm(), 1e-8});
    worst = std::max(worst, (grads[i] - numeric).norm() / denom);
  }
  return worst;
}

class TapeGradients : public ::testing::Test {
 protected:
  std::mt19937_64 rng{2026};
  Mat r(int rows, int cols) { return random_matrix(rng, rows, cols); }
};

TEST_F(TapeGradients, Matmul) {
  EXPECT_LT(gradient_error({r(3, 4), r(4, 2)}, [](auto& t, const auto& v) { return t.matmul(v[0], v[1]); }), 1e-6);
}

TEST_F(TapeGradients, MatmulTransposed) {
  EXPECT_LT(gradient_error({r(3, 4), r(5, 4)}, [](auto& t, const auto& v) { return t.matmul_bt(v[0], v[1]); }),
            1e-6);
}

TEST_F(TapeGradients, ElementwiseArithmetic) {
  EXPECT_LT(gradient_error({r(3, 4), r(3, 4)}, [](auto& t, const auto& v) { return t.add(v[0], v[1]); }), 1e-6);
  EXPECT_LT(gradient_error({r(3, 4), r(3, 4)}, [](auto& t, const auto& v) { return t.sub(v[0], v[1]); }), 1e-6);
  EXPECT_LT(gradient_error({r(3, 4), r(3, 4)}, [](auto& t, const auto& v) { return t.mul(v[0], v[1]); }), 1e-6);
  EXPECT_LT(gradient_error({r(3, 4)}, [](auto& t, const auto& v) { return t.scale(v[0], -1.7); }), 1e-6);
  EXPECT_LT(gradient_error({r(3, 4), r(1, 4)}, [](auto& t, const auto& v) { return t.add_row(v[0], v[1]); }), 1e-6);
}

TEST_F(TapeGradients, AddNWithRepeatedOperand) {
  EXPECT_LT(gradient_error({r(2, 3), r(2, 3)},
                           [](auto& t, const auto& v) {
                             const Var terms[3] = {v[0], v[1], v[0]};
                             return t.add_n(terms);
                           }),
            1e-6);
}

TEST_F(TapeGradients, Nonlinearities) {
  // Keep relu inputs away from the kink.
  Mat x = r(4, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::abs(x.data()[i]) < 0.1) x.data()[i] += 0.3;
  }
  EXPECT_LT(gradient_error({x}, [](auto& t, const auto& v) { return t.relu(v[0]); }), 1e-6);
  EXPECT_LT(gradient_error({r(4, 5)}, [](auto& t, const auto& v) { return t.sigmoid(v[0]); }), 1e-6);
}

TEST_F(TapeGradients, Softmax) {
  EXPECT_LT(gradient_error({r(3, 5)}, [](auto& t, const auto& v) { return t.softmax_rows(v[0], false); }), 1e-6);
  EXPECT_LT(gradient_error({r(4, 4)}, [](auto& t, const auto& v) { return t.softmax_rows(v[0], true); }), 1e-6);
}

TEST_F(TapeGradients, LayerNorm) {
  EXPECT_LT(gradient_error({r(3, 6), r(1, 6), r(1, 6)},
                           [](auto& t, const auto& v) { return t.layer_norm_rows(v[0], v[1], v[2], 1e-5); }),
            1e-6);
}

TEST_F(TapeGradients, ShapeOperations) {
  EXPECT_LT(gradient_error({r(2, 3), r(2, 2)},
                           [](auto& t, const auto& v) {
                             const Var parts[2] = {v[0], v[1]};
                             return t.concat_cols(parts);
                           }),
            1e-6);
  EXPECT_LT(gradient_error({r(2, 3), r(1, 3)},
                           [](auto& t, const auto& v) {
                             const Var parts[2] = {v[0], v[1]};
                             return t.concat_rows(parts);
                           }),
            1e-6);
  EXPECT_LT(gradient_error({r(3, 5)}, [](auto& t, const auto& v) { return t.slice_cols(v[0], 1, 3); }), 1e-6);
  EXPECT_LT(gradient_error({r(4, 3)}, [](auto& t, const auto& v) { return t.slice_rows(v[0], 1, 2); }), 1e-6);
  EXPECT_LT(gradient_error({r(4, 3)},
                           [](auto& t, const auto& v) {
                             const int rows[3] = {3, 0, 3};
                             return t.select_rows(v[0], rows);
                           }),
            1e-6);
  EXPECT_LT(gradient_error({r(1, 3)}, [](auto& t, const auto& v) { return t.repeat_rows(v[0], 4); }), 1e-6);
  EXPECT_LT(gradient_error({r(4, 3)}, [](auto& t, const auto& v) { return t.mean_rows(v[0]); }), 1e-6);
  EXPECT_LT(gradient_error({r(2, 3)}, [](auto& t, const auto& v) { return t.flatten(v[0]); }), 1e-6);
}

TEST_F(TapeGradients, Losses) {
  Mat targets(2, 3);
  targets << 0.0, 0.5, 1.0, 0.25, 1.0, 0.0;
  EXPECT_LT(gradient_error({r(2, 3)}, [&](auto& t, const auto& v) { return t.bce_with_logits(v[0], targets); }),
            1e-6);
  EXPECT_LT(gradient_error({r(1, 4), r(1, 4)},
                           [](auto& t, const auto& v) { return t.cosine_distance(v[0], v[1], 1e-8); }),
            1e-6);
  EXPECT_LT(gradient_error({r(1, 4), r(1, 4)}, [](auto& t, const auto& v) { return t.squared_distance(v[0], v[1]); }),
            1e-6);
}

TEST_F(TapeGradients, EmbeddingScatterAddsRepeatedIds) {
  const Mat table = r(5, 3);
  Mat sink = Mat::Zero(5, 3);
  Tape<double> tape;
  const int ids[3] = {2, 4, 2};
  const Var e = tape.embedding(table, &sink, ids);
  tape.backward(tape.sum(e));
  Mat expected = Mat::Zero(5, 3);
  expected.row(2).setConstant(2.0);
  expected.row(4).setConstant(1.0);
  EXPECT_EQ(sink, expected);
  EXPECT_EQ(tape.value(e).row(0), table.row(2));
}

TEST_F(TapeGradients, StopGradientBlocksFlow) {
  const Mat x = r(1, 4);
  Mat sink = Mat::Zero(1, 4);
  Tape<double> tape;
  const Var p = tape.param(x, &sink);
  tape.backward(tape.sum(tape.mul(tape.stop_gradient(p), tape.stop_gradient(p))));
  EXPECT_TRUE((sink.array() == 0.0).all());
}

TEST(TapeValues, CausalSoftmaxHasExactZerosAboveDiagonal) {
  std::mt19937_64 rng(5);
  Tape<double> tape;
  const Var s = tape.softmax_rows(tape.constant(random_matrix(rng, 4, 4, 3.0)), true);
  const Mat& p = tape.value(s);
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) EXPECT_EQ(p(i, j), 0.0);
    EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
  }
  EXPECT_EQ(p(0, 0), 1.0);
}

TEST(TapeValues, CosineDistanceRangeAndZeroVectors) {
  Tape<double> tape;
  Mat u(1, 3), c(1, 3);
  u << 1, 2, 3;
  c << -2, -4, -6;
  EXPECT_NEAR(tape.value(tape.cosine_distance(tape.constant(u), tape.constant(c), 1e-8))(0, 0), 2.0, 1e-12);
  EXPECT_NEAR(tape.value(tape.cosine_distance(tape.constant(u), tape.constant(-0.5 * c), 1e-8))(0, 0), 0.0, 1e-12);
  const Var zero = tape.cosine_distance(tape.constant(Mat::Zero(1, 3)), tape.constant(c), 1e-8);
  EXPECT_TRUE(std::isfinite(tape.value(zero)(0, 0)));
  EXPECT_NEAR(tape.value(zero)(0, 0), 1.0, 1e-12);
}

TEST(TapeValues, BceAtHalfIsLogTwo) {
  Tape<double> tape;
  const Var loss = tape.bce_with_logits(tape.constant(Mat::Zero(1, 1)), Mat::Ones(1, 1));
  EXPECT_NEAR(tape.value(loss)(0, 0), std::log(2.0), 1e-15);
}

TEST(TapeValues, BceIsStableForLargeLogits) {
  Tape<double> tape;
  Mat logits(1, 2);
  logits << 800.0, -800.0;
  Mat targets(1, 2);
  targets << 0.0, 1.0;
  const double v = tape.value(tape.bce_with_logits(tape.constant(logits), targets))(0, 0);
  EXPECT_NEAR(v, 1600.0, 1e-9);
}

}  // namespace
}  // namespace ocarm
