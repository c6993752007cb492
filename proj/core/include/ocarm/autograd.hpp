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

#ifndef OCARM_AUTOGRAD_HPP_
#define OCARM_AUTOGRAD_HPP_

#include <Eigen/Core>

#include <functional>
#include <span>
#include <vector>

namespace ocarm {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Handle to a node on a Tape. Only meaningful for the tape that issued it.
struct Var {
  int index = -1;
  bool valid() const { return index >= 0; }
};

// Reverse-mode tape over dense row-major matrices.
//
// Parameters enter through param()/embedding() together with an optional
// gradient sink; a null sink makes the parameter a constant for this tape.
// Gradients reach sinks when backward() runs. Nodes never alias their
// inputs, so a Tape is safe to destroy in any order relative to the
// parameter storage once backward() has returned.
template <typename T>
class Tape {
 public:
  using Mat = Matrix<T>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  Var constant(Mat value);
  Var zeros(int rows, int cols) { return constant(Mat::Zero(rows, cols)); }
  // `value` must outlive the tape.
  Var param(const Mat& value, Mat* grad_sink);
  // Rows `ids` of `table`; backward scatters into the matching sink rows.
  Var embedding(const Mat& table, Mat* grad_sink, std::span<const int> ids);

  const Mat& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.index].requires_grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  Var matmul(Var a, Var b);
  Var matmul_bt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var add_n(std::span<const Var> terms);
  Var add_row(Var a, Var row);  // row (1 x C) broadcast over every row of a
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, T s);
  Var relu(Var a);
  Var sigmoid(Var a);
  // Row-wise softmax. With `causal`, entry (i, j>i) is exactly zero.
  Var softmax_rows(Var a, bool causal);
  Var layer_norm_rows(Var x, Var gamma, Var beta, T eps);
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  Var slice_cols(Var a, int start, int count);
  Var slice_rows(Var a, int start, int count);
  Var select_rows(Var a, std::span<const int> rows);
  Var repeat_rows(Var row, int n);
  Var mean_rows(Var a);  // 1 x C; a must have at least one row
  Var flatten(Var a);    // 1 x (rows*cols), row-major order
  Var sum(Var a);        // 1 x 1
  // Elementwise soft-target BCE on logits, summed: sum softplus(z) - y z.
  Var bce_with_logits(Var logits, const Mat& targets);
  // 1 - <u,c> / (max(|u|,eps) max(|c|,eps)), as 1 x 1.
  Var cosine_distance(Var u, Var c, T eps);
  Var squared_distance(Var u, Var c);
  Var stop_gradient(Var a);

  // Runs reverse accumulation from a 1 x 1 root with seed `seed`.
  void backward(Var root, T seed = T(1));
  // Gradient held by a node after backward(); zero matrix if none reached it.
  Mat gradient(Var v) const;

 private:
  struct Node {
    Mat value;
    const Mat* ref = nullptr;
    Mat grad;
    bool has_grad = false;
    bool requires_grad = false;
    Mat* sink = nullptr;
    std::function<void(Tape&, const Mat&)> backward;
  };

  Var push(Mat value, bool requires_grad, std::function<void(Tape&, const Mat&)> backward);
  template <typename Expr>
  void accumulate(int index, const Expr& g);
  bool any_requires(std::initializer_list<Var> vars) const;

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace ocarm

#endif  // OCARM_AUTOGRAD_HPP_
