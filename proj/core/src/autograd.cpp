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

#include "ocarm/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "ocarm/errors.hpp"

namespace ocarm {

template <typename T>
Var Tape<T>::push(Mat value, bool requires_grad, std::function<void(Tape&, const Mat&)> backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
template <typename Expr>
void Tape<T>::accumulate(int index, const Expr& g) {
  Node& node = nodes_[index];
  if (!node.requires_grad) return;
  if (node.has_grad) {
    node.grad += g;
  } else {
    node.grad = g;
    node.has_grad = true;
  }
}

template <typename T>
bool Tape<T>::any_requires(std::initializer_list<Var> vars) const {
  for (Var v : vars) {
    if (nodes_[v.index].requires_grad) return true;
  }
  return false;
}

template <typename T>
const typename Tape<T>::Mat& Tape<T>::value(Var v) const {
  const Node& node = nodes_[v.index];
  return node.ref != nullptr ? *node.ref : node.value;
}

template <typename T>
Var Tape<T>::constant(Mat value) {
  return push(std::move(value), false, nullptr);
}

template <typename T>
Var Tape<T>::param(const Mat& value, Mat* grad_sink) {
  Node node;
  node.ref = &value;
  node.sink = grad_sink;
  node.requires_grad = grad_sink != nullptr;
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Tape<T>::embedding(const Mat& table, Mat* grad_sink, std::span<const int> ids) {
  Mat out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
  std::vector<int> rows(ids.begin(), ids.end());
  return push(std::move(out), grad_sink != nullptr,
              [grad_sink, rows = std::move(rows)](Tape&, const Mat& g) {
                for (std::size_t i = 0; i < rows.size(); ++i) {
                  grad_sink->row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
                }
              });
}

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.cols() != bv.rows()) throw ContractError("matmul: inner dimensions differ");
  Mat out(av.rows(), bv.cols());
  out.noalias() = av * bv;
  return push(std::move(out), any_requires({a, b}), [a, b](Tape& t, const Mat& g) {
    if (t.requires_grad(a)) t.accumulate(a.index, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b.index, t.value(a).transpose() * g);
  });
}

template <typename T>
Var Tape<T>::matmul_bt(Var a, Var b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.cols() != bv.cols()) throw ContractError("matmul_bt: widths differ");
  Mat out(av.rows(), bv.rows());
  out.noalias() = av * bv.transpose();
  return push(std::move(out), any_requires({a, b}), [a, b](Tape& t, const Mat& g) {
    if (t.requires_grad(a)) t.accumulate(a.index, g * t.value(b));
    if (t.requires_grad(b)) t.accumulate(b.index, g.transpose() * t.value(a));
  });
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) throw ContractError("add: shapes differ");
  return push(av + bv, any_requires({a, b}), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a.index, g);
    t.accumulate(b.index, g);
  });
}

template <typename T>
Var Tape<T>::add_n(std::span<const Var> terms) {
  if (terms.empty()) throw ContractError("add_n: no terms");
  Mat out = value(terms[0]);
  bool req = requires_grad(terms[0]);
  for (std::size_t i = 1; i < terms.size(); ++i) {
    const Mat& v = value(terms[i]);
    if (v.rows() != out.rows() || v.cols() != out.cols()) throw ContractError("add_n: shapes differ");
    out += v;
    req = req || requires_grad(terms[i]);
  }
  std::vector<Var> parts(terms.begin(), terms.end());
  return push(std::move(out), req, [parts = std::move(parts)](Tape& t, const Mat& g) {
    for (Var p : parts) t.accumulate(p.index, g);
  });
}

template <typename T>
Var Tape<T>::add_row(Var a, Var row) {
  const Mat& av = value(a);
  const Mat& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw ContractError("add_row: row shape mismatch");
  Mat out = av;
  out.rowwise() += rv.row(0);
  return push(std::move(out), any_requires({a, row}), [a, row](Tape& t, const Mat& g) {
    t.accumulate(a.index, g);
    if (t.requires_grad(row)) t.accumulate(row.index, g.colwise().sum());
  });
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) throw ContractError("sub: shapes differ");
  return push(av - bv, any_requires({a, b}), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a.index, g);
    if (t.requires_grad(b)) t.accumulate(b.index, -g);
  });
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) throw ContractError("mul: shapes differ");
  return push(av.cwiseProduct(bv), any_requires({a, b}), [a, b](Tape& t, const Mat& g) {
    if (t.requires_grad(a)) t.accumulate(a.index, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b.index, g.cwiseProduct(t.value(a)));
  });
}

template <typename T>
Var Tape<T>::scale(Var a, T s) {
  return push(value(a) * s, requires_grad(a), [a, s](Tape& t, const Mat& g) {
    t.accumulate(a.index, g * s);
  });
}

template <typename T>
Var Tape<T>::relu(Var a) {
  Mat out = value(a).cwiseMax(T(0));
  const bool req = requires_grad(a);
  Var result = push(std::move(out), req, nullptr);
  if (req) {
    nodes_[result.index].backward = [a, result](Tape& t, const Mat& g) {
      const Mat& y = t.value(result);
      t.accumulate(a.index, (y.array() > T(0)).select(g.array(), T(0)).matrix());
    };
  }
  return result;
}

template <typename T>
Var Tape<T>::sigmoid(Var a) {
  const Mat& av = value(a);
  Mat out = av.unaryExpr([](T x) { return T(1) / (T(1) + std::exp(-x)); });
  const bool req = requires_grad(a);
  Var result = push(std::move(out), req, nullptr);
  if (req) {
    nodes_[result.index].backward = [a, result](Tape& t, const Mat& g) {
      const Mat& y = t.value(result);
      t.accumulate(a.index, g.cwiseProduct(y.cwiseProduct((T(1) - y.array()).matrix())));
    };
  }
  return result;
}

template <typename T>
Var Tape<T>::softmax_rows(Var a, bool causal) {
  const Mat& av = value(a);
  Mat out = Mat::Zero(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    const Eigen::Index limit = causal ? std::min<Eigen::Index>(i + 1, av.cols()) : av.cols();
    if (limit == 0) continue;
    const T peak = av.row(i).head(limit).maxCoeff();
    T total = T(0);
    for (Eigen::Index j = 0; j < limit; ++j) {
      out(i, j) = std::exp(av(i, j) - peak);
      total += out(i, j);
    }
    for (Eigen::Index j = 0; j < limit; ++j) out(i, j) /= total;
  }
  const bool req = requires_grad(a);
  Var result = push(std::move(out), req, nullptr);
  if (req) {
    nodes_[result.index].backward = [a, result](Tape& t, const Mat& g) {
      const Mat& y = t.value(result);
      Mat dx(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const T dot = y.row(i).dot(g.row(i));
        dx.row(i) = y.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
      }
      t.accumulate(a.index, dx);
    };
  }
  return result;
}

template <typename T>
Var Tape<T>::layer_norm_rows(Var x, Var gamma, Var beta, T eps) {
  const Mat& xv = value(x);
  const Mat& gv = value(gamma);
  const Mat& bv = value(beta);
  if (gv.rows() != 1 || gv.cols() != xv.cols() || bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw ContractError("layer_norm_rows: gamma/beta must be 1 x width");
  }
  const Eigen::Index n = xv.cols();
  Mat normalized(xv.rows(), n);
  Mat inv_std(xv.rows(), 1);
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const T mean = xv.row(i).mean();
    const auto centered = (xv.row(i).array() - mean).matrix();
    const T var = centered.squaredNorm() / static_cast<T>(n);
    inv_std(i, 0) = T(1) / std::sqrt(var + eps);
    normalized.row(i) = centered * inv_std(i, 0);
  }
  Mat out = normalized;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = normalized.row(i).cwiseProduct(gv.row(0)) + bv.row(0);
  }
  return push(std::move(out), any_requires({x, gamma, beta}),
              [x, gamma, beta, normalized = std::move(normalized), inv_std = std::move(inv_std)](
                  Tape& t, const Mat& g) {
                const Mat& gv = t.value(gamma);
                if (t.requires_grad(gamma)) t.accumulate(gamma.index, g.cwiseProduct(normalized).colwise().sum());
                if (t.requires_grad(beta)) t.accumulate(beta.index, g.colwise().sum());
                if (t.requires_grad(x)) {
                  const T n = static_cast<T>(g.cols());
                  Mat dx(g.rows(), g.cols());
                  for (Eigen::Index i = 0; i < g.rows(); ++i) {
                    const auto dxhat = g.row(i).cwiseProduct(gv.row(0));
                    const T mean_d = dxhat.sum() / n;
                    const T mean_dx = dxhat.dot(normalized.row(i)) / n;
                    dx.row(i) = ((dxhat.array() - mean_d - normalized.row(i).array() * mean_dx) *
                                 inv_std(i, 0))
                                    .matrix();
                  }
                  t.accumulate(x.index, dx);
                }
              });
}

template <typename T>
Var Tape<T>::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  const Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool req = false;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw ContractError("concat_cols: row counts differ");
    cols += value(p).cols();
    req = req || requires_grad(p);
  }
  Mat out(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    const Mat& v = value(p);
    if (v.cols() > 0) out.middleCols(offset, v.cols()) = v;
    offset += v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(std::move(out), req, [inputs = std::move(inputs)](Tape& t, const Mat& g) {
    Eigen::Index offset = 0;
    for (Var p : inputs) {
      const Eigen::Index c = t.value(p).cols();
      if (t.requires_grad(p)) t.accumulate(p.index, g.middleCols(offset, c));
      offset += c;
    }
  });
}

template <typename T>
Var Tape<T>::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  const Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool req = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw ContractError("concat_rows: column counts differ");
    rows += value(p).rows();
    req = req || requires_grad(p);
  }
  Mat out(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    const Mat& v = value(p);
    if (v.rows() > 0) out.middleRows(offset, v.rows()) = v;
    offset += v.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(std::move(out), req, [inputs = std::move(inputs)](Tape& t, const Mat& g) {
    Eigen::Index offset = 0;
    for (Var p : inputs) {
      const Eigen::Index r = t.value(p).rows();
      if (t.requires_grad(p)) t.accumulate(p.index, g.middleRows(offset, r));
      offset += r;
    }
  });
}

template <typename T>
Var Tape<T>::slice_cols(Var a, int start, int count) {
  const Mat& av = value(a);
  if (start < 0 || count < 0 || start + count > av.cols()) throw ContractError("slice_cols: out of range");
  Mat out = av.middleCols(start, count);
  return push(std::move(out), requires_grad(a), [a, start, count](Tape& t, const Mat& g) {
    const Mat& av = t.value(a);
    Mat full = Mat::Zero(av.rows(), av.cols());
    full.middleCols(start, count) = g;
    t.accumulate(a.index, full);
  });
}

template <typename T>
Var Tape<T>::slice_rows(Var a, int start, int count) {
  const Mat& av = value(a);
  if (start < 0 || count < 0 || start + count > av.rows()) throw ContractError("slice_rows: out of range");
  Mat out = av.middleRows(start, count);
  return push(std::move(out), requires_grad(a), [a, start, count](Tape& t, const Mat& g) {
    const Mat& av = t.value(a);
    Mat full = Mat::Zero(av.rows(), av.cols());
    full.middleRows(start, count) = g;
    t.accumulate(a.index, full);
  });
}

template <typename T>
Var Tape<T>::select_rows(Var a, std::span<const int> rows) {
  const Mat& av = value(a);
  Mat out(static_cast<Eigen::Index>(rows.size()), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= av.rows()) throw ContractError("select_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = av.row(rows[i]);
  }
  std::vector<int> picked(rows.begin(), rows.end());
  return push(std::move(out), requires_grad(a), [a, picked = std::move(picked)](Tape& t, const Mat& g) {
    const Mat& av = t.value(a);
    Mat full = Mat::Zero(av.rows(), av.cols());
    for (std::size_t i = 0; i < picked.size(); ++i) full.row(picked[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(a.index, full);
  });
}

template <typename T>
Var Tape<T>::repeat_rows(Var row, int n) {
  const Mat& rv = value(row);
  if (rv.rows() != 1) throw ContractError("repeat_rows: input must be a single row");
  Mat out = rv.replicate(n, 1);
  return push(std::move(out), requires_grad(row), [row](Tape& t, const Mat& g) {
    t.accumulate(row.index, g.colwise().sum());
  });
}

template <typename T>
Var Tape<T>::mean_rows(Var a) {
  const Mat& av = value(a);
  if (av.rows() == 0) throw ContractError("mean_rows: empty input");
  Mat out = av.colwise().mean();
  return push(std::move(out), requires_grad(a), [a](Tape& t, const Mat& g) {
    const Eigen::Index n = t.value(a).rows();
    t.accumulate(a.index, (g / static_cast<T>(n)).replicate(n, 1));
  });
}

template <typename T>
Var Tape<T>::flatten(Var a) {
  const Mat& av = value(a);
  const Eigen::Index rows = av.rows();
  const Eigen::Index cols = av.cols();
  Mat out = Eigen::Map<const Mat>(av.data(), 1, rows * cols);
  return push(std::move(out), requires_grad(a), [a, rows, cols](Tape& t, const Mat& g) {
    t.accumulate(a.index, Eigen::Map<const Mat>(g.data(), rows, cols));
  });
}

template <typename T>
Var Tape<T>::sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = value(a).sum();
  return push(std::move(out), requires_grad(a), [a](Tape& t, const Mat& g) {
    const Mat& av = t.value(a);
    t.accumulate(a.index, Mat::Constant(av.rows(), av.cols(), g(0, 0)));
  });
}

template <typename T>
Var Tape<T>::bce_with_logits(Var logits, const Mat& targets) {
  const Mat& z = value(logits);
  if (z.rows() != targets.rows() || z.cols() != targets.cols()) {
    throw ContractError("bce_with_logits: target shape mismatch");
  }
  T total = T(0);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const T x = z.data()[i];
    const T softplus = std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
    total += softplus - targets.data()[i] * x;
  }
  Mat out(1, 1);
  out(0, 0) = total;
  return push(std::move(out), requires_grad(logits), [logits, targets](Tape& t, const Mat& g) {
    const Mat& z = t.value(logits);
    Mat dz(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const T p = T(1) / (T(1) + std::exp(-z.data()[i]));
      dz.data()[i] = (p - targets.data()[i]) * g(0, 0);
    }
    t.accumulate(logits.index, dz);
  });
}

template <typename T>
Var Tape<T>::cosine_distance(Var u, Var c, T eps) {
  const Mat& uv = value(u);
  const Mat& cv = value(c);
  if (uv.rows() != cv.rows() || uv.cols() != cv.cols()) throw ContractError("cosine_distance: shapes differ");
  const T nu = std::max(uv.norm(), eps);
  const T nc = std::max(cv.norm(), eps);
  const T dot = uv.cwiseProduct(cv).sum();
  Mat out(1, 1);
  out(0, 0) = T(1) - dot / (nu * nc);
  return push(std::move(out), any_requires({u, c}), [u, c, eps](Tape& t, const Mat& g) {
    const Mat& uv = t.value(u);
    const Mat& cv = t.value(c);
    const T raw_u = uv.norm();
    const T raw_c = cv.norm();
    const T nu = std::max(raw_u, eps);
    const T nc = std::max(raw_c, eps);
    const T dot = uv.cwiseProduct(cv).sum();
    const T scale = -g(0, 0) / (nu * nc);
    if (t.requires_grad(u)) {
      Mat du = cv * scale;
      if (raw_u > eps) du -= uv * (scale * dot / (nu * nu));
      t.accumulate(u.index, du);
    }
    if (t.requires_grad(c)) {
      Mat dc = uv * scale;
      if (raw_c > eps) dc -= cv * (scale * dot / (nc * nc));
      t.accumulate(c.index, dc);
    }
  });
}

template <typename T>
Var Tape<T>::squared_distance(Var u, Var c) {
  const Mat& uv = value(u);
  const Mat& cv = value(c);
  if (uv.rows() != cv.rows() || uv.cols() != cv.cols()) throw ContractError("squared_distance: shapes differ");
  Mat out(1, 1);
  out(0, 0) = (uv - cv).squaredNorm();
  return push(std::move(out), any_requires({u, c}), [u, c](Tape& t, const Mat& g) {
    Mat diff = (t.value(u) - t.value(c)) * (T(2) * g(0, 0));
    if (t.requires_grad(c)) t.accumulate(c.index, -diff);
    t.accumulate(u.index, diff);
  });
}

template <typename T>
Var Tape<T>::stop_gradient(Var a) {
  return constant(value(a));
}

template <typename T>
void Tape<T>::backward(Var root, T seed) {
  const Mat& rv = value(root);
  if (rv.rows() != 1 || rv.cols() != 1) throw ContractError("backward: root must be 1 x 1");
  if (!nodes_[root.index].requires_grad) return;
  accumulate(root.index, Mat::Constant(1, 1, seed));
  for (int i = root.index; i >= 0; --i) {
    Node& node = nodes_[i];
    if (!node.has_grad) continue;
    if (node.backward) node.backward(*this, node.grad);
    if (node.sink != nullptr) *node.sink += node.grad;
  }
}

template <typename T>
typename Tape<T>::Mat Tape<T>::gradient(Var v) const {
  const Node& node = nodes_[v.index];
  if (node.has_grad) return node.grad;
  const Mat& val = value(v);
  return Mat::Zero(val.rows(), val.cols());
}

template class Tape<float>;
template class Tape<double>;

}  // namespace ocarm
