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

#include "ocarm/optimizer.hpp"

#include <cmath>

namespace ocarm {

template <typename T>
Adam<T>::Adam(const ParamStore<T>& params, double step_size, double beta1, double beta2, double epsilon,
              double weight_decay)
    : step_size_(step_size), beta1_(beta1), beta2_(beta2), epsilon_(epsilon), weight_decay_(weight_decay) {
  for (int i = 0; i < params.size(); ++i) {
    const auto& w = params.value(i);
    m_.push_back(Matrix<T>::Zero(w.rows(), w.cols()));
    v_.push_back(Matrix<T>::Zero(w.rows(), w.cols()));
  }
}

template <typename T>
void Adam<T>::step(ParamStore<T>& params, const GradientBuffer<T>& grads) {
  ++steps_;
  const T b1 = static_cast<T>(beta1_);
  const T b2 = static_cast<T>(beta2_);
  const T correction1 = static_cast<T>(1.0 - std::pow(beta1_, static_cast<double>(steps_)));
  const T correction2 = static_cast<T>(1.0 - std::pow(beta2_, static_cast<double>(steps_)));
  const T lr = static_cast<T>(step_size_);
  const T eps = static_cast<T>(epsilon_);
  for (int i = 0; i < params.size(); ++i) {
    if (!grads.active(i)) continue;
    const auto& g = grads.grad(i);
    m_[i] = b1 * m_[i] + (T(1) - b1) * g;
    v_[i] = b2 * v_[i] + (T(1) - b2) * g.cwiseAbs2();
    auto& w = params.value(i);
    if (weight_decay_ > 0.0) w *= static_cast<T>(1.0 - step_size_ * weight_decay_);
    w.array() -= lr * (m_[i].array() / correction1) / ((v_[i].array() / correction2).sqrt() + eps);
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace ocarm
