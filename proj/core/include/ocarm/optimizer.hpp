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

#ifndef OCARM_OPTIMIZER_HPP_
#define OCARM_OPTIMIZER_HPP_

#include <cstdint>
#include <vector>

#include "ocarm/params.hpp"

namespace ocarm {

// Adam with bias correction and optional decoupled weight decay. Parameters whose gradient slot is inactive are
// never written, so frozen groups stay bit-identical.
template <typename T>
class Adam {
 public:
  Adam(const ParamStore<T>& params, double step_size, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8, double weight_decay = 0.0);

  void step(ParamStore<T>& params, const GradientBuffer<T>& grads);
  std::int64_t steps() const { return steps_; }

 private:
  double step_size_, beta1_, beta2_, epsilon_, weight_decay_;
  std::int64_t steps_ = 0;
  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace ocarm

#endif  // OCARM_OPTIMIZER_HPP_
