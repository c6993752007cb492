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

#include "ocarm/params.hpp"

#include <cstring>

#include "ocarm/errors.hpp"

namespace ocarm {
namespace {

constexpr std::array<std::string_view, kNumGroups> kGroupNames = {
    "embeddings", "hae", "hae_proj", "sfe", "task_towers", "backbone"};

}  // namespace

std::string_view group_name(Group group) { return kGroupNames[static_cast<int>(group)]; }

std::optional<Group> parse_group(std::string_view name) {
  for (int i = 0; i < kNumGroups; ++i) {
    if (kGroupNames[i] == name) return static_cast<Group>(i);
  }
  return std::nullopt;
}

template <typename T>
int ParamStore<T>::add(Group group, std::string name, Mat value) {
  if (find(name) >= 0) throw ContractError("duplicate parameter name: " + name);
  entries_.push_back(Entry{group, std::move(name), std::move(value)});
  return size() - 1;
}

template <typename T>
int ParamStore<T>::find(std::string_view name) const {
  for (int i = 0; i < size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return -1;
}

template <typename T>
std::int64_t ParamStore<T>::count_parameters() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

template <typename T>
bool ParamStore<T>::all_finite() const {
  for (const auto& e : entries_) {
    if (!e.value.allFinite()) return false;
  }
  return true;
}

template <typename T>
bool ParamStore<T>::group_equals(const ParamStore& other, Group group) const {
  if (size() != other.size()) return false;
  for (int i = 0; i < size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.group != group) continue;
    if (b.group != group || a.name != b.name) return false;
    if (a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) return false;
    if (a.value.size() > 0 &&
        std::memcmp(a.value.data(), b.value.data(), sizeof(T) * static_cast<std::size_t>(a.value.size())) != 0) {
      return false;
    }
  }
  return true;
}

template <typename T>
bool ParamStore<T>::operator==(const ParamStore& other) const {
  if (size() != other.size()) return false;
  for (int g = 0; g < kNumGroups; ++g) {
    if (!group_equals(other, static_cast<Group>(g))) return false;
  }
  return true;
}

template <typename T>
GradientBuffer<T>::GradientBuffer(const ParamStore<T>& params, GroupSet trainable) {
  grads_.reserve(static_cast<std::size_t>(params.size()));
  active_.reserve(static_cast<std::size_t>(params.size()));
  for (int i = 0; i < params.size(); ++i) {
    const auto& v = params.value(i);
    grads_.push_back(Mat::Zero(v.rows(), v.cols()));
    active_.push_back(trainable.contains(params.group(i)));
  }
}

template <typename T>
void GradientBuffer<T>::set_zero() {
  for (auto& g : grads_) g.setZero();
}

template <typename T>
void GradientBuffer<T>::add(const GradientBuffer& other) {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (active_[i]) grads_[i] += other.grads_[i];
  }
}

template <typename T>
void GradientBuffer<T>::scale(T s) {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (active_[i]) grads_[i] *= s;
  }
}

template class ParamStore<float>;
template class ParamStore<double>;
template class GradientBuffer<float>;
template class GradientBuffer<double>;

}  // namespace ocarm
