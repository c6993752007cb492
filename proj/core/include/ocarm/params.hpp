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

#ifndef OCARM_PARAMS_HPP_
#define OCARM_PARAMS_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ocarm/autograd.hpp"

namespace ocarm {

// Parameter groups; freezing and checkpoint compatibility work per group.
enum class Group : int { kEmbeddings = 0, kHae, kHaeProj, kSfe, kTaskTowers, kBackbone };
inline constexpr int kNumGroups = 6;

std::string_view group_name(Group group);
std::optional<Group> parse_group(std::string_view name);

// Set of groups, indexed by Group.
class GroupSet {
 public:
  GroupSet() = default;
  GroupSet(std::initializer_list<Group> groups) {
    for (Group g : groups) insert(g);
  }
  static GroupSet all() {
    GroupSet s;
    s.bits_.fill(true);
    return s;
  }
  void insert(Group g) { bits_[static_cast<int>(g)] = true; }
  void erase(Group g) { bits_[static_cast<int>(g)] = false; }
  bool contains(Group g) const { return bits_[static_cast<int>(g)]; }
  bool operator==(const GroupSet&) const = default;

 private:
  std::array<bool, kNumGroups> bits_{};
};

// Named arrays partitioned into groups. Ids are dense and stable for a given
// construction order, which the model relies on.
template <typename T>
class ParamStore {
 public:
  using Mat = Matrix<T>;

  struct Entry {
    Group group;
    std::string name;  // unique within the store
    Mat value;
  };

  int add(Group group, std::string name, Mat value);
  int size() const { return static_cast<int>(entries_.size()); }
  const Entry& entry(int id) const { return entries_[id]; }
  Mat& value(int id) { return entries_[id].value; }
  const Mat& value(int id) const { return entries_[id].value; }
  Group group(int id) const { return entries_[id].group; }
  const std::string& name(int id) const { return entries_[id].name; }
  // -1 when absent.
  int find(std::string_view name) const;
  std::int64_t count_parameters() const;
  bool all_finite() const;

  // Bitwise equality of every array in `group`.
  bool group_equals(const ParamStore& other, Group group) const;
  bool operator==(const ParamStore& other) const;

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) out.add(e.group, e.name, e.value.template cast<U>());
    return out;
  }

 private:
  std::vector<Entry> entries_;
};

// Per-parameter gradient accumulators mirroring a ParamStore. Groups outside
// `trainable` get no sink, so tapes treat them as constants.
template <typename T>
class GradientBuffer {
 public:
  using Mat = Matrix<T>;

  GradientBuffer(const ParamStore<T>& params, GroupSet trainable);
  Mat* sink(int id) { return active_[id] ? &grads_[id] : nullptr; }
  const Mat& grad(int id) const { return grads_[id]; }
  Mat& grad(int id) { return grads_[id]; }
  bool active(int id) const { return active_[id]; }
  int size() const { return static_cast<int>(grads_.size()); }
  void set_zero();
  // this += other, parameter by parameter in id order.
  void add(const GradientBuffer& other);
  void scale(T s);

 private:
  std::vector<Mat> grads_;
  std::vector<bool> active_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class GradientBuffer<float>;
extern template class GradientBuffer<double>;

}  // namespace ocarm

#endif  // OCARM_PARAMS_HPP_
