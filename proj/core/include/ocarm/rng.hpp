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

#ifndef OCARM_RNG_HPP_
#define OCARM_RNG_HPP_

#include <cstdint>
#include <random>
#include <vector>

namespace ocarm {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Stream keyed by (seed, key, domain). Different domains keep e.g. the
// per-user generator and the trend table from sharing a sequence.
inline Rng make_stream(std::uint64_t seed, std::uint64_t key, std::uint64_t domain = 0) {
  return Rng(splitmix64(splitmix64(seed ^ splitmix64(domain)) + key));
}

// Symmetric Dirichlet draw through normalized gammas.
inline std::vector<double> sample_dirichlet(Rng& rng, std::size_t dim, double concentration) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> out(dim);
  double total = 0.0;
  for (auto& v : out) {
    v = gamma(rng);
    total += v;
  }
  if (total <= 0.0) {
    std::uniform_int_distribution<std::size_t> pick(0, dim - 1);
    out.assign(dim, 0.0);
    out[pick(rng)] = 1.0;
    return out;
  }
  for (auto& v : out) v /= total;
  return out;
}

inline double sample_beta(Rng& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return (x + y) > 0.0 ? x / (x + y) : 0.5;
}

// Index draw from unnormalized non-negative weights.
inline std::size_t sample_categorical(Rng& rng, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  std::uniform_real_distribution<double> u(0.0, total);
  double r = u(rng);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    r -= weights[i];
    if (r < 0.0) return i;
  }
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return weights.size() - 1;
}

}  // namespace ocarm

#endif  // OCARM_RNG_HPP_
