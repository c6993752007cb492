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

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ocarm/metrics.hpp"

namespace {

using namespace ocarm;

std::vector<ScoredSample> random_samples(std::size_t n, int groups) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> g(0, groups - 1);
  std::vector<ScoredSample> out(n);
  for (auto& s : out) {
    s.label = u(rng) < 0.4 ? 1 : 0;
    s.score = 0.3 * s.label + u(rng);
    s.group_id = g(rng);
  }
  return out;
}

void BM_Auc(benchmark::State& state) {
  const auto samples = random_samples(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(auc(samples));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Auc)->Arg(1 << 10)->Arg(1 << 16);

void BM_Gauc(benchmark::State& state) {
  const auto samples = random_samples(static_cast<std::size_t>(state.range(0)), static_cast<int>(state.range(0) / 4));
  for (auto _ : state) benchmark::DoNotOptimize(gauc(samples));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Gauc)->Arg(1 << 16);

}  // namespace

BENCHMARK_MAIN();
