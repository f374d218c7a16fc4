// Copyright 2026 The rcp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>
#include <boost/random/normal_distribution.hpp>

#include "rcp/conformal.hpp"
#include "rcp/harness.hpp"
#include "rcp/planner.hpp"
#include "rcp/scores.hpp"
#include "rcp/shift.hpp"

namespace {

using namespace rcp;

std::vector<diffusion::Sample> toy_data() {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  std::vector<diffusion::Sample> d;
  for (int k = 0; k < 4000; ++k) {
    const double eta = 0.015 + 0.00001 * (k % 1500);
    d.push_back({{eta, double(1 + k % 79), double(1 + k % 10), double(k % 2)}, std::abs(0.1 * eta * (1 + n(rng)))});
  }
  return d;
}

const diffusion::DiffusionModel& case_study_model() {
  static const diffusion::DiffusionModel m = [] {
    auto cfg = harness::case_study_diffusion();
    cfg.encoder_epochs = 1;
    cfg.noise_epochs = 1;
    return diffusion::train(cfg, toy_data());
  }();
  return m;
}

conformal::ScoreSet uniform_scores(int K) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u;
  std::vector<double> v(K);
  for (auto& x : v) x = u(rng);
  return conformal::ScoreSet(v);
}

void BM_NormalDraws(benchmark::State& state) {
  Rng rng(3);
  boost::random::normal_distribution<float> normal;
  for (auto _ : state) {
    float acc = 0.0f;
    for (int k = 0; k < 1000; ++k) acc += normal(rng);
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_NormalDraws);

void BM_ReverseChainOneContext(benchmark::State& state) {
  const auto& m = case_study_model();
  diffusion::GridSampler sampler(m);
  std::vector<float> out(static_cast<std::size_t>(state.range(0)));
  Rng rng(4);
  for (auto _ : state) {
    sampler.sample({0.02, 20, 5, 1}, static_cast<int>(state.range(0)), rng, out.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ReverseChainOneContext)->Arg(500)->Arg(1000);

void BM_SyntheticScoreSet(benchmark::State& state) {
  const auto& m = case_study_model();
  const auto sigma = scores::SigmaTable::constant(10, 2, 0.01);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        scores::build_synthetic_scoreset(m, 0.02, 80, 10, 2, sigma, static_cast<int>(state.range(0)), 5));
  }
}
BENCHMARK(BM_SyntheticScoreSet)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_VanillaQuantile(benchmark::State& state) {
  const auto s = uniform_scores(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(conformal::vanilla_quantile(s, 0.1));
}
BENCHMARK(BM_VanillaQuantile)->Arg(500)->Arg(1000);

void BM_RobustQuantileLP(benchmark::State& state) {
  const auto s = uniform_scores(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(conformal::robust_quantile_lp(s, 0.1, 0.05, 0.0));
}
BENCHMARK(BM_RobustQuantileLP)->Arg(500)->Arg(1000);

void BM_WassersteinInf(benchmark::State& state) {
  const auto a = uniform_scores(1000), b = uniform_scores(120);
  for (auto _ : state) benchmark::DoNotOptimize(shift::wasserstein_inf_1d(a, b));
}
BENCHMARK(BM_WassersteinInf);

void BM_MPCSolve(benchmark::State& state) {
  planner::MPCProblem p;
  p.x0 = {0.0, -0.5, 0.0, 0.8};
  p.N = 2;
  for (int k = 1; k <= p.H; ++k) {
    p.centers.push_back({2.5 - 0.05 * k, -0.5});
    p.radii.push_back(0.2);
    p.centers.push_back({6.0 - 0.08 * k, 0.4});
    p.radii.push_back(0.2);
  }
  for (auto _ : state) benchmark::DoNotOptimize(planner::solve(p));
}
BENCHMARK(BM_MPCSolve)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
