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

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "planner_oracles.hpp"
#include "rcp/planner.hpp"

using namespace rcp::planner;
using rcp::Vec2;

namespace {

MPCProblem open_road() {
  MPCProblem p;
  p.x0 = {0.0, -0.5, 0.0, 0.8};
  p.H = 10;
  p.N = 0;
  return p;
}

// Obstacle driving toward the ego in its lane; the other lane is free.
MPCProblem head_on() {
  MPCProblem p = open_road();
  p.N = 1;
  for (int k = 1; k <= p.H; ++k) {
    p.centers.push_back({2.5 - 0.05 * k, -0.5});
    p.radii.push_back(0.2);
  }
  return p;
}

bool feasible(const MPCProblem& p, const std::vector<rcp::sim::EgoInput>& u) {
  for (double m : margins(p, rollout(p, u))) {
    if (m < 0.0) return false;
  }
  return true;
}

}  // namespace

TEST(Tightening, Fixtures) {
  EXPECT_NEAR(tighten_constraint({0, 0}, 0.5, 0.1, {1, 0}), 0.4, 1e-15);
  EXPECT_DOUBLE_EQ(tighten_constraint({2, 3}, 0.5, 0.1, {2, 3}), -0.6);
  EXPECT_DOUBLE_EQ(tighten_constraint({0, 0}, 0.0, 0.3, {3, 4}), 5.0 - 0.3);
}

TEST(Parametrization, RoundTripAndBounds) {
  MPCProblem p = open_road();
  std::vector<rcp::sim::EgoInput> u;
  for (int k = 0; k < p.H; ++k) u.push_back({0.5 * std::sin(k), 1.5 * std::cos(k)});
  const auto back = decode_inputs(p, encode_inputs(p, u));
  for (int k = 0; k < p.H; ++k) {
    EXPECT_NEAR(back[k].phi, u[k].phi, 1e-9);
    EXPECT_NEAR(back[k].a, u[k].a, 1e-9);
  }
  const auto wide = decode_inputs(p, std::vector<double>(2 * p.H, 50.0));
  for (const auto& w : wide) {
    EXPECT_LE(w.phi, p.limits.phi_max);
    EXPECT_LE(w.a, p.limits.a_max);
  }
}

TEST(Objective, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> lmu(1.0, 4.0);
  for (int rep = 0; rep < 100; ++rep) {
    const auto p = rcp::testing::random_problem(rng);
    std::vector<double> z(2 * p.H);
    for (auto& v : z) v = n(rng);
    const double mu = std::pow(10.0, lmu(rng));
    std::vector<double> g;
    const double f = penalized_objective(p, z, mu, 1e-3, &g);
    ASSERT_TRUE(std::isfinite(f));
    const auto fd = rcp::testing::fd_gradient(p, z, mu, 1e-3);
    EXPECT_LE(rcp::testing::relative_error(g, fd), 1e-4) << rep;
  }
}

TEST(Objective, CostMatchesUnpenalizedObjective) {
  const auto p = open_road();
  std::vector<double> z(2 * p.H, 0.3);
  EXPECT_NEAR(penalized_objective(p, z, 1e6, 0.0, nullptr), cost(p, decode_inputs(p, z)), 1e-12);
}

TEST(Solve, OpenRoadAcceleratesTowardGoal) {
  const auto p = open_road();
  const auto s = solve(p);
  EXPECT_EQ(s.status, Status::Optimal);
  EXPECT_GT(s.inputs[0].a, 0.9 * p.limits.a_max);
  EXPECT_NEAR(s.inputs[0].phi, 0.0, 1e-3);
  for (double m : margins(p, s.states)) EXPECT_GT(m, 0.0);
  const auto r = rcp::testing::resimulate(p, s);
  EXPECT_LE(r.state_error, 1e-9);
}

TEST(Solve, UnboundedRegionIsInfeasible) {
  auto p = head_on();
  p.radii[3] = std::numeric_limits<double>::infinity();
  const auto s = solve(p);
  EXPECT_EQ(s.status, Status::Infeasible);
}

TEST(Solve, BlockedCorridorIsInfeasible) {
  auto p = open_road();
  p.N = 1;
  for (int k = 1; k <= p.H; ++k) {
    p.centers.push_back({p.x0.x, 0.0});
    p.radii.push_back(1.5);
  }
  EXPECT_EQ(solve(p).status, Status::Infeasible);
}

TEST(Solve, HeadOnMovesToFreeLane) {
  const auto p = head_on();
  const auto s = solve(p);
  ASSERT_NE(s.status, Status::Infeasible);
  EXPECT_GT(s.states.back().y, p.x0.y);
  const auto r = rcp::testing::resimulate(p, s);
  EXPECT_GE(r.min_margin, -1e-6);
  EXPECT_LE(r.state_error, 1e-9);
}

TEST(Solve, OptimalSolutionsSurviveResimulation) {
  std::mt19937_64 rng(7);
  int optimal = 0;
  for (int rep = 0; rep < 30; ++rep) {
    const auto p = rcp::testing::random_problem(rng);
    const auto s = solve(p);
    ASSERT_EQ(s.states.size(), static_cast<std::size_t>(p.H) + 1);
    if (s.status != Status::Optimal) continue;
    ++optimal;
    const auto r = rcp::testing::resimulate(p, s);
    EXPECT_GE(r.min_margin, -1e-6) << rep;
    EXPECT_LE(r.state_error, 1e-9) << rep;
  }
  EXPECT_GT(optimal, 0);
}

TEST(Solve, WarmStartKeepsQuality) {
  const auto p = head_on();
  const auto cold = solve(p);
  auto next = p;
  next.x0 = cold.states[1];
  const auto warm = shift_solution(cold, next);
  ASSERT_EQ(warm.inputs.size(), cold.inputs.size());
  EXPECT_EQ(warm.inputs.back().a, cold.inputs.back().a);
  EXPECT_EQ(warm.inputs[0].phi, cold.inputs[1].phi);
  const auto s = solve(next, &warm);
  EXPECT_NE(s.status, Status::Infeasible);
}

TEST(Fallback, BrakesToStandstill) {
  auto p = open_road();
  p.x0.v = 1.0;
  const auto s = fallback(p);
  EXPECT_TRUE(s.fallback);
  EXPECT_EQ(s.status, Status::Infeasible);
  for (const auto& u : s.inputs) {
    EXPECT_DOUBLE_EQ(u.phi, 0.0);
    EXPECT_DOUBLE_EQ(u.a, -p.limits.a_max);
  }
  EXPECT_GT(s.states[3].v, 0.0);
  EXPECT_DOUBLE_EQ(s.states[4].v, 0.0);
  p.x0.v = 0.0;
  const auto still = fallback(p);
  for (const auto& x : still.states) {
    EXPECT_DOUBLE_EQ(x.x, p.x0.x);
    EXPECT_DOUBLE_EQ(x.y, p.x0.y);
  }
  EXPECT_EQ(to_json(s)["fallback"], true);
}

TEST(Conservatism, LargerRadiiShrinkFeasibleSet) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 0.4);
  const double phis[] = {-0.6, 0.0, 0.6}, accs[] = {-2.0, 0.0, 2.0};
  for (int rep = 0; rep < 10; ++rep) {
    const int H = 1 + rep % 3;
    auto small = rcp::testing::random_problem(rng, H, 2);
    small.x0 = {0.0, -0.5, 0.0, 1.0};
    for (auto& c : small.centers) c = {c.x - small.x0.x + 1.0, c.y};
    auto large = small;
    for (auto& r : large.radii) r += u(rng);
    int total = 1;
    for (int k = 0; k < H; ++k) total *= 9;
    int fs = 0, fl = 0;
    for (int code = 0; code < total; ++code) {
      std::vector<rcp::sim::EgoInput> seq;
      int c = code;
      for (int k = 0; k < H; ++k, c /= 9) seq.push_back({phis[c % 9 / 3], accs[c % 3]});
      const bool a = feasible(small, seq), b = feasible(large, seq);
      EXPECT_TRUE(a || !b) << rep << " " << code;
      fs += a;
      fl += b;
    }
    EXPECT_GE(fs, fl);
  }
}
