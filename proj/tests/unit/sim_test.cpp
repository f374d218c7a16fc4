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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "rcp/sim.hpp"

using namespace rcp::sim;
using rcp::Vec2;

namespace {

constexpr double kPi = 3.14159265358979323846;

double mean_eta(int k, int episodes) {
  const auto cfg = make_environment(k);
  double acc = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const auto env = sample_environment(cfg, rcp::derive_seed(77, {1, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(e)}));
    const auto traj = simulate_obstacles(cfg, env, 8, rcp::derive_seed(77, {2, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(e)}));
    acc += estimate_nuisance(traj, 8, cfg.dt);
  }
  return acc / episodes;
}

}  // namespace

TEST(Ego, StraightLine) {
  const auto n = ego_step({0, 0, 0, 1}, {0, 0}, 0.125, 0.5);
  EXPECT_DOUBLE_EQ(n.x, 0.125);
  EXPECT_DOUBLE_EQ(n.y, 0.0);
  EXPECT_DOUBLE_EQ(n.theta, 0.0);
  EXPECT_DOUBLE_EQ(n.v, 1.0);
}

TEST(Ego, ZeroSpeedHoldsPose) {
  const auto n = ego_step({1, 2, 0.3, 0}, {0.6, 0}, 0.125, 0.5);
  EXPECT_DOUBLE_EQ(n.x, 1.0);
  EXPECT_DOUBLE_EQ(n.y, 2.0);
  EXPECT_DOUBLE_EQ(n.theta, 0.3);
}

TEST(Ego, QuarterTurnHeading) {
  const auto n = ego_step({0, 0, kPi / 2, 2}, {0, 0}, 0.125, 0.5);
  EXPECT_NEAR(n.x, 0.0, 1e-12);
  EXPECT_NEAR(n.y, 0.25, 1e-12);
}

TEST(Ego, SteeringAndAccelerationUpdate) {
  const auto n = ego_step({0, 0, 0.1, 1.2}, {0.2, 1.0}, 0.125, 0.5);
  EXPECT_NEAR(n.theta, 0.1 + 0.125 * (1.2 / 0.5) * std::tan(0.2), 1e-15);
  EXPECT_NEAR(n.v, 1.325, 1e-15);
}

TEST(Ego, SpeedStaysWithinClamps) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> phi(-0.6, 0.6), a(-2, 2);
  EgoState s{0, 0, 0, 1};
  for (int k = 0; k < 5000; ++k) {
    s = ego_step(s, {phi(rng), a(rng)}, 0.125, 0.5, 0.0, 2.0);
    ASSERT_GE(s.v, 0.0);
    ASSERT_LE(s.v, 2.0);
  }
}

TEST(Environment, IntervalsFollowIndex) {
  const auto e1 = make_environment(1);
  EXPECT_NEAR(e1.goal_y_interval[0].first, -0.06, 1e-15);
  EXPECT_NEAR(e1.goal_y_interval[0].second, -0.03, 1e-15);
  EXPECT_NEAR(e1.goal_y_interval[1].first, 0.03, 1e-15);
  EXPECT_NEAR(e1.goal_y_interval[1].second, 0.06, 1e-15);
  const auto e10 = make_environment(10);
  EXPECT_NEAR(e10.goal_y_interval[0].first, 0.21, 1e-15);
  EXPECT_NEAR(e10.goal_y_interval[0].second, 0.24, 1e-15);
  EXPECT_EQ(e10.speed_interval, (std::pair<double, double>{0.55, 1.05}));
  const auto tr = make_environment(0);
  EXPECT_DOUBLE_EQ(tr.start[0].x, 20.0);
  EXPECT_DOUBLE_EQ(tr.start[0].y, -0.5);
  EXPECT_DOUBLE_EQ(tr.start[1].x, 30.0);
  EXPECT_DOUBLE_EQ(tr.goal_x[0], 0.0);
  EXPECT_DOUBLE_EQ(tr.goal_x[1], 10.0);
  EXPECT_EQ(tr.speed_interval, (std::pair<double, double>{0.5, 1.0}));
  EXPECT_EQ(tr.name(), "train");
  EXPECT_EQ(e10.name(), "E10");
  EXPECT_THROW(make_environment(11), std::invalid_argument);
}

TEST(Environment, DrawsStayInIntervals) {
  for (int k = 0; k <= 10; ++k) {
    const auto cfg = make_environment(k);
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto env = sample_environment(cfg, s);
      for (int i = 0; i < 2; ++i) {
        EXPECT_GE(env.goals[i].y, cfg.goal_y_interval[i].first);
        EXPECT_LE(env.goals[i].y, cfg.goal_y_interval[i].second);
        EXPECT_DOUBLE_EQ(env.goals[i].x, cfg.goal_x[i]);
        EXPECT_GE(env.speeds[i], cfg.speed_interval.first);
        EXPECT_LE(env.speeds[i], cfg.speed_interval.second);
      }
    }
  }
}

TEST(Obstacle, StraightAdvanceAndAbsorbingGoal) {
  const auto n = obstacle_step({{0, 0}, {0, 0}, false}, {10, 0}, 0.8, {}, 0.125, 0.3, 3.0);
  EXPECT_NEAR(n.p.x, 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(n.p.y, 0.0);
  const auto g = obstacle_step({{9.95, 0}, {0.8, 0}, false}, {10, 0}, 0.8, {}, 0.125, 0.3, 3.0);
  EXPECT_TRUE(g.arrived);
  EXPECT_DOUBLE_EQ(g.p.x, 10.0);
  const auto s = obstacle_step(g, {10, 0}, 0.8, {}, 0.125, 0.3, 3.0);
  EXPECT_DOUBLE_EQ(s.p.x, 10.0);
  EXPECT_DOUBLE_EQ(s.v.x, 0.0);
}

TEST(Obstacle, HeadOnPairSeparates) {
  ObstacleState a{{0, 0}, {0.8, 0}, false}, b{{2.5, 0}, {-0.8, 0}, false};
  double sep = 0.0, min_dist = 2.5;
  bool passed = false;
  for (int t = 0; t < 50; ++t) {
    const auto na = obstacle_step(a, {10, 0}, 0.8, {b}, 0.125, 0.3, 3.0);
    const auto nb = obstacle_step(b, {-6, 0}, 0.8, {a}, 0.125, 0.3, 3.0);
    a = na;
    b = nb;
    const double lat = std::abs(a.p.y - b.p.y);
    min_dist = std::min(min_dist, rcp::norm(a.p - b.p));
    if (!passed) {
      EXPECT_GT(lat, 0.0) << t;
      EXPECT_GE(lat, sep) << t;
      sep = lat;
    }
    passed = passed || a.p.x > b.p.x;
  }
  EXPECT_TRUE(passed);
  EXPECT_GT(min_dist, 0.2);
}

TEST(Nuisance, Fixtures) {
  EXPECT_DOUBLE_EQ(estimate_nuisance({std::vector<double>(9, 0.3), std::vector<double>(9, -0.2)}, 8, 0.125), 0.0);
  std::vector<double> a(9), b(9, 0.5);
  for (int t = 0; t < 9; ++t) a[t] = 0.01 * t;
  EXPECT_NEAR(estimate_nuisance({a, b}, 8, 0.125), 0.04, 1e-12);
  std::vector<double> a2(9), b2(9);
  for (int t = 0; t < 9; ++t) {
    a2[t] = 0.02 * t;
    b2[t] = 0.5 + 0.01 * (t % 2);
  }
  std::vector<double> b1(9);
  for (int t = 0; t < 9; ++t) b1[t] = 0.5 + 0.005 * (t % 2);
  EXPECT_NEAR(estimate_nuisance({a2, b2}, 8, 0.125), 2.0 * estimate_nuisance({a, b1}, 8, 0.125), 1e-12);
  EXPECT_THROW(estimate_nuisance({std::vector<double>(8, 0.0)}, 8, 0.125), std::invalid_argument);
}

TEST(Nuisance, IncreasesAcrossEnvironments) {
  double prev = -1.0;
  for (int k = 1; k <= 10; ++k) {
    const double m = mean_eta(k, 200);
    EXPECT_GT(m, prev) << "E" << k;
    prev = m;
  }
  EXPECT_LT(mean_eta(0, 200), mean_eta(1, 200));
}

TEST(Collision, Fixtures) {
  auto c = check_collision({0, 0}, {{1, 0}}, 0.5);
  EXPECT_FALSE(c.collision);
  EXPECT_DOUBLE_EQ(c.margin, 0.5);
  c = check_collision({0, 0}, {{0, 0}}, 0.5);
  EXPECT_TRUE(c.collision);
  EXPECT_DOUBLE_EQ(c.margin, -0.5);
  c = check_collision({0, 0}, {{0.6, 0}, {0, 0.4}}, 0.5);
  EXPECT_TRUE(c.collision);
  EXPECT_NEAR(c.margin, -0.1, 1e-15);
}

TEST(Simulation, DeterministicAndConsistent) {
  const auto cfg = make_environment(4);
  const auto env = sample_environment(cfg, 3);
  const auto a = simulate_obstacles(cfg, env, 80, 9), b = simulate_obstacles(cfg, env, 80, 9);
  ASSERT_EQ(a.agents(), 2);
  ASSERT_EQ(a.positions[0].size(), 81u);
  for (int i = 0; i < 2; ++i) {
    for (int t = 0; t <= 80; ++t) {
      EXPECT_EQ(a.positions[i][t].x, b.positions[i][t].x);
      EXPECT_EQ(a.positions[i][t].y, b.positions[i][t].y);
    }
    EXPECT_DOUBLE_EQ(a.positions[i][0].x, cfg.start[i].x);
  }
  const auto h = a.histories(10, cfg.dt);
  EXPECT_EQ(h[1].positions.size(), 11u);
  const auto c = simulate_obstacles(cfg, env, 80, 10);
  EXPECT_NE(a.positions[0][40].y, c.positions[0][40].y);
}

TEST(Serialization, ConfigRoundTrips) {
  auto cfg = make_environment(6);
  cfg.noise.kappa = 0.7;
  const auto back = environment_from_json(to_json(cfg));
  EXPECT_EQ(back.goal_y_interval, cfg.goal_y_interval);
  EXPECT_DOUBLE_EQ(back.noise.kappa, 0.7);
  WorldConfig w;
  w.T = 60;
  w.limits.phi_max = 0.4;
  const auto wb = world_from_json(to_json(w));
  EXPECT_EQ(wb.T, 60);
  EXPECT_DOUBLE_EQ(wb.limits.phi_max, 0.4);
  EpisodeTrace tr;
  tr.step_ms = {1.0, 3.0};
  const auto row = trace_csv_row(tr), header = trace_csv_header();
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
  EXPECT_TRUE(to_json(tr).contains("calibration_ms"));
}
