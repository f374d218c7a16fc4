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
#include <random>

#include <gtest/gtest.h>

#include "rcp/predictor.hpp"

using namespace rcp::predictor;
using rcp::Vec2;

namespace {

ObstacleHistory line(Vec2 p0, Vec2 v, int n, double dt = 0.125) {
  ObstacleHistory h;
  h.dt = dt;
  for (int k = 0; k < n; ++k) h.positions.push_back(p0 + (k * dt) * v);
  return h;
}

// Ordinary least-squares slope via the normal equations of [1, t].
Vec2 ols_slope(const ObstacleHistory& h, int first, int last) {
  double s1 = 0, st = 0, stt = 0;
  Vec2 sp, stp;
  for (int k = first; k <= last; ++k) {
    const double t = k * h.dt;
    s1 += 1;
    st += t;
    stt += t * t;
    sp = sp + h.positions[k];
    stp = stp + t * h.positions[k];
  }
  const double det = s1 * stt - st * st;
  return (1.0 / det) * (s1 * stp - st * sp);
}

}  // namespace

TEST(Predictor, StaticObstacle) {
  const auto h = line({3, -1}, {0, 0}, 6);
  const auto p = predict({h}, 5, 10);
  for (int tau = 6; tau <= 15; ++tau) {
    EXPECT_NEAR(p.at(tau, 0).x, 3.0, 1e-12);
    EXPECT_NEAR(p.at(tau, 0).y, -1.0, 1e-12);
  }
}

TEST(Predictor, UniformMotionFourSteps) {
  const auto h = line({0, 0}, {1, 0}, 8);
  const auto p = predict({h}, 7, 4);
  const Vec2 pt = h.positions[7];
  EXPECT_NEAR(p.at(11, 0).x, pt.x + 0.5, 1e-12);
  EXPECT_NEAR(p.at(11, 0).y, 0.0, 1e-12);
}

TEST(Predictor, TwoPointSlope) {
  ObstacleHistory h;
  h.positions = {{0, 0}, {0.125 * 0.8, 0}};
  const Vec2 v = estimate_velocity(h, 1, 2);
  EXPECT_NEAR(v.x, 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(v.y, 0.0);
}

TEST(Predictor, MatchesNormalEquations) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  ObstacleHistory h;
  for (int k = 0; k < 12; ++k) h.positions.push_back({n(rng), n(rng)});
  for (int w : {2, 3, 4, 7}) {
    for (int t = 1; t < 12; ++t) {
      const Vec2 v = estimate_velocity(h, t, w);
      const Vec2 o = ols_slope(h, std::max(0, t - w + 1), t);
      EXPECT_NEAR(v.x, o.x, 1e-9);
      EXPECT_NEAR(v.y, o.y, 1e-9);
    }
  }
}

TEST(Predictor, TranslationEquivariance) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  std::vector<ObstacleHistory> a(2), b(2);
  const Vec2 shift{4.5, -2.25};
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < 9; ++k) {
      const Vec2 p{n(rng), n(rng)};
      a[i].positions.push_back(p);
      b[i].positions.push_back(p + shift);
    }
  }
  const auto pa = predict(a, 8, 6), pb = predict(b, 8, 6);
  for (std::size_t k = 0; k < pa.yhat.size(); ++k) {
    EXPECT_NEAR(pb.yhat[k].x - pa.yhat[k].x, shift.x, 1e-12);
    EXPECT_NEAR(pb.yhat[k].y - pa.yhat[k].y, shift.y, 1e-12);
  }
}

TEST(Predictor, ExactOnAffineMotion) {
  const auto h0 = line({1, 2}, {0.7, -0.3}, 30), h1 = line({-5, 0}, {-1.1, 0.05}, 30);
  for (int t = 1; t < 20; ++t) {
    const auto p = predict({h0, h1}, t, 10);
    EXPECT_EQ(p.N, 2);
    for (int tau = t + 1; tau <= t + 10; ++tau) {
      EXPECT_NEAR(rcp::norm(p.at(tau, 0) - h0.positions[tau]), 0.0, 1e-12);
      EXPECT_NEAR(rcp::norm(p.at(tau, 1) - h1.positions[tau]), 0.0, 1e-12);
    }
  }
}

TEST(Predictor, Errors) {
  ObstacleHistory h;
  h.positions = {{0, 0}};
  EXPECT_THROW(predict({h}, 0, 3), std::invalid_argument);
  const auto ok = line({0, 0}, {1, 0}, 4);
  EXPECT_THROW(predict({ok}, 3, 0), std::invalid_argument);
  EXPECT_THROW(estimate_velocity(ok, 3, 1), std::invalid_argument);
  EXPECT_THROW(estimate_velocity(ok, 4, 2), std::invalid_argument);
}

TEST(Predictor, InterfaceDispatch) {
  const ConstantVelocityPredictor cv(2);
  const Predictor& p = cv;
  const auto h = line({0, 0}, {2, 1}, 5);
  const auto out = p.predict({h}, 4, 3);
  EXPECT_NEAR(out.at(7, 0).x, h.positions[4].x + 3 * 0.125 * 2, 1e-12);
}
