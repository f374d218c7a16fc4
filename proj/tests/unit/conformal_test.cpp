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
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "conformal_oracles.hpp"
#include "rcp/conformal.hpp"

using namespace rcp::conformal;
using rcp::testing::count_oracle;
using rcp::testing::lp_level_oracle;
using rcp::testing::tv_level_oracle;

namespace {

std::vector<double> grid_scores(int K, double step) {
  std::vector<double> s;
  for (int k = 1; k <= K; ++k) s.push_back(k * step);
  return s;
}

}  // namespace

TEST(ScoreSet, SortsAndValidates) {
  ScoreSet s({3.0, 1.0, 2.0});
  EXPECT_EQ(s.values(), (std::vector<double>{1.0, 2.0, 3.0}));
  EXPECT_THROW(ScoreSet({}), std::invalid_argument);
  EXPECT_THROW(ScoreSet({1.0, -0.5}), std::invalid_argument);
  EXPECT_THROW(ScoreSet({std::nan("")}), std::invalid_argument);
}

TEST(ScoreSet, QuantileConvention) {
  ScoreSet s(grid_scores(10, 0.5));
  EXPECT_DOUBLE_EQ(s.quantile(0.88), 4.5);
  EXPECT_DOUBLE_EQ(s.quantile(0.01), 0.5);
  EXPECT_DOUBLE_EQ(s.quantile(1.0), 5.0);
  EXPECT_TRUE(std::isinf(s.quantile(1.01)));
}

TEST(CeilIndex, ToleratesRoundingNoise) {
  EXPECT_EQ(ceil_index(96.00000000001), 96);
  EXPECT_EQ(ceil_index(95.99999999999), 96);
  EXPECT_EQ(ceil_index(95.5), 96);
  EXPECT_EQ(ceil_index(96.1), 97);
}

TEST(Vanilla, TenScoreFixture) {
  const auto q = vanilla_quantile(ScoreSet(grid_scores(10, 0.5)), 0.2);
  EXPECT_FALSE(q.infinite);
  EXPECT_DOUBLE_EQ(q.c_nominal, 4.5);
  EXPECT_DOUBLE_EQ(q.c_robust, 4.5);
  EXPECT_DOUBLE_EQ(q.delta_correction, 0.0);
}

TEST(Vanilla, LevelAboveOneIsInfinite) {
  const auto q = vanilla_quantile(ScoreSet(grid_scores(5, 1.0)), 0.1);
  EXPECT_TRUE(q.infinite);
}

TEST(Vanilla, ConstantScores) {
  const auto q = vanilla_quantile(ScoreSet(std::vector<double>(30, 2.0)), 0.3);
  EXPECT_DOUBLE_EQ(q.c_nominal, 2.0);
}

TEST(Vanilla, RejectsBadDelta) {
  ScoreSet s({1.0});
  EXPECT_THROW(vanilla_quantile(s, 0.0), std::invalid_argument);
  EXPECT_THROW(vanilla_quantile(s, 1.0), std::invalid_argument);
}

TEST(TV, HundredScoreFixture) {
  const auto q = robust_quantile_fdiv_tv(ScoreSet(grid_scores(100, 0.01)), 0.1, 0.05);
  EXPECT_FALSE(q.infinite);
  EXPECT_NEAR(q.effective_level, 0.9595, 1e-12);
  EXPECT_DOUBLE_EQ(q.c_robust, 0.96);
  EXPECT_NEAR(q.delta_correction, q.c_robust - q.c_nominal, 1e-15);
}

TEST(TV, ZeroRadiusIsVanilla) {
  for (int K : {10, 37, 100}) {
    ScoreSet s(grid_scores(K, 0.1));
    for (double d : {0.05, 0.1, 0.3}) {
      const auto v = vanilla_quantile(s, d);
      const auto t = robust_quantile_fdiv_tv(s, d, 0.0);
      EXPECT_EQ(v.infinite, t.infinite);
      if (!v.infinite) {
        EXPECT_DOUBLE_EQ(v.c_nominal, t.c_robust);
      }
    }
  }
}

TEST(TV, SaturatesToInfinite) {
  EXPECT_TRUE(robust_quantile_fdiv_tv(ScoreSet(grid_scores(100, 0.01)), 0.1, 0.2).infinite);
  EXPECT_THROW(robust_quantile_fdiv_tv(ScoreSet({1.0}), 0.1, -0.1), std::invalid_argument);
}

TEST(Generic, TVGeneratorMatchesClosedForm) {
  ScoreSet s(grid_scores(100, 0.01));
  for (double r : {0.0, 0.01, 0.03, 0.05, 0.07}) {
    const auto a = robust_quantile_fdiv_tv(s, 0.1, r);
    const auto b = robust_quantile_fdiv_generic(s, 0.1, r, tv_generator);
    EXPECT_EQ(a.infinite, b.infinite) << r;
    if (!a.infinite) {
      EXPECT_NEAR(a.effective_level, b.effective_level, 1e-9) << r;
      EXPECT_DOUBLE_EQ(a.c_robust, b.c_robust) << r;
    }
  }
}

TEST(Generic, GAndInverseMatchTVClosedForm) {
  for (double r : {0.01, 0.05, 0.2}) {
    for (double b = 0.05; b < 1.0; b += 0.05) {
      EXPECT_NEAR(fdiv_g(b, r, tv_generator), std::max(0.0, b - r), 1e-9);
      EXPECT_NEAR(fdiv_g_inverse(b, r, tv_generator), std::min(1.0, b + r), 1e-9);
    }
  }
}

TEST(Generic, ZeroRadiusIsVanilla) {
  ScoreSet s(grid_scores(100, 0.01));
  const auto v = vanilla_quantile(s, 0.1);
  const auto k = robust_quantile_fdiv_generic(s, 0.1, 0.0, kl_generator);
  EXPECT_DOUBLE_EQ(v.c_nominal, k.c_robust);
}

// Dense-grid evaluation of the worst-case mass maps for KL.
TEST(Generic, KLMatchesDenseGridOracle) {
  const double r = 0.01, delta = 0.1;
  const int K = 100;
  auto f = kl_generator;
  auto feasible = [&](double beta, double z) {
    const double a = beta * f(z / beta);
    const double b = (1.0 - beta) * f((1.0 - z) / (1.0 - beta));
    return a + b <= r;
  };
  auto ginv = [&](double tau) {
    double best = tau;
    for (double beta = tau; beta < 1.0; beta += 1e-6) {
      if (feasible(beta, tau)) best = beta;
    }
    return best;
  };
  auto g = [&](double beta) {
    if (beta >= 1.0) return 1.0;
    for (double z = 0.0; z <= beta; z += 1e-6) {
      if (feasible(beta, z)) return z;
    }
    return beta;
  };
  const double inflated = (1.0 + 1.0 / K) * ginv(1.0 - delta);
  ASSERT_LE(inflated, 1.0);
  const double dK = 1.0 - g(inflated);
  const double level = ginv(1.0 - dK);

  const auto q = robust_quantile_fdiv_generic(ScoreSet(grid_scores(K, 0.01)), delta, r, kl_generator);
  EXPECT_NEAR(q.effective_level, level, 5e-6);
  EXPECT_DOUBLE_EQ(q.c_robust, count_oracle(grid_scores(K, 0.01), K * level));
}

TEST(LP, ArithmeticFixture) {
  const auto q = robust_quantile_lp(ScoreSet(grid_scores(100, 0.01)), 0.1, 0.1, 0.05);
  EXPECT_FALSE(q.infinite);
  EXPECT_NEAR(q.effective_level, 0.9695, 1e-12);
  EXPECT_DOUBLE_EQ(q.c_robust, 1.07);
}

TEST(LP, ZeroRadiiNeverBelowVanilla) {
  for (int K : {20, 50, 100, 500}) {
    ScoreSet s(grid_scores(K, 1.0 / K));
    const auto v = vanilla_quantile(s, 0.1);
    const auto l = robust_quantile_lp(s, 0.1, 0.0, 0.0);
    EXPECT_GE(l.c_robust, v.c_nominal);
    EXPECT_GE(l.effective_level, v.effective_level);
  }
}

TEST(LP, RhoAtLeastDeltaIsInfinite) {
  ScoreSet s(grid_scores(100, 0.01));
  EXPECT_TRUE(robust_quantile_lp(s, 0.1, 0.0, 0.1).infinite);
  EXPECT_TRUE(robust_quantile_lp(s, 0.1, 0.0, 0.2).infinite);
  EXPECT_THROW(robust_quantile_lp(s, 0.1, -1.0, 0.0), std::invalid_argument);
}

TEST(Dispatch, RoutesByKind) {
  ScoreSet s(grid_scores(100, 0.01));
  EXPECT_DOUBLE_EQ(robust_quantile(s, 0.1, AmbiguitySpec::none()).c_robust, vanilla_quantile(s, 0.1).c_nominal);
  EXPECT_DOUBLE_EQ(robust_quantile(s, 0.1, AmbiguitySpec::tv(0.05)).c_robust, 0.96);
  EXPECT_DOUBLE_EQ(robust_quantile(s, 0.1, AmbiguitySpec::lp(0.1, 0.05)).c_robust, 1.07);
  EXPECT_DOUBLE_EQ(robust_quantile(s, 0.1, AmbiguitySpec::fdiv(0.05, tv_generator)).c_robust, 0.96);
}

// Every quantile against an independent sort-and-count oracle, K <= 20.
TEST(OracleEquivalence, SmallSets) {
  std::mt19937_64 rng(11);
  std::exponential_distribution<double> ex(1.0);
  for (int K = 1; K <= 20; ++K) {
    for (int rep = 0; rep < 3; ++rep) {
      std::vector<double> raw(K);
      for (auto& x : raw) x = rep == 2 ? std::round(ex(rng) * 2.0) / 2.0 : ex(rng);  // rep 2 has ties
      ScoreSet s(raw);
      for (int d100 = 5; d100 <= 50; d100 += 5) {
        const double delta = d100 / 100.0;
        const auto v = vanilla_quantile(s, delta);
        const double vo = (K + 1) * (1.0 - delta) > K + 1e-9 ? INFINITY : count_oracle(raw, (K + 1) * (1.0 - delta));
        EXPECT_EQ(v.infinite, std::isinf(vo)) << K << " " << delta;
        if (!v.infinite) {
          EXPECT_EQ(v.c_nominal, vo) << K << " " << delta;
        }

        for (double r : {0.0, 0.02, 0.1}) {
          const double lvl = tv_level_oracle(K, delta, r);
          const auto t = robust_quantile_fdiv_tv(s, delta, r);
          const double to = lvl > 1.0 + 1e-12 ? INFINITY : count_oracle(raw, K * lvl);
          EXPECT_EQ(t.infinite, std::isinf(to)) << K << " " << delta << " " << r;
          if (!t.infinite) {
            EXPECT_EQ(t.c_robust, to) << K << " " << delta << " " << r;
          }
        }
        for (double rho : {0.0, 0.03}) {
          for (double eps : {0.0, 0.25}) {
            const auto l = robust_quantile_lp(s, delta, eps, rho);
            const double lvl = lp_level_oracle(K, delta, rho);
            double lo = rho >= delta || lvl > 1.0 + 1e-12 ? INFINITY : count_oracle(raw, K * lvl);
            if (std::isfinite(lo)) lo += eps;
            EXPECT_EQ(l.infinite, std::isinf(lo)) << K << " " << delta;
            if (!l.infinite) {
              EXPECT_EQ(l.c_robust, lo) << K << " " << delta;
            }
          }
        }
      }
    }
  }
}

TEST(Properties, MonotoneInRadii) {
  std::mt19937_64 rng(5);
  std::lognormal_distribution<double> ln(0.0, 1.0);
  std::vector<double> raw(200);
  for (auto& x : raw) x = ln(rng);
  ScoreSet s(raw);
  double prev = 0.0;
  for (double r = 0.0; r <= 0.09; r += 0.005) {
    const auto q = robust_quantile_fdiv_tv(s, 0.1, r);
    ASSERT_FALSE(q.infinite);
    EXPECT_GE(q.c_robust, prev);
    prev = q.c_robust;
  }
  prev = 0.0;
  for (double r = 0.0; r <= 0.05; r += 0.005) {
    const auto q = robust_quantile_fdiv_generic(s, 0.1, r, kl_generator);
    if (q.infinite) break;
    EXPECT_GE(q.c_robust, prev);
    prev = q.c_robust;
  }
  prev = 0.0;
  for (double e = 0.0; e <= 1.0; e += 0.1) {
    const auto q = robust_quantile_lp(s, 0.1, e, 0.0);
    EXPECT_GE(q.c_robust, prev);
    prev = q.c_robust;
  }
  prev = 0.0;
  for (double rho = 0.0; rho < 0.095; rho += 0.01) {
    const auto q = robust_quantile_lp(s, 0.1, 0.1, rho);
    EXPECT_GE(q.c_robust, prev);
    prev = q.c_robust;
  }
}

TEST(Properties, RobustNeverBelowNominal) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> raw(50 + rep);
    for (auto& x : raw) x = u(rng);
    ScoreSet s(raw);
    const auto t = robust_quantile_fdiv_tv(s, 0.2, 0.03);
    const auto l = robust_quantile_lp(s, 0.2, 0.1, 0.05);
    EXPECT_GE(t.c_robust, t.c_nominal);
    EXPECT_GE(l.c_robust, l.c_nominal);
    EXPECT_DOUBLE_EQ(l.delta_correction, l.c_robust - l.c_nominal);
  }
}

TEST(Properties, VanillaCoverageLaw) {
  std::mt19937_64 rng(2026);
  std::normal_distribution<double> n(0.0, 1.0);
  const int K = 100, reps = 5000;
  int covered = 0;
  std::vector<double> cal(K);
  for (int r = 0; r < reps; ++r) {
    for (auto& x : cal) x = std::abs(n(rng));
    const double test = std::abs(n(rng));
    covered += test <= vanilla_quantile(ScoreSet(cal), 0.1).c_nominal;
  }
  const double freq = static_cast<double>(covered) / reps;
  EXPECT_GE(freq, 0.90 - 0.02);
  EXPECT_LE(freq, 0.90 + 1.0 / (K + 1) + 0.02);
}

TEST(Properties, LPRobustCoverageUnderShift) {
  std::mt19937_64 rng(77);
  std::exponential_distribution<double> ex(1.0);
  std::bernoulli_distribution moved(0.05);
  const int K = 200, reps = 4000;
  const double eps = 0.3, rho = 0.05, delta = 0.1;
  int covered = 0;
  std::vector<double> cal(K);
  for (int r = 0; r < reps; ++r) {
    for (auto& x : cal) x = ex(rng);
    const double test = moved(rng) ? 50.0 : ex(rng) + eps;
    covered += test <= robust_quantile_lp(ScoreSet(cal), delta, eps, rho).c_robust;
  }
  EXPECT_GE(static_cast<double>(covered) / reps, 1.0 - delta - 0.02);
}

TEST(Serialization, TextAndJsonRoundTrip) {
  ScoreSet s({0.125, 3.5, 1e-17, 2.0}, Provenance::Synthetic, std::string("c*=0.2"));
  std::stringstream ss;
  write_text(ss, s);
  const auto back = read_text(ss, Provenance::Synthetic);
  EXPECT_EQ(back.values(), s.values());
  const auto j = to_json(s);
  EXPECT_TRUE(j.contains("scores"));
  const auto b2 = score_set_from_json(j);
  EXPECT_EQ(b2.values(), s.values());
  EXPECT_EQ(b2.provenance(), Provenance::Synthetic);
  EXPECT_EQ(b2.context_id(), s.context_id());
}

TEST(Serialization, InfiniteQuantileWritesNull) {
  const auto q = vanilla_quantile(ScoreSet({1.0, 2.0}), 0.1);
  ASSERT_TRUE(q.infinite);
  EXPECT_TRUE(to_json(q)["c_robust"].is_null());
}
