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

#include "rcp/shift.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <boost/random/normal_distribution.hpp>

namespace rcp::shift {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kExpGuard = 700.0;
constexpr int kL2Pool = 512;

// Visits the pieces of the merged quantile grid: f(length, a_value, b_value), lengths in (0, 1].
template <class F>
void merged_quantiles(const conformal::ScoreSet& a, const conformal::ScoreSet& b, F&& f) {
  const std::uint64_t n = a.size(), m = b.size();
  std::uint64_t ia = 0, ib = 0, u = 0;  // u in units of 1/(n m)
  const double unit = 1.0 / (static_cast<double>(n) * static_cast<double>(m));
  while (ia < n && ib < m) {
    const std::uint64_t pa = (ia + 1) * m, pb = (ib + 1) * n;
    const std::uint64_t next = std::min(pa, pb);
    if (next > u) f(static_cast<double>(next - u) * unit, a[ia], b[ib]);
    u = next;
    if (pa == next) ++ia;
    if (pb == next) ++ib;
  }
}

}  // namespace

double wasserstein2_1d(const conformal::ScoreSet& a, const conformal::ScoreSet& b) {
  double acc = 0.0;
  if (a.size() == b.size()) {
    for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(acc / static_cast<double>(a.size()));
  }
  merged_quantiles(a, b, [&](double w, double x, double y) { acc += w * (x - y) * (x - y); });
  return std::sqrt(acc);
}

double wasserstein_inf_1d(const conformal::ScoreSet& a, const conformal::ScoreSet& b) {
  double best = 0.0;
  if (a.size() == b.size()) {
    for (std::size_t k = 0; k < a.size(); ++k) best = std::max(best, std::abs(a[k] - b[k]));
    return best;
  }
  merged_quantiles(a, b, [&](double, double x, double y) { best = std::max(best, std::abs(x - y)); });
  return best;
}

ShiftEstimate empirical_shift(ShiftKind kind, const conformal::ScoreSet& test,
                              const conformal::ScoreSet& synth) {
  ShiftEstimate s;
  s.kind = kind;
  s.n_test = test.size();
  s.n_synth = synth.size();
  s.context_id = test.context_id();
  if (kind == ShiftKind::EmpiricalWInf) {
    s.value = wasserstein_inf_1d(test, synth);
  } else if (kind == ShiftKind::EmpiricalW2) {
    s.value = wasserstein2_1d(test, synth);
  } else {
    throw std::invalid_argument("empirical_shift handles empirical kinds only");
  }
  return s;
}

std::vector<double> estimate_L2(const diffusion::DiffusionModel& model,
                                const diffusion::ContextVector& c, int pairs_per_step,
                                std::uint64_t seed) {
  if (pairs_per_step < 1) throw std::invalid_argument("pairs_per_step must be >= 1");
  const int steps = model.schedule.steps();
  const diffusion::Features f = model.context_stats.standardize(c);
  const double fphi = model.encoder_mean(f);
  std::vector<double> pool = diffusion::sample(model, c, kL2Pool, derive_seed(seed, {0}));
  for (double& v : pool) v = model.to_standard(v);

  boost::random::normal_distribution<double> normal;
  std::vector<double> out(steps, -kInf);
  std::vector<double> sa(pairs_per_step), sb(pairs_per_step);
  for (int j = 1; j <= steps; ++j) {
    Rng rng(derive_seed(seed, {1, static_cast<std::uint64_t>(j)}));
    std::uniform_int_distribution<int> pick(0, kL2Pool - 1);
    for (int p = 0; p < pairs_per_step; ++p) {
      const double s0a = pool[pick(rng)];
      const double s0b = pool[pick(rng)];
      sa[p] = diffusion::forward_sample(model.schedule, s0a, fphi, j, normal(rng));
      sb[p] = diffusion::forward_sample(model.schedule, s0b, fphi, j, normal(rng));
    }
    const auto ea = model.eps_batch(sa, j, fphi, f);
    const auto eb = model.eps_batch(sb, j, fphi, f);
    const double k = -1.0 / std::sqrt(1.0 - model.schedule.alpha_bar(j));
    for (int p = 0; p < pairs_per_step; ++p) {
      const double d = sa[p] - sb[p];
      if (d == 0.0) continue;
      const double ratio = (k * ea[p] - k * eb[p]) * d / (d * d);
      out[j - 1] = std::max(out[j - 1], ratio);
    }
    if (out[j - 1] == -kInf) out[j - 1] = 0.0;
  }
  return out;
}

BoundIngredients make_ingredients(const diffusion::VarianceSchedule& schedule,
                                  std::vector<double> E, std::vector<double> L2) {
  const int steps = schedule.steps();
  if (static_cast<int>(E.size()) != steps || static_cast<int>(L2.size()) != steps) {
    throw std::invalid_argument("ingredient tables must cover every diffusion step");
  }
  BoundIngredients b;
  b.E = std::move(E);
  b.L2 = std::move(L2);
  double cum = 0.0, resid = 0.0;
  for (int j = 1; j <= steps; ++j) {
    const double beta = schedule.beta(j);
    if (b.E[j - 1] < 0.0) throw std::invalid_argument("E(j) must be >= 0");
    b.H.push_back(b.E[j - 1] / (1.0 - schedule.alpha_bar(j)));
    b.L1.push_back(beta * beta / 4.0);
    cum += b.L1.back() + b.L2[j - 1] * beta;
    if (cum > kExpGuard) {
      b.overflow = true;
      b.M.push_back(kInf);
    } else {
      b.M.push_back(std::exp(cum));
    }
    resid += beta * beta * b.M.back();
  }
  b.residual_term = b.overflow ? kInf : std::sqrt(resid);
  return b;
}

ShiftEstimate analytic_w2_bound(const BoundIngredients& ingredients,
                                const diffusion::VarianceSchedule& schedule) {
  ShiftEstimate s;
  s.kind = ShiftKind::AnalyticW2Bound;
  const int steps = schedule.steps();
  if (static_cast<int>(ingredients.H.size()) != steps || static_cast<int>(ingredients.M.size()) != steps) {
    throw std::invalid_argument("incomplete bound ingredients");
  }
  if (ingredients.overflow) {
    s.unbounded = true;
    s.value = kInf;
    return s;
  }
  double first = 0.0;
  for (int j = 1; j <= steps; ++j) {
    first += schedule.beta(j) * ingredients.M[j - 1] * std::sqrt(ingredients.H[j - 1]);
  }
  s.value = first + ingredients.residual_term;
  if (!std::isfinite(s.value)) {
    s.unbounded = true;
    s.value = kInf;
  }
  return s;
}

double propagate_to_radius(double w2_bound, const scores::SigmaTable& sigma) {
  return w2_bound / sigma.sigma_min();
}

std::vector<std::size_t> nearest_contexts(const std::vector<SeenContext>& seen,
                                          const std::vector<double>& c_star, int I) {
  if (I < 1 || static_cast<std::size_t>(I) > seen.size()) {
    throw std::invalid_argument("I must lie in [1, number of seen contexts]");
  }
  const std::size_t d = c_star.size();
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (const auto& s : seen) {
    if (s.coords.size() != d) throw std::invalid_argument("context dimension mismatch");
    for (std::size_t k = 0; k < d; ++k) mean[k] += s.coords[k];
  }
  for (auto& m : mean) m /= static_cast<double>(seen.size());
  for (const auto& s : seen) {
    for (std::size_t k = 0; k < d; ++k) sd[k] += (s.coords[k] - mean[k]) * (s.coords[k] - mean[k]);
  }
  for (auto& v : sd) {
    v = std::sqrt(v / static_cast<double>(seen.size()));
    if (v < 1e-12) v = 1.0;
  }
  std::vector<double> dist(seen.size());
  for (std::size_t n = 0; n < seen.size(); ++n) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double z = (seen[n].coords[k] - c_star[k]) / sd[k];
      acc += z * z;
    }
    dist[n] = std::sqrt(acc);
  }
  std::vector<std::size_t> order(seen.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return dist[x] < dist[y]; });
  order.resize(static_cast<std::size_t>(I));
  return order;
}

conformal::ScoreSet aggregate_unseen_context(const std::vector<SeenContext>& seen,
                                             const std::vector<double>& c_star, int I) {
  std::vector<double> merged;
  for (auto idx : nearest_contexts(seen, c_star, I)) {
    const auto& v = seen[idx].scores.values();
    merged.insert(merged.end(), v.begin(), v.end());
  }
  std::string tag = "c*=";
  for (std::size_t k = 0; k < c_star.size(); ++k) tag += (k ? "," : "") + std::to_string(c_star[k]);
  return conformal::ScoreSet(std::move(merged), seen.front().scores.provenance(), tag);
}

nlohmann::json to_json(const ShiftEstimate& s) {
  static const char* names[] = {"empirical_winf", "empirical_w2", "analytic_w2_bound"};
  nlohmann::json j{{"kind", names[static_cast<int>(s.kind)]},
                   {"value", s.unbounded ? nlohmann::json(nullptr) : nlohmann::json(s.value)},
                   {"unbounded", s.unbounded},
                   {"n_test", s.n_test},
                   {"n_synth", s.n_synth}};
  if (s.context_id) j["context_id"] = *s.context_id;
  return j;
}

nlohmann::json to_json(const BoundIngredients& b) {
  return {{"E", b.E}, {"H", b.H}, {"L1", b.L1}, {"L2", b.L2}, {"M", b.overflow ? std::vector<double>{} : b.M},
          {"residual_term", b.overflow ? nlohmann::json(nullptr) : nlohmann::json(b.residual_term)},
          {"overflow", b.overflow}};
}

void write_ingredients_csv(std::ostream& os, const BoundIngredients& b,
                           const diffusion::VarianceSchedule& schedule) {
  os << "j,beta,E,H,L1,L2,M\n";
  os.precision(12);
  for (int j = 1; j <= schedule.steps(); ++j) {
    os << j << ',' << schedule.beta(j) << ',' << b.E[j - 1] << ',' << b.H[j - 1] << ',' << b.L1[j - 1]
       << ',' << b.L2[j - 1] << ',' << b.M[j - 1] << '\n';
  }
}

}  // namespace rcp::shift
