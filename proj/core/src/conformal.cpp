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

#include "rcp/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "rcp/common.hpp"

namespace rcp::conformal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBisectWidth = 1e-13;
constexpr double kBisectTolerance = 1e-9;
constexpr int kBisectMaxIter = 200;

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0,1)");
}

// Order statistic at ceil(x) (x = K * level), or the infinite sentinel.
double pick(const ScoreSet& s, double k_times_level, bool& infinite) {
  const long long idx = ceil_index(k_times_level);
  if (idx > static_cast<long long>(s.size())) {
    infinite = true;
    return kInf;
  }
  infinite = false;
  return s.order_statistic(static_cast<std::size_t>(std::max(1LL, idx)));
}

// t * f(x / t), extended to t = 0 by the recession slope of f.
double perspective(const std::function<double(double)>& f, double t, double x) {
  if (t > 0.0) return t * f(x / t);
  if (x == 0.0) return 0.0;
  constexpr double kFar = 1e9;
  return x * f(kFar) / kFar;
}

double divergence_at(const std::function<double(double)>& f, double beta, double z) {
  const double v = perspective(f, beta, z) + perspective(f, 1.0 - beta, 1.0 - z);
  if (std::isnan(v)) throw Error("f-divergence evaluation returned NaN");
  return v;
}

template <class Feasible>
double bisect(double feasible, double infeasible, Feasible&& ok) {
  for (int it = 0; it < kBisectMaxIter; ++it) {
    if (std::abs(feasible - infeasible) <= kBisectWidth) return feasible;
    const double mid = 0.5 * (feasible + infeasible);
    if (ok(mid)) {
      feasible = mid;
    } else {
      infeasible = mid;
    }
  }
  if (std::abs(feasible - infeasible) > kBisectTolerance) {
    throw Error("bisection did not reach tolerance within the iteration budget");
  }
  return feasible;
}

template <class G, class GInv>
QuantileResult fdiv_pipeline(const ScoreSet& scores, double delta, G&& g, GInv&& g_inv) {
  QuantileResult nominal = vanilla_quantile(scores, delta);
  const double K = static_cast<double>(scores.size());
  QuantileResult out;
  out.c_nominal = nominal.c_nominal;

  const double inflated = (1.0 + 1.0 / K) * g_inv(1.0 - delta);
  if (ceil_index(K * inflated) > static_cast<long long>(scores.size())) {
    out.infinite = true;
    out.effective_level = inflated;
    out.c_robust = kInf;
    out.delta_correction = kInf;
    return out;
  }
  const double delta_k = 1.0 - g(std::min(1.0, inflated));
  const double level = g_inv(1.0 - delta_k);
  out.effective_level = level;
  out.c_robust = pick(scores, K * level, out.infinite);
  out.delta_correction = out.infinite ? kInf : out.c_robust - out.c_nominal;
  return out;
}

}  // namespace

std::string to_string(Provenance p) {
  return p == Provenance::Synthetic ? "synthetic" : "real";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "synthetic") return Provenance::Synthetic;
  if (s == "real") return Provenance::RealCalibration;
  throw std::invalid_argument("unknown provenance: " + s);
}

ScoreSet::ScoreSet(std::vector<double> scores, Provenance provenance,
                   std::optional<std::string> context_id)
    : scores_(std::move(scores)), provenance_(provenance), context_id_(std::move(context_id)) {
  if (scores_.empty()) throw std::invalid_argument("score set must not be empty");
  for (double s : scores_) {
    if (!std::isfinite(s) || s < 0.0) throw std::invalid_argument("scores must be finite and >= 0");
  }
  std::sort(scores_.begin(), scores_.end());
}

double ScoreSet::order_statistic(std::size_t k) const {
  if (k < 1 || k > scores_.size()) throw std::out_of_range("order statistic index out of range");
  return scores_[k - 1];
}

double ScoreSet::quantile(double p) const {
  bool infinite = false;
  return pick(*this, static_cast<double>(scores_.size()) * p, infinite);
}

long long ceil_index(double x) {
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9) return static_cast<long long>(r);
  return static_cast<long long>(std::ceil(x));
}

AmbiguitySpec AmbiguitySpec::tv(double r) {
  AmbiguitySpec s;
  s.kind = AmbiguityKind::FDivTV;
  s.r = r;
  return s;
}

AmbiguitySpec AmbiguitySpec::fdiv(double r, std::function<double(double)> f) {
  AmbiguitySpec s;
  s.kind = AmbiguityKind::FDivGeneric;
  s.r = r;
  s.f_generator = std::move(f);
  return s;
}

AmbiguitySpec AmbiguitySpec::lp(double eps, double rho) {
  AmbiguitySpec s;
  s.kind = AmbiguityKind::LevyProkhorov;
  s.eps_lp = eps;
  s.rho_lp = rho;
  return s;
}

QuantileResult vanilla_quantile(const ScoreSet& scores, double delta) {
  check_delta(delta);
  const double K = static_cast<double>(scores.size());
  QuantileResult q;
  q.effective_level = (1.0 + 1.0 / K) * (1.0 - delta);
  q.c_nominal = pick(scores, (K + 1.0) * (1.0 - delta), q.infinite);
  q.c_robust = q.c_nominal;
  q.delta_correction = q.infinite ? kInf : 0.0;
  return q;
}

QuantileResult robust_quantile_fdiv_tv(const ScoreSet& scores, double delta, double r) {
  check_delta(delta);
  if (!(r >= 0.0)) throw std::invalid_argument("radius must be >= 0");
  return fdiv_pipeline(
      scores, delta, [r](double beta) { return std::max(0.0, beta - r); },
      [r](double tau) { return std::min(1.0, tau + r); });
}

double tv_generator(double u) { return 0.5 * std::abs(u - 1.0); }

double kl_generator(double u) { return u > 0.0 ? u * std::log(u) : 0.0; }

double fdiv_g(double beta, double r, const std::function<double(double)>& f) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in [0,1]");
  if (r == 0.0 || beta == 0.0) return beta;
  if (divergence_at(f, beta, 0.0) <= r) return 0.0;
  return bisect(beta, 0.0, [&](double z) { return divergence_at(f, beta, z) <= r; });
}

double fdiv_g_inverse(double tau, double r, const std::function<double(double)>& f) {
  if (!(tau >= 0.0)) throw std::invalid_argument("tau must be >= 0");
  if (tau >= 1.0) return 1.0;
  if (r == 0.0) return tau;
  if (fdiv_g(1.0, r, f) <= tau) return 1.0;
  return bisect(tau, 1.0, [&](double beta) { return fdiv_g(beta, r, f) <= tau; });
}

QuantileResult robust_quantile_fdiv_generic(const ScoreSet& scores, double delta, double r,
                                            const std::function<double(double)>& f) {
  check_delta(delta);
  if (!(r >= 0.0)) throw std::invalid_argument("radius must be >= 0");
  if (!f) throw std::invalid_argument("missing f generator");
  return fdiv_pipeline(
      scores, delta, [&](double beta) { return fdiv_g(beta, r, f); },
      [&](double tau) { return fdiv_g_inverse(tau, r, f); });
}

QuantileResult robust_quantile_lp(const ScoreSet& scores, double delta, double eps_lp,
                                  double rho_lp) {
  check_delta(delta);
  if (!(eps_lp >= 0.0)) throw std::invalid_argument("eps_lp must be >= 0");
  if (!(rho_lp >= 0.0 && rho_lp < 1.0)) throw std::invalid_argument("rho_lp must lie in [0,1)");
  const double K = static_cast<double>(scores.size());
  QuantileResult out;
  out.c_nominal = vanilla_quantile(scores, delta).c_nominal;
  const double beta = delta + (delta - rho_lp - 2.0) / K;
  out.effective_level = 1.0 - beta + rho_lp;
  if (rho_lp >= delta) {
    out.infinite = true;
  } else {
    const double q = pick(scores, K * (1.0 - delta + rho_lp) - (delta - rho_lp - 2.0), out.infinite);
    out.c_robust = q + eps_lp;
  }
  if (out.infinite) {
    out.c_robust = kInf;
    out.delta_correction = kInf;
  } else {
    out.delta_correction = out.c_robust - out.c_nominal;
  }
  return out;
}

QuantileResult robust_quantile(const ScoreSet& scores, double delta, const AmbiguitySpec& spec) {
  switch (spec.kind) {
    case AmbiguityKind::None:
      return vanilla_quantile(scores, delta);
    case AmbiguityKind::FDivTV:
      return robust_quantile_fdiv_tv(scores, delta, spec.r);
    case AmbiguityKind::FDivGeneric:
      return robust_quantile_fdiv_generic(scores, delta, spec.r, spec.f_generator);
    case AmbiguityKind::LevyProkhorov:
      return robust_quantile_lp(scores, delta, spec.eps_lp, spec.rho_lp);
  }
  throw std::invalid_argument("unknown ambiguity kind");
}

void write_text(std::ostream& os, const ScoreSet& s) {
  os << std::setprecision(17);
  for (double v : s.values()) os << v << '\n';
}

ScoreSet read_text(std::istream& is, Provenance provenance) {
  std::vector<double> v;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    double x = 0.0;
    if (!(ls >> x)) throw Error("malformed score line: " + line);
    v.push_back(x);
  }
  return ScoreSet(std::move(v), provenance);
}

nlohmann::json to_json(const ScoreSet& s) {
  nlohmann::json j;
  j["scores"] = s.values();
  j["provenance"] = to_string(s.provenance());
  if (s.context_id()) j["context_id"] = *s.context_id();
  return j;
}

ScoreSet score_set_from_json(const nlohmann::json& j) {
  std::optional<std::string> ctx;
  if (j.contains("context_id")) ctx = j.at("context_id").get<std::string>();
  Provenance p = Provenance::RealCalibration;
  if (j.contains("provenance")) p = provenance_from_string(j.at("provenance").get<std::string>());
  return ScoreSet(j.at("scores").get<std::vector<double>>(), p, std::move(ctx));
}

nlohmann::json to_json(const QuantileResult& q) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"c_nominal", num(q.c_nominal)},
          {"c_robust", num(q.c_robust)},
          {"delta_correction", num(q.delta_correction)},
          {"effective_level", q.effective_level},
          {"infinite", q.infinite}};
}

}  // namespace rcp::conformal
