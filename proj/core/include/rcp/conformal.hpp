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

#ifndef RCP_CONFORMAL_HPP_
#define RCP_CONFORMAL_HPP_

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rcp::conformal {

enum class Provenance { RealCalibration, Synthetic };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

// Sorted multiset of nonnegative finite scores. Never empty.
class ScoreSet {
 public:
  explicit ScoreSet(std::vector<double> scores, Provenance provenance = Provenance::RealCalibration,
                    std::optional<std::string> context_id = std::nullopt);

  std::size_t size() const { return scores_.size(); }
  double operator[](std::size_t k) const { return scores_[k]; }
  const std::vector<double>& values() const { return scores_; }
  Provenance provenance() const { return provenance_; }
  const std::optional<std::string>& context_id() const { return context_id_; }
  void set_context_id(std::optional<std::string> id) { context_id_ = std::move(id); }

  // k-th smallest, 1-based.
  double order_statistic(std::size_t k) const;
  // ceil(K*p)-th smallest; +inf when p > 1, smallest score when p <= 1/K.
  double quantile(double p) const;

 private:
  std::vector<double> scores_;
  Provenance provenance_;
  std::optional<std::string> context_id_;
};

// ceil(x) treating values within 1e-9 of an integer as that integer.
long long ceil_index(double x);

enum class AmbiguityKind { None, FDivTV, FDivGeneric, LevyProkhorov };

struct AmbiguitySpec {
  AmbiguityKind kind = AmbiguityKind::None;
  double r = 0.0;
  double eps_lp = 0.0;
  double rho_lp = 0.0;
  std::function<double(double)> f_generator;

  static AmbiguitySpec none() { return {}; }
  static AmbiguitySpec tv(double r);
  static AmbiguitySpec fdiv(double r, std::function<double(double)> f);
  static AmbiguitySpec lp(double eps, double rho);
};

struct QuantileResult {
  double c_nominal = 0.0;
  double c_robust = 0.0;
  double delta_correction = 0.0;
  double effective_level = 0.0;
  bool infinite = false;
};

QuantileResult vanilla_quantile(const ScoreSet& scores, double delta);
QuantileResult robust_quantile_fdiv_tv(const ScoreSet& scores, double delta, double r);
QuantileResult robust_quantile_fdiv_generic(const ScoreSet& scores, double delta, double r,
                                            const std::function<double(double)>& f);
QuantileResult robust_quantile_lp(const ScoreSet& scores, double delta, double eps_lp, double rho_lp);
QuantileResult robust_quantile(const ScoreSet& scores, double delta, const AmbiguitySpec& spec);

// Worst-case mass map of an f-divergence ball and its inverse. Bisection to 1e-9, at most 200 steps.
double fdiv_g(double beta, double r, const std::function<double(double)>& f);
double fdiv_g_inverse(double tau, double r, const std::function<double(double)>& f);

double tv_generator(double u);
double kl_generator(double u);

void write_text(std::ostream& os, const ScoreSet& s);
ScoreSet read_text(std::istream& is, Provenance provenance = Provenance::RealCalibration);
nlohmann::json to_json(const ScoreSet& s);
ScoreSet score_set_from_json(const nlohmann::json& j);
nlohmann::json to_json(const QuantileResult& q);

}  // namespace rcp::conformal

#endif  // RCP_CONFORMAL_HPP_
