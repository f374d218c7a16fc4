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

#ifndef RCP_SHIFT_HPP_
#define RCP_SHIFT_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcp/conformal.hpp"
#include "rcp/diffusion.hpp"
#include "rcp/scores.hpp"

namespace rcp::shift {

enum class ShiftKind { EmpiricalWInf, EmpiricalW2, AnalyticW2Bound };

struct ShiftEstimate {
  ShiftKind kind = ShiftKind::EmpiricalWInf;
  double value = 0.0;  // +inf when unbounded
  bool unbounded = false;
  std::size_t n_test = 0;
  std::size_t n_synth = 0;
  std::optional<std::string> context_id;
};

// Per-step ingredients of the diffusion sampling-error bound (index j-1 holds step j).
struct BoundIngredients {
  std::vector<double> E;
  std::vector<double> H;
  std::vector<double> L1;
  std::vector<double> L2;
  std::vector<double> M;
  double residual_term = 0.0;
  bool overflow = false;
};

double wasserstein2_1d(const conformal::ScoreSet& a, const conformal::ScoreSet& b);
double wasserstein_inf_1d(const conformal::ScoreSet& a, const conformal::ScoreSet& b);
ShiftEstimate empirical_shift(ShiftKind kind, const conformal::ScoreSet& test,
                              const conformal::ScoreSet& synth);

// Max one-sided slope of the score estimate over pairs drawn from the forward marginal at c.
std::vector<double> estimate_L2(const diffusion::DiffusionModel& model,
                                const diffusion::ContextVector& c, int pairs_per_step,
                                std::uint64_t seed);

// Derives H, L1, M and the residual term from E and L2.
BoundIngredients make_ingredients(const diffusion::VarianceSchedule& schedule,
                                  std::vector<double> E, std::vector<double> L2);

ShiftEstimate analytic_w2_bound(const BoundIngredients& ingredients,
                                const diffusion::VarianceSchedule& schedule);

double propagate_to_radius(double w2_bound, const scores::SigmaTable& sigma);

struct SeenContext {
  std::vector<double> coords;  // nuisance coordinates (eta, ...)
  conformal::ScoreSet scores;
};

// Multiset union of the I nearest seen contexts under Euclidean distance on standardized coordinates.
conformal::ScoreSet aggregate_unseen_context(const std::vector<SeenContext>& seen,
                                             const std::vector<double>& c_star, int I);
// Indices of the I nearest seen contexts (same ordering rule as aggregate_unseen_context).
std::vector<std::size_t> nearest_contexts(const std::vector<SeenContext>& seen,
                                          const std::vector<double>& c_star, int I);

nlohmann::json to_json(const ShiftEstimate& s);
nlohmann::json to_json(const BoundIngredients& b);
void write_ingredients_csv(std::ostream& os, const BoundIngredients& b,
                           const diffusion::VarianceSchedule& schedule);

}  // namespace rcp::shift

#endif  // RCP_SHIFT_HPP_
