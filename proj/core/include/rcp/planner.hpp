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

#ifndef RCP_PLANNER_HPP_
#define RCP_PLANNER_HPP_

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcp/common.hpp"
#include "rcp/sim.hpp"

namespace rcp::planner {

struct CostWeights {
  double tracking = 1.0;
  double effort = 0.1;
  double terminal = 5.0;
};

struct MPCProblem {
  sim::EgoState x0;
  int H = 10;
  int N = 0;
  double dt = 0.125;
  std::vector<Vec2> centers;   // (k-1)*N + i: predicted obstacle i at step k of the horizon
  std::vector<double> radii;   // same layout; +inf marks an unbounded region
  double eps = 0.3;
  Vec2 goal{35.0, -0.5};
  CostWeights weights;
  sim::EgoLimits limits;
  double y_min = -1.0;
  double y_max = 1.0;
};

enum class Status { Optimal, MaxIter, Infeasible };
std::string to_string(Status s);

struct MPCSolution {
  std::vector<sim::EgoInput> inputs;   // u_0..u_{H-1}
  std::vector<sim::EgoState> states;   // x_0..x_H
  double objective = 0.0;
  Status status = Status::Infeasible;
  double solve_ms = 0.0;
  double max_violation = 0.0;
  bool fallback = false;
  int outer_iterations = 0;
};

struct SolverOptions {
  double penalty0 = 1e2;
  double penalty_growth = 10.0;
  int max_outer = 7;
  int max_inner = 200;
  double tolerance = 1e-6;
  double backoff = 1e-3;
  bool multi_start = true;
  double activity_threshold = 0.05;
};

double tighten_constraint(Vec2 pred, double radius, double eps, Vec2 ego_pos);

// Input parametrization u = (phi_max tanh(z0), a_max tanh(z1)) per step.
std::vector<sim::EgoInput> decode_inputs(const MPCProblem& p, const std::vector<double>& z);
std::vector<double> encode_inputs(const MPCProblem& p, const std::vector<sim::EgoInput>& u);
std::vector<sim::EgoState> rollout(const MPCProblem& p, const std::vector<sim::EgoInput>& u);

// Penalized single-shooting objective in the raw parameters z (size 2H) and its analytic gradient.
double penalized_objective(const MPCProblem& p, const std::vector<double>& z, double mu, double backoff,
                           std::vector<double>* grad);
// Unpenalized cost of an input sequence.
double cost(const MPCProblem& p, const std::vector<sim::EgoInput>& u);
// Every tightened margin (obstacle regions, then corridor bounds) along a state sequence.
std::vector<double> margins(const MPCProblem& p, const std::vector<sim::EgoState>& states);

MPCSolution solve(const MPCProblem& p, const MPCSolution* warm_start = nullptr,
                  const SolverOptions& opt = {});
MPCSolution fallback(const MPCProblem& p);
// Drops the first input and repeats the last one.
MPCSolution shift_solution(const MPCSolution& prev, const MPCProblem& next);

nlohmann::json to_json(const MPCSolution& s);

}  // namespace rcp::planner

#endif  // RCP_PLANNER_HPP_
