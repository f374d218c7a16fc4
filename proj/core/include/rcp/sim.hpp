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

#ifndef RCP_SIM_HPP_
#define RCP_SIM_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcp/common.hpp"
#include "rcp/predictor.hpp"

namespace rcp::sim {

struct EgoState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double v = 0.0;
};

struct EgoInput {
  double phi = 0.0;
  double a = 0.0;
};

struct EgoLimits {
  double wheelbase = 0.5;
  double phi_max = 0.6;
  double a_max = 2.0;
  double v_min = 0.0;
  double v_max = 2.0;
};

// Forward-Euler kinematic bicycle; speed is clamped to [v_min, v_max].
EgoState ego_step(const EgoState& s, const EgoInput& u, double dt, double wheelbase,
                  double v_min = 0.0, double v_max = 2.0);

// Unstated world constants.
struct WorldConfig {
  int T = 80;
  int H = 10;
  int T_b = 8;
  double dt = 0.125;
  double eps = 0.3;
  EgoState ego_start{0.0, -0.5, 0.0, 0.8};
  double ego_goal_x = 35.0;
  double ego_goal_y = -0.5;
  double corridor_half_width = 1.0;
  EgoLimits limits;
};

// Lateral modulation of the obstacle motion (zero gives straight goal-seeking).
struct ObstacleNoise {
  double kappa = 0.25;
  double tau_c = 0.0;  // 0 gives independent draws per step
  double jitter = 0.001;
};

struct EnvironmentConfig {
  int k = 0;  // 0: training environment, 1..10: shifted environments
  std::vector<Vec2> start{{20.0, -0.5}, {30.0, 0.5}};
  std::vector<double> goal_x{0.0, 10.0};
  std::vector<std::pair<double, double>> goal_y_interval;
  std::pair<double, double> speed_interval{0.5, 1.0};
  double dt = 0.125;
  double clearance = 0.3;
  double sensing_range = 3.0;
  ObstacleNoise noise;
  std::uint64_t seed = 0;

  int agents() const { return static_cast<int>(start.size()); }
  std::string name() const { return k == 0 ? "train" : "E" + std::to_string(k); }
};

EnvironmentConfig make_environment(int k);

struct RealizedEnvironment {
  std::vector<Vec2> goals;
  std::vector<double> speeds;
};

RealizedEnvironment sample_environment(const EnvironmentConfig& cfg, std::uint64_t seed);

struct ObstacleState {
  Vec2 p;
  Vec2 v;
  bool arrived = false;
};

// Exogenous velocity perturbation applied before the avoidance rule.
struct ObstacleDisturbance {
  double lateral_gain = 0.0;  // preferred lateral velocity is scaled by (1 + lateral_gain)
  Vec2 jitter;
};

ObstacleState obstacle_step(const ObstacleState& self, Vec2 goal, double speed,
                            const std::vector<ObstacleState>& neighbors, double dt,
                            double clearance, double sensing_range,
                            const ObstacleDisturbance& disturbance = {});

struct ObstacleTrajectories {
  int T = 0;
  std::vector<std::vector<Vec2>> positions;  // [agent][t], t = 0..T

  int agents() const { return static_cast<int>(positions.size()); }
  std::vector<Vec2> at(int t) const;
  // Histories truncated at step t (samples 0..t).
  std::vector<predictor::ObstacleHistory> histories(int t, double dt) const;
};

ObstacleTrajectories simulate_obstacles(const EnvironmentConfig& cfg, const RealizedEnvironment& env,
                                        int T, std::uint64_t seed);

// Mean absolute lateral speed over the first T_b steps of every obstacle.
double estimate_nuisance(const std::vector<std::vector<double>>& lateral, int T_b, double dt);
double estimate_nuisance(const ObstacleTrajectories& traj, int T_b, double dt);

struct CollisionCheck {
  bool collision = false;
  double margin = 0.0;
};

CollisionCheck check_collision(Vec2 ego, const std::vector<Vec2>& obstacles, double eps);

struct EpisodeTrace {
  std::string env;
  int case_id = 0;
  std::string loop = "closed";
  int episode = 0;
  std::uint64_t seed = 0;
  double eta = 0.0;
  double score = 0.0;      // realized nonconformity score of the episode
  double threshold = 0.0;  // calibrated C + Delta
  double r_used = 0.0;
  std::vector<EgoState> ego;
  std::vector<EgoInput> inputs;
  std::vector<std::vector<Vec2>> obstacles;     // [t][agent]
  std::vector<std::vector<Vec2>> predictions;   // [planning step][(h-1)*N + i]
  std::vector<std::vector<double>> radii;       // [planning step][(h-1)*N + i]
  std::vector<double> step_ms;          // per planning step: solve plus any recalibration
  std::vector<double> calibration_ms;   // per planning step: recalibration share (0 when not timed)
  bool collision = false;
  bool coverage = false;
  bool fallback = false;
  bool infeasible = false;
  bool failed = false;
  std::string failure;
  double min_margin = 0.0;
};

nlohmann::json to_json(const EpisodeTrace& tr);
std::string trace_csv_header();
std::string trace_csv_row(const EpisodeTrace& tr);

nlohmann::json to_json(const EnvironmentConfig& cfg);
EnvironmentConfig environment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const WorldConfig& w);
WorldConfig world_from_json(const nlohmann::json& j);

}  // namespace rcp::sim

#endif  // RCP_SIM_HPP_
