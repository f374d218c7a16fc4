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

#include "rcp/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <boost/random/normal_distribution.hpp>

namespace rcp::sim {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec2 rotate(Vec2 v, double psi) {
  const double c = std::cos(psi), s = std::sin(psi);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

bool in_collision_cone(Vec2 v, const ObstacleState& self, const ObstacleState& other, double radius) {
  const Vec2 d = other.p - self.p;
  // Reciprocal form: each party takes half of the avoidance, which removes step-to-step chatter.
  const Vec2 vr = 2.0 * v - self.v - other.v;
  const double dist = norm(d);
  const double along = dot(vr, d);
  if (along <= 0.0) return false;
  if (dist <= radius) return true;
  const double speed = norm(vr);
  if (speed == 0.0) return false;
  const double half_angle = std::asin(radius / dist);
  return along / (speed * dist) > std::cos(half_angle);
}

nlohmann::json vec_json(Vec2 v) { return {v.x, v.y}; }

}  // namespace

EgoState ego_step(const EgoState& s, const EgoInput& u, double dt, double wheelbase, double v_min,
                  double v_max) {
  EgoState n;
  n.x = s.x + dt * s.v * std::cos(s.theta);
  n.y = s.y + dt * s.v * std::sin(s.theta);
  n.theta = s.theta + dt * (s.v / wheelbase) * std::tan(u.phi);
  n.v = std::clamp(s.v + dt * u.a, v_min, v_max);
  return n;
}

EnvironmentConfig make_environment(int k) {
  if (k < 0 || k > 10) throw std::invalid_argument("environment index must be 0 (train) or 1..10");
  EnvironmentConfig cfg;
  cfg.k = k;
  if (k == 0) {
    cfg.goal_y_interval = {{-0.515, -0.485}, {0.485, 0.515}};
    cfg.speed_interval = {0.5, 1.0};
  } else {
    const double lo = -0.06 + 0.03 * (k - 1);
    const double hi = -0.03 + 0.03 * (k - 1);
    cfg.goal_y_interval = {{lo, hi}, {-hi, -lo}};
    cfg.speed_interval = {0.55, 1.05};
  }
  return cfg;
}

RealizedEnvironment sample_environment(const EnvironmentConfig& cfg, std::uint64_t seed) {
  const int n = cfg.agents();
  if (static_cast<int>(cfg.goal_x.size()) != n || static_cast<int>(cfg.goal_y_interval.size()) != n) {
    throw std::invalid_argument("environment config agent counts disagree");
  }
  Rng rng(seed);
  RealizedEnvironment env;
  for (int i = 0; i < n; ++i) {
    std::uniform_real_distribution<double> gy(cfg.goal_y_interval[i].first, cfg.goal_y_interval[i].second);
    env.goals.push_back({cfg.goal_x[i], gy(rng)});
  }
  std::uniform_real_distribution<double> sp(cfg.speed_interval.first, cfg.speed_interval.second);
  for (int i = 0; i < n; ++i) env.speeds.push_back(sp(rng));
  return env;
}

ObstacleState obstacle_step(const ObstacleState& self, Vec2 goal, double speed,
                            const std::vector<ObstacleState>& neighbors, double dt,
                            double clearance, double sensing_range,
                            const ObstacleDisturbance& disturbance) {
  if (self.arrived) return {self.p, {0.0, 0.0}, true};
  const Vec2 to_goal = goal - self.p;
  const double dist = norm(to_goal);
  if (dist <= speed * dt) return {goal, {0.0, 0.0}, true};

  Vec2 pref = (speed / dist) * to_goal;
  pref.y *= 1.0 + disturbance.lateral_gain;
  pref = pref + disturbance.jitter;

  const ObstacleState* nearest = nullptr;
  double best = sensing_range;
  for (const auto& o : neighbors) {
    const double d = norm(o.p - self.p);
    if (d > 0.0 && d <= best) {
      best = d;
      nearest = &o;
    }
  }
  Vec2 v = pref;
  if (nearest && in_collision_cone(pref, self, *nearest, clearance)) {
    constexpr double kStep = kPi / 180.0;
    v = {0.0, 0.0};
    for (int k = 1; k <= 180; ++k) {
      const Vec2 ccw = rotate(pref, k * kStep);
      if (!in_collision_cone(ccw, self, *nearest, clearance)) {
        v = ccw;
        break;
      }
      const Vec2 cw = rotate(pref, -k * kStep);
      if (!in_collision_cone(cw, self, *nearest, clearance)) {
        v = cw;
        break;
      }
    }
  }
  return {self.p + dt * v, v, false};
}

std::vector<Vec2> ObstacleTrajectories::at(int t) const {
  std::vector<Vec2> out;
  for (const auto& p : positions) out.push_back(p.at(t));
  return out;
}

std::vector<predictor::ObstacleHistory> ObstacleTrajectories::histories(int t, double dt) const {
  std::vector<predictor::ObstacleHistory> out;
  for (const auto& p : positions) {
    out.push_back({std::vector<Vec2>(p.begin(), p.begin() + t + 1), dt});
  }
  return out;
}

ObstacleTrajectories simulate_obstacles(const EnvironmentConfig& cfg, const RealizedEnvironment& env,
                                        int T, std::uint64_t seed) {
  const int n = cfg.agents();
  Rng rng(seed);
  boost::random::normal_distribution<double> normal;
  std::vector<ObstacleState> state(n);
  std::vector<double> w(n);
  ObstacleTrajectories out;
  out.T = T;
  out.positions.assign(n, std::vector<Vec2>(static_cast<std::size_t>(T) + 1));
  for (int i = 0; i < n; ++i) {
    state[i].p = cfg.start[i];
    const Vec2 d = env.goals[i] - cfg.start[i];
    state[i].v = (env.speeds[i] / norm(d)) * d;
    w[i] = normal(rng);
    out.positions[i][0] = state[i].p;
  }
  const double phi = cfg.noise.tau_c > 0.0 ? std::exp(-cfg.dt / cfg.noise.tau_c) : 0.0;
  const double innov = std::sqrt(1.0 - phi * phi);
  std::vector<ObstacleState> next(n);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      w[i] = phi * w[i] + innov * normal(rng);
      ObstacleDisturbance dist;
      dist.lateral_gain = cfg.noise.kappa * w[i];
      dist.jitter = {cfg.noise.jitter * normal(rng), cfg.noise.jitter * normal(rng)};
      std::vector<ObstacleState> others;
      for (int k = 0; k < n; ++k) {
        if (k != i) others.push_back(state[k]);
      }
      next[i] = obstacle_step(state[i], env.goals[i], env.speeds[i], others, cfg.dt, cfg.clearance,
                              cfg.sensing_range, dist);
    }
    state = next;
    for (int i = 0; i < n; ++i) out.positions[i][t + 1] = state[i].p;
  }
  return out;
}

double estimate_nuisance(const std::vector<std::vector<double>>& lateral, int T_b, double dt) {
  if (lateral.empty() || T_b < 1) throw std::invalid_argument("need obstacles and T_b >= 1");
  double acc = 0.0;
  for (const auto& y : lateral) {
    if (static_cast<int>(y.size()) < T_b + 1) throw std::invalid_argument("buffer shorter than T_b + 1 samples");
    for (int t = 0; t < T_b; ++t) acc += std::abs((y[t + 1] - y[t]) / dt);
  }
  return acc / (static_cast<double>(lateral.size()) * T_b);
}

double estimate_nuisance(const ObstacleTrajectories& traj, int T_b, double dt) {
  std::vector<std::vector<double>> lat;
  for (const auto& p : traj.positions) {
    std::vector<double> y;
    for (int t = 0; t <= std::min<int>(T_b, static_cast<int>(p.size()) - 1); ++t) y.push_back(p[t].y);
    lat.push_back(std::move(y));
  }
  return estimate_nuisance(lat, T_b, dt);
}

CollisionCheck check_collision(Vec2 ego, const std::vector<Vec2>& obstacles, double eps) {
  CollisionCheck c;
  c.margin = std::numeric_limits<double>::infinity();
  for (const auto& o : obstacles) c.margin = std::min(c.margin, norm(ego - o) - eps);
  c.collision = c.margin < 0.0;
  return c;
}

nlohmann::json to_json(const EpisodeTrace& tr) {
  nlohmann::json ego = nlohmann::json::array(), inputs = nlohmann::json::array();
  for (const auto& s : tr.ego) ego.push_back({s.x, s.y, s.theta, s.v});
  for (const auto& u : tr.inputs) inputs.push_back({u.phi, u.a});
  nlohmann::json obs = nlohmann::json::array();
  for (const auto& step : tr.obstacles) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& p : step) row.push_back(vec_json(p));
    obs.push_back(row);
  }
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& step : tr.predictions) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& p : step) row.push_back(vec_json(p));
    preds.push_back(row);
  }
  return {{"env", tr.env},          {"case", tr.case_id},         {"loop", tr.loop},
          {"episode", tr.episode},  {"seed", tr.seed},            {"eta", tr.eta},
          {"score", tr.score},      {"threshold", tr.threshold},  {"r_used", tr.r_used},
          {"ego", ego},             {"inputs", inputs},           {"obstacles", obs},
          {"predictions", preds},   {"radii", tr.radii},          {"step_ms", tr.step_ms}, {"calibration_ms", tr.calibration_ms},
          {"collision", tr.collision}, {"coverage", tr.coverage}, {"fallback", tr.fallback},
          {"infeasible", tr.infeasible}, {"failed", tr.failed},   {"failure", tr.failure},
          {"min_margin", tr.min_margin}};
}

std::string trace_csv_header() {
  return "env,case,loop,episode,seed,eta,score,threshold,r_used,coverage,collision,fallback,"
         "infeasible,failed,min_margin,mean_ms,max_ms";
}

std::string trace_csv_row(const EpisodeTrace& tr) {
  double mean = 0.0, mx = 0.0;
  for (double v : tr.step_ms) {
    mean += v;
    mx = std::max(mx, v);
  }
  if (!tr.step_ms.empty()) mean /= static_cast<double>(tr.step_ms.size());
  std::ostringstream os;
  os.precision(10);
  os << tr.env << ',' << tr.case_id << ',' << tr.loop << ',' << tr.episode << ',' << tr.seed << ','
     << tr.eta << ',' << tr.score << ',' << tr.threshold << ',' << tr.r_used << ',' << tr.coverage << ','
     << tr.collision << ',' << tr.fallback << ',' << tr.infeasible << ',' << tr.failed << ','
     << tr.min_margin << ',' << mean << ',' << mx;
  return os.str();
}

nlohmann::json to_json(const EnvironmentConfig& cfg) {
  nlohmann::json starts = nlohmann::json::array(), gy = nlohmann::json::array();
  for (const auto& s : cfg.start) starts.push_back(vec_json(s));
  for (const auto& g : cfg.goal_y_interval) gy.push_back({g.first, g.second});
  return {{"k", cfg.k},
          {"start", starts},
          {"goal_x", cfg.goal_x},
          {"goal_y_interval", gy},
          {"speed_interval", {cfg.speed_interval.first, cfg.speed_interval.second}},
          {"dt", cfg.dt},
          {"clearance", cfg.clearance},
          {"sensing_range", cfg.sensing_range},
          {"noise", {{"kappa", cfg.noise.kappa}, {"tau_c", cfg.noise.tau_c}, {"jitter", cfg.noise.jitter}}},
          {"seed", cfg.seed}};
}

EnvironmentConfig environment_from_json(const nlohmann::json& j) {
  EnvironmentConfig cfg = make_environment(j.value("k", 0));
  if (j.contains("start")) {
    cfg.start.clear();
    for (const auto& s : j.at("start")) cfg.start.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
  }
  cfg.goal_x = j.value("goal_x", cfg.goal_x);
  if (j.contains("goal_y_interval")) {
    cfg.goal_y_interval.clear();
    for (const auto& g : j.at("goal_y_interval")) cfg.goal_y_interval.push_back({g.at(0).get<double>(), g.at(1).get<double>()});
  }
  if (j.contains("speed_interval")) {
    cfg.speed_interval = {j.at("speed_interval").at(0).get<double>(), j.at("speed_interval").at(1).get<double>()};
  }
  cfg.dt = j.value("dt", cfg.dt);
  cfg.clearance = j.value("clearance", cfg.clearance);
  cfg.sensing_range = j.value("sensing_range", cfg.sensing_range);
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    cfg.noise.kappa = n.value("kappa", cfg.noise.kappa);
    cfg.noise.tau_c = n.value("tau_c", cfg.noise.tau_c);
    cfg.noise.jitter = n.value("jitter", cfg.noise.jitter);
  }
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

nlohmann::json to_json(const WorldConfig& w) {
  return {{"T", w.T},
          {"H", w.H},
          {"T_b", w.T_b},
          {"dt", w.dt},
          {"eps", w.eps},
          {"ego_start", {w.ego_start.x, w.ego_start.y, w.ego_start.theta, w.ego_start.v}},
          {"ego_goal", {w.ego_goal_x, w.ego_goal_y}},
          {"corridor_half_width", w.corridor_half_width},
          {"limits",
           {{"wheelbase", w.limits.wheelbase},
            {"phi_max", w.limits.phi_max},
            {"a_max", w.limits.a_max},
            {"v_min", w.limits.v_min},
            {"v_max", w.limits.v_max}}}};
}

WorldConfig world_from_json(const nlohmann::json& j) {
  WorldConfig w;
  w.T = j.value("T", w.T);
  w.H = j.value("H", w.H);
  w.T_b = j.value("T_b", w.T_b);
  w.dt = j.value("dt", w.dt);
  w.eps = j.value("eps", w.eps);
  if (j.contains("ego_start")) {
    const auto s = j.at("ego_start").get<std::vector<double>>();
    if (s.size() != 4) throw std::invalid_argument("ego_start needs 4 values");
    w.ego_start = {s[0], s[1], s[2], s[3]};
  }
  if (j.contains("ego_goal")) {
    w.ego_goal_x = j.at("ego_goal").at(0).get<double>();
    w.ego_goal_y = j.at("ego_goal").at(1).get<double>();
  }
  w.corridor_half_width = j.value("corridor_half_width", w.corridor_half_width);
  if (j.contains("limits")) {
    const auto& l = j.at("limits");
    w.limits.wheelbase = l.value("wheelbase", w.limits.wheelbase);
    w.limits.phi_max = l.value("phi_max", w.limits.phi_max);
    w.limits.a_max = l.value("a_max", w.limits.a_max);
    w.limits.v_min = l.value("v_min", w.limits.v_min);
    w.limits.v_max = l.value("v_max", w.limits.v_max);
  }
  return w;
}

}  // namespace rcp::sim
