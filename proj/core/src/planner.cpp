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

#include "rcp/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>
#include <glog/logging.h>

namespace rcp::planner {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double hinge_sq(double m) { return m < 0.0 ? m * m : 0.0; }
double hinge_sq_grad(double m) { return m < 0.0 ? 2.0 * m : 0.0; }

bool finite_regions(const MPCProblem& p) {
  return std::all_of(p.radii.begin(), p.radii.end(), [](double r) { return std::isfinite(r); });
}

void validate(const MPCProblem& p) {
  if (p.H < 1) throw std::invalid_argument("horizon must be >= 1");
  if (p.centers.size() != static_cast<std::size_t>(p.H) * p.N || p.radii.size() != p.centers.size()) {
    throw std::invalid_argument("regions must be defined for every (step, agent) in the horizon");
  }
}

class PenalizedCost final : public ceres::FirstOrderFunction {
 public:
  PenalizedCost(const MPCProblem& p, double mu, double backoff) : p_(p), mu_(mu), backoff_(backoff) {}
  bool Evaluate(const double* params, double* value, double* gradient) const override {
    std::vector<double> z(params, params + NumParameters());
    std::vector<double> g;
    *value = penalized_objective(p_, z, mu_, backoff_, gradient ? &g : nullptr);
    if (!std::isfinite(*value)) return false;
    if (gradient) std::copy(g.begin(), g.end(), gradient);
    return true;
  }
  int NumParameters() const override { return 2 * p_.H; }

 private:
  const MPCProblem& p_;
  double mu_, backoff_;
};

struct Attempt {
  std::vector<double> z;
  double violation = kInf;
  double objective = kInf;
  bool converged = false;
  int outer = 0;
};

double max_violation(const MPCProblem& p, const std::vector<sim::EgoState>& states) {
  double v = 0.0;
  for (double m : margins(p, states)) v = std::max(v, -m);
  return v;
}

Attempt run_penalty_loop(const MPCProblem& p, std::vector<double> z, const SolverOptions& opt) {
  Attempt a;
  double mu = opt.penalty0;
  ceres::GradientProblemSolver::Options o;
  o.line_search_direction_type = ceres::LBFGS;
  o.max_num_iterations = opt.max_inner;
  o.function_tolerance = 1e-12;
  o.gradient_tolerance = 1e-10;
  o.parameter_tolerance = 1e-12;
  o.logging_type = ceres::SILENT;
  o.minimizer_progress_to_stdout = false;
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    ceres::GradientProblem problem(new PenalizedCost(p, mu, opt.backoff));
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(o, problem, z.data(), &summary);
    a.outer = outer + 1;
    a.converged = summary.termination_type == ceres::CONVERGENCE;
    const auto states = rollout(p, decode_inputs(p, z));
    a.violation = max_violation(p, states);
    if (a.violation <= opt.tolerance) break;
    mu *= opt.penalty_growth;
  }
  a.z = std::move(z);
  a.objective = cost(p, decode_inputs(p, a.z));
  return a;
}

bool better(const Attempt& a, const Attempt& b, double tol) {
  const bool fa = a.violation <= tol, fb = b.violation <= tol;
  if (fa != fb) return fa;
  if (!fa) return a.violation < b.violation;
  return a.objective < b.objective;
}

double min_obstacle_margin(const MPCProblem& p, const std::vector<sim::EgoState>& states) {
  double m = kInf;
  for (int k = 1; k <= p.H; ++k) {
    for (int i = 0; i < p.N; ++i) {
      const std::size_t idx = static_cast<std::size_t>(k - 1) * p.N + i;
      m = std::min(m, tighten_constraint(p.centers[idx], p.radii[idx], p.eps, {states[k].x, states[k].y}));
    }
  }
  return m;
}

}  // namespace

std::string to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::MaxIter: return "max_iter";
    case Status::Infeasible: return "infeasible";
  }
  return "unknown";
}

double tighten_constraint(Vec2 pred, double radius, double eps, Vec2 ego_pos) {
  return norm(ego_pos - pred) - radius - eps;
}

std::vector<sim::EgoInput> decode_inputs(const MPCProblem& p, const std::vector<double>& z) {
  std::vector<sim::EgoInput> u(static_cast<std::size_t>(p.H));
  for (int k = 0; k < p.H; ++k) {
    u[k].phi = p.limits.phi_max * std::tanh(z[2 * k]);
    u[k].a = p.limits.a_max * std::tanh(z[2 * k + 1]);
  }
  return u;
}

std::vector<double> encode_inputs(const MPCProblem& p, const std::vector<sim::EgoInput>& u) {
  constexpr double kEdge = 1.0 - 1e-9;
  std::vector<double> z(2 * static_cast<std::size_t>(p.H), 0.0);
  for (int k = 0; k < p.H && k < static_cast<int>(u.size()); ++k) {
    z[2 * k] = std::atanh(std::clamp(u[k].phi / p.limits.phi_max, -kEdge, kEdge));
    z[2 * k + 1] = std::atanh(std::clamp(u[k].a / p.limits.a_max, -kEdge, kEdge));
  }
  return z;
}

std::vector<sim::EgoState> rollout(const MPCProblem& p, const std::vector<sim::EgoInput>& u) {
  std::vector<sim::EgoState> s{p.x0};
  for (const auto& in : u) {
    s.push_back(sim::ego_step(s.back(), in, p.dt, p.limits.wheelbase, p.limits.v_min, p.limits.v_max));
  }
  return s;
}

double cost(const MPCProblem& p, const std::vector<sim::EgoInput>& u) {
  const auto s = rollout(p, u);
  double j = 0.0;
  for (int k = 0; k < p.H; ++k) j += p.weights.effort * (u[k].phi * u[k].phi + u[k].a * u[k].a);
  for (int k = 1; k <= p.H; ++k) {
    const double d2 = (s[k].x - p.goal.x) * (s[k].x - p.goal.x) + (s[k].y - p.goal.y) * (s[k].y - p.goal.y);
    j += p.weights.tracking * d2;
    if (k == p.H) j += p.weights.terminal * d2;
  }
  return j;
}

std::vector<double> margins(const MPCProblem& p, const std::vector<sim::EgoState>& states) {
  std::vector<double> m;
  for (int k = 1; k <= p.H; ++k) {
    for (int i = 0; i < p.N; ++i) {
      const std::size_t idx = static_cast<std::size_t>(k - 1) * p.N + i;
      m.push_back(tighten_constraint(p.centers[idx], p.radii[idx], p.eps, {states[k].x, states[k].y}));
    }
  }
  for (int k = 1; k <= p.H; ++k) {
    m.push_back(p.y_max - states[k].y);
    m.push_back(states[k].y - p.y_min);
  }
  return m;
}

double penalized_objective(const MPCProblem& p, const std::vector<double>& z, double mu, double backoff,
                           std::vector<double>* grad) {
  const int H = p.H;
  const auto u = decode_inputs(p, z);
  const auto s = rollout(p, u);
  const double L = p.limits.wheelbase, dt = p.dt;

  double j = 0.0;
  // d(stage cost)/d(x, y) at every step k = 1..H.
  std::vector<double> gx(H + 1, 0.0), gy(H + 1, 0.0);
  for (int k = 0; k < H; ++k) j += p.weights.effort * (u[k].phi * u[k].phi + u[k].a * u[k].a);
  for (int k = 1; k <= H; ++k) {
    const double w = p.weights.tracking + (k == H ? p.weights.terminal : 0.0);
    const double dx = s[k].x - p.goal.x, dy = s[k].y - p.goal.y;
    j += w * (dx * dx + dy * dy);
    gx[k] += 2.0 * w * dx;
    gy[k] += 2.0 * w * dy;
    for (int i = 0; i < p.N; ++i) {
      const std::size_t idx = static_cast<std::size_t>(k - 1) * p.N + i;
      const double rx = s[k].x - p.centers[idx].x, ry = s[k].y - p.centers[idx].y;
      const double dist = std::hypot(rx, ry);
      const double m = dist - p.radii[idx] - p.eps - backoff;
      if (m < 0.0) {
        j += mu * hinge_sq(m);
        if (dist > 0.0) {
          gx[k] += mu * hinge_sq_grad(m) * rx / dist;
          gy[k] += mu * hinge_sq_grad(m) * ry / dist;
        }
      }
    }
    const double m_hi = p.y_max - s[k].y - backoff;
    const double m_lo = s[k].y - p.y_min - backoff;
    j += mu * (hinge_sq(m_hi) + hinge_sq(m_lo));
    gy[k] += mu * (-hinge_sq_grad(m_hi) + hinge_sq_grad(m_lo));
  }
  if (!grad) return j;

  grad->assign(2 * static_cast<std::size_t>(H), 0.0);
  // Adjoint of the state (x, y, theta, v) at step k + 1.
  double lx = gx[H], ly = gy[H], lth = 0.0, lv = 0.0;
  for (int k = H - 1; k >= 0; --k) {
    const auto& sk = s[k];
    const double vraw = sk.v + dt * u[k].a;
    const double inside = (vraw > p.limits.v_min && vraw < p.limits.v_max) ? 1.0 : 0.0;
    const double c = std::cos(u[k].phi);
    const double dphi = lth * dt * sk.v / (L * c * c) + 2.0 * p.weights.effort * u[k].phi;
    const double da = lv * dt * inside + 2.0 * p.weights.effort * u[k].a;
    const double tz0 = std::tanh(z[2 * k]), tz1 = std::tanh(z[2 * k + 1]);
    (*grad)[2 * k] = dphi * p.limits.phi_max * (1.0 - tz0 * tz0);
    (*grad)[2 * k + 1] = da * p.limits.a_max * (1.0 - tz1 * tz1);
    if (k == 0) break;
    const double ct = std::cos(sk.theta), st = std::sin(sk.theta);
    const double nlx = gx[k] + lx;
    const double nly = gy[k] + ly;
    const double nlth = lx * (-dt * sk.v * st) + ly * (dt * sk.v * ct) + lth;
    const double nlv = lx * dt * ct + ly * dt * st + lth * dt * std::tan(u[k].phi) / L + lv * inside;
    lx = nlx;
    ly = nly;
    lth = nlth;
    lv = nlv;
  }
  return j;
}

MPCSolution solve(const MPCProblem& p, const MPCSolution* warm_start, const SolverOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  // Line-search warnings from the optimizer are expected on flat penalty regions.
  static const bool quiet = [] {
    FLAGS_minloglevel = google::GLOG_ERROR;
    return true;
  }();
  (void)quiet;
  validate(p);
  auto finish = [&](MPCSolution s) {
    s.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return s;
  };
  if (!finite_regions(p)) {
    MPCSolution s;
    s.inputs.assign(static_cast<std::size_t>(p.H), {});
    s.states = rollout(p, s.inputs);
    s.status = Status::Infeasible;
    s.max_violation = kInf;
    s.objective = cost(p, s.inputs);
    return finish(s);
  }

  std::vector<double> z0 = warm_start && static_cast<int>(warm_start->inputs.size()) == p.H
                               ? encode_inputs(p, warm_start->inputs)
                               : std::vector<double>(2 * static_cast<std::size_t>(p.H), 0.0);
  Attempt best = run_penalty_loop(p, z0, opt);

  if (opt.multi_start) {
    const auto states = rollout(p, decode_inputs(p, best.z));
    const bool near = best.violation > opt.tolerance ||
                      min_obstacle_margin(p, states) < opt.backoff + opt.activity_threshold;
    if (near) {
      for (double side : {1.0, -1.0}) {
        std::vector<sim::EgoInput> seed(static_cast<std::size_t>(p.H));
        for (int k = 0; k < p.H; ++k) {
          seed[k].phi = (k < p.H / 2 ? side : -side) * 0.5 * p.limits.phi_max;
          seed[k].a = 0.0;
        }
        Attempt a = run_penalty_loop(p, encode_inputs(p, seed), opt);
        if (better(a, best, opt.tolerance)) best = std::move(a);
      }
    }
  }

  MPCSolution s;
  s.inputs = decode_inputs(p, best.z);
  s.states = rollout(p, s.inputs);
  s.objective = best.objective;
  s.max_violation = max_violation(p, s.states);
  s.outer_iterations = best.outer;
  if (!std::isfinite(s.objective)) throw Error("planner cost is not finite");
  if (s.max_violation > opt.tolerance) {
    s.status = Status::Infeasible;
  } else {
    s.status = best.converged ? Status::Optimal : Status::MaxIter;
  }
  return finish(s);
}

MPCSolution fallback(const MPCProblem& p) {
  MPCSolution s;
  s.inputs.assign(static_cast<std::size_t>(p.H), {0.0, -p.limits.a_max});
  s.states = rollout(p, s.inputs);
  s.objective = cost(p, s.inputs);
  s.status = Status::Infeasible;
  s.max_violation = finite_regions(p) ? max_violation(p, s.states) : kInf;
  s.fallback = true;
  return s;
}

MPCSolution shift_solution(const MPCSolution& prev, const MPCProblem& next) {
  MPCSolution s = prev;
  if (!s.inputs.empty()) {
    s.inputs.erase(s.inputs.begin());
    s.inputs.push_back(s.inputs.empty() ? sim::EgoInput{} : s.inputs.back());
  }
  s.inputs.resize(static_cast<std::size_t>(next.H), s.inputs.empty() ? sim::EgoInput{} : s.inputs.back());
  s.states = rollout(next, s.inputs);
  return s;
}

nlohmann::json to_json(const MPCSolution& s) {
  nlohmann::json u = nlohmann::json::array(), x = nlohmann::json::array();
  for (const auto& in : s.inputs) u.push_back({in.phi, in.a});
  for (const auto& st : s.states) x.push_back({st.x, st.y, st.theta, st.v});
  return {{"inputs", u},           {"states", x},         {"objective", s.objective},
          {"status", to_string(s.status)}, {"solve_ms", s.solve_ms}, {"max_violation", s.max_violation},
          {"fallback", s.fallback}, {"outer_iterations", s.outer_iterations}};
}

}  // namespace rcp::planner
