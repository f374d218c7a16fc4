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

#include <fstream>

#include "rcp/harness.hpp"

namespace rcp::harness {

namespace {

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->template get<T>();
}

nlohmann::json to_json(const planner::SolverOptions& s) {
  return {{"penalty0", s.penalty0},   {"penalty_growth", s.penalty_growth}, {"max_outer", s.max_outer},
          {"max_inner", s.max_inner}, {"tolerance", s.tolerance},           {"backoff", s.backoff},
          {"multi_start", s.multi_start}, {"activity_threshold", s.activity_threshold}};
}

planner::SolverOptions solver_from_json(const nlohmann::json& j) {
  planner::SolverOptions s;
  get_if(j, "penalty0", s.penalty0);
  get_if(j, "penalty_growth", s.penalty_growth);
  get_if(j, "max_outer", s.max_outer);
  get_if(j, "max_inner", s.max_inner);
  get_if(j, "tolerance", s.tolerance);
  get_if(j, "backoff", s.backoff);
  get_if(j, "multi_start", s.multi_start);
  get_if(j, "activity_threshold", s.activity_threshold);
  return s;
}

}  // namespace

diffusion::DiffusionConfig case_study_diffusion() {
  diffusion::DiffusionConfig d;
  d.steps = 40;
  d.beta_start = 1e-4;
  d.beta_end = 0.05;
  d.encoder_hidden = {64, 64};
  d.noise_hidden = {32};
  d.batch = 256;
  d.encoder_epochs = 20;
  d.noise_epochs = 40;
  d.encoder_lr = 2e-3;
  d.noise_lr = 2e-3;
  return d;
}

nlohmann::json to_json(const CaseStudyConfig& c) {
  return {
      {"schema_version", CaseStudyConfig::kSchemaVersion},
      {"seed", c.seed},
      {"world", sim::to_json(c.world)},
      {"noise", {{"kappa", c.noise.kappa}, {"tau_c", c.noise.tau_c}, {"jitter", c.noise.jitter}}},
      {"predictor_window", c.predictor_window},
      {"train_envs", c.train_envs},
      {"train_episodes_per_env", c.train_episodes_per_env},
      {"validation_episodes_per_env", c.validation_episodes_per_env},
      {"case0_sigma_episodes", c.case0_sigma_episodes},
      {"case0_calibration_episodes", c.case0_calibration_episodes},
      {"diffusion", diffusion::to_json(c.diffusion)},
      {"sigma_floor", c.sigma_floor},
      {"delta", c.delta},
      {"K", c.K},
      {"rho", c.rho},
      {"nearest", c.nearest},
      {"l2_pairs", c.l2_pairs},
      {"e_draws", c.e_draws},
      {"e_max_rows", c.e_max_rows},
      {"episodes", c.episodes},
      {"timing_K", c.timing_K},
      {"timing_episodes", c.timing_episodes},
      {"timing_steps", c.timing_steps},
      {"weights", {{"tracking", c.weights.tracking}, {"effort", c.weights.effort}, {"terminal", c.weights.terminal}}},
      {"solver", to_json(c.solver)},
      {"sweep",
       {{"envs", c.sweep.envs},
        {"grid", c.sweep.grid},
        {"t_fixed", c.sweep.t_fixed},
        {"h_set", c.sweep.h_set},
        {"test_episodes", c.sweep.test_episodes},
        {"draws", c.sweep.draws}}},
      {"gates",
       {{"enabled", c.gates.enabled},
        {"coverage_min", c.gates.coverage_min},
        {"safety_min", c.gates.safety_min},
        {"robust_cases", c.gates.robust_cases}}},
  };
}

CaseStudyConfig config_from_json(const nlohmann::json& j) {
  const int version = j.value("schema_version", 0);
  if (version != CaseStudyConfig::kSchemaVersion) {
    throw Error("unsupported config schema_version " + std::to_string(version));
  }
  CaseStudyConfig c;
  c.diffusion = case_study_diffusion();
  get_if(j, "seed", c.seed);
  if (j.contains("world")) c.world = sim::world_from_json(j.at("world"));
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    get_if(n, "kappa", c.noise.kappa);
    get_if(n, "tau_c", c.noise.tau_c);
    get_if(n, "jitter", c.noise.jitter);
  }
  get_if(j, "predictor_window", c.predictor_window);
  get_if(j, "train_envs", c.train_envs);
  get_if(j, "train_episodes_per_env", c.train_episodes_per_env);
  get_if(j, "validation_episodes_per_env", c.validation_episodes_per_env);
  get_if(j, "case0_sigma_episodes", c.case0_sigma_episodes);
  get_if(j, "case0_calibration_episodes", c.case0_calibration_episodes);
  if (j.contains("diffusion")) c.diffusion = diffusion::diffusion_config_from_json(j.at("diffusion"));
  get_if(j, "sigma_floor", c.sigma_floor);
  get_if(j, "delta", c.delta);
  get_if(j, "K", c.K);
  get_if(j, "rho", c.rho);
  get_if(j, "nearest", c.nearest);
  get_if(j, "l2_pairs", c.l2_pairs);
  get_if(j, "e_draws", c.e_draws);
  get_if(j, "e_max_rows", c.e_max_rows);
  get_if(j, "episodes", c.episodes);
  get_if(j, "timing_K", c.timing_K);
  get_if(j, "timing_episodes", c.timing_episodes);
  get_if(j, "timing_steps", c.timing_steps);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    get_if(w, "tracking", c.weights.tracking);
    get_if(w, "effort", c.weights.effort);
    get_if(w, "terminal", c.weights.terminal);
  }
  if (j.contains("solver")) c.solver = solver_from_json(j.at("solver"));
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    get_if(s, "envs", c.sweep.envs);
    get_if(s, "grid", c.sweep.grid);
    get_if(s, "t_fixed", c.sweep.t_fixed);
    get_if(s, "h_set", c.sweep.h_set);
    get_if(s, "test_episodes", c.sweep.test_episodes);
    get_if(s, "draws", c.sweep.draws);
  }
  if (j.contains("gates")) {
    const auto& g = j.at("gates");
    get_if(g, "enabled", c.gates.enabled);
    get_if(g, "coverage_min", c.gates.coverage_min);
    get_if(g, "safety_min", c.gates.safety_min);
    get_if(g, "robust_cases", c.gates.robust_cases);
  }
  if (!(c.delta > 0.0 && c.delta < 1.0)) throw Error("delta must lie in (0,1)");
  if (c.K < 1 || c.episodes < 0 || c.nearest < 1) throw Error("K, episodes and nearest must be positive");
  return c;
}

CaseStudyConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read config " + path);
  return config_from_json(nlohmann::json::parse(is));
}

std::string config_hash(const CaseStudyConfig& c) { return fnv1a_hex(to_json(c).dump()); }

}  // namespace rcp::harness
