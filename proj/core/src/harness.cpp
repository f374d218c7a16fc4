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

#include "rcp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rcp/predictor.hpp"

namespace rcp::harness {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Seed-path tags.
enum : std::uint64_t {
  kTagTrain = 1,
  kTagValidation = 2,
  kTagCase0Sigma = 3,
  kTagCase0Calib = 4,
  kTagTest = 5,
  kTagSynthetic = 6,
  kTagTiming = 7,
  kTagStepMse = 8,
  kTagL2 = 9,
};

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(std::max<long long>(1, conformal::ceil_index(p * v.size())));
  return v[std::min(k, v.size()) - 1];
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string env_name(int k) { return k == 0 ? "train" : "E" + std::to_string(k); }

void say(std::ostream* log, const std::string& msg) {
  if (log) *log << msg << std::endl;
}

// Sigma over an arbitrary lookahead; beyond the table it grows linearly from the last row.
double sigma_ext(const scores::SigmaTable& s, int h, int i) {
  const int H = s.horizon();
  return h <= H ? s.at(h, i) : s.at(H, i) * static_cast<double>(h) / H;
}

planner::MPCProblem make_problem(const CaseStudyConfig& cfg, const sim::ObstacleTrajectories& traj,
                                 const sim::EgoState& x0, int t, int horizon,
                                 const scores::SigmaTable& sigma, double threshold) {
  const auto& w = cfg.world;
  planner::MPCProblem p;
  p.x0 = x0;
  p.H = horizon;
  p.N = traj.agents();
  p.dt = w.dt;
  p.eps = w.eps;
  p.goal = {w.ego_goal_x, w.ego_goal_y};
  p.weights = cfg.weights;
  p.limits = w.limits;
  p.y_min = -w.corridor_half_width;
  p.y_max = w.corridor_half_width;
  const auto pred = predictor::predict(traj.histories(t, w.dt), t, horizon, cfg.predictor_window);
  p.centers = pred.yhat;
  for (int h = 1; h <= horizon; ++h) {
    for (int i = 0; i < p.N; ++i) p.radii.push_back(sigma_ext(sigma, h, i) * threshold);
  }
  return p;
}

nlohmann::json samples_json(const std::vector<diffusion::Sample>& s) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& x : s) a.push_back({x.c.eta, x.c.t, x.c.h, x.c.i, x.target});
  return a;
}

std::vector<diffusion::Sample> samples_from_json(const nlohmann::json& a) {
  std::vector<diffusion::Sample> out;
  for (const auto& r : a) {
    out.push_back({{r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>()},
                   r[4].get<double>()});
  }
  return out;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << j.dump(1) << '\n';
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path);
  return nlohmann::json::parse(is);
}

}  // namespace

std::string to_string(Loop loop) { return loop == Loop::Open ? "open" : "closed"; }

Loop loop_from_string(const std::string& s) {
  if (s == "open") return Loop::Open;
  if (s == "closed") return Loop::Closed;
  throw std::invalid_argument("loop must be open or closed");
}

CaseSpec CaseSpec::make(int case_id, Loop loop) {
  CaseSpec c;
  c.loop = loop;
  switch (case_id) {
    case 0: c = {CaseId::Case0, CalibrationSource::RealTrainEnv, AmbiguitySource::None, loop}; break;
    case 1: c = {CaseId::Case1, CalibrationSource::Synthetic, AmbiguitySource::None, loop}; break;
    case 2: c = {CaseId::Case2, CalibrationSource::Synthetic, AmbiguitySource::EmpiricalWInf, loop}; break;
    case 3: c = {CaseId::Case3, CalibrationSource::Synthetic, AmbiguitySource::AnalyticBound, loop}; break;
    default: throw std::invalid_argument("case must be 0, 1, 2 or 3");
  }
  return c;
}

sim::EnvironmentConfig environment(const CaseStudyConfig& cfg, int k) {
  auto e = sim::make_environment(k);
  e.noise = cfg.noise;
  e.dt = cfg.world.dt;
  return e;
}

scores::PredictionErrorTensor prediction_errors(const sim::ObstacleTrajectories& traj,
                                                const sim::WorldConfig& world, int window) {
  const int T = world.T, H = world.H, N = traj.agents();
  if (traj.T < T) throw std::invalid_argument("trajectories shorter than the episode");
  scores::PredictionErrorTensor e(T, H, N);
  for (int t = 1; t <= T - 1; ++t) {
    const int h_max = std::min(H, T - t);
    const auto pred = predictor::predict(traj.histories(t, world.dt), t, h_max, window);
    for (int h = 1; h <= h_max; ++h) {
      for (int i = 0; i < N; ++i) e.set(t, t + h, i, norm(pred.at(t + h, i) - traj.positions[i][t + h]));
    }
  }
  return e;
}

EpisodeData simulate_episode(const CaseStudyConfig& cfg, int env_k, std::uint64_t seed) {
  const auto env = environment(cfg, env_k);
  EpisodeData ep;
  ep.env = env_k;
  const auto realized = sim::sample_environment(env, derive_seed(seed, {0}));
  ep.obstacles = sim::simulate_obstacles(env, realized, cfg.world.T, derive_seed(seed, {1}));
  ep.eta = sim::estimate_nuisance(ep.obstacles, cfg.world.T_b, cfg.world.dt);
  ep.errors = prediction_errors(ep.obstacles, cfg.world, cfg.predictor_window);
  return ep;
}

std::vector<diffusion::Sample> to_samples(const EpisodeData& ep) {
  std::vector<diffusion::Sample> out;
  for (const auto& x : ep.errors.entries()) {
    out.push_back({{ep.eta, static_cast<double>(x.t), static_cast<double>(x.tau - x.t), static_cast<double>(x.i)},
                   x.value});
  }
  return out;
}

Dataset generate_training_data(const CaseStudyConfig& cfg, const std::vector<int>& envs,
                               int episodes_per_env, std::uint64_t seed) {
  Dataset d;
  for (int k : envs) {
    for (int e = 0; e < episodes_per_env; ++e) {
      const auto ep = simulate_episode(cfg, k, derive_seed(seed, {static_cast<std::uint64_t>(k),
                                                                  static_cast<std::uint64_t>(e)}));
      auto s = to_samples(ep);
      d.samples.insert(d.samples.end(), s.begin(), s.end());
      d.episode_env.push_back(k);
      d.episode_eta.push_back(ep.eta);
      d.errors.push_back(ep.errors);
    }
  }
  return d;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string dataset_hash(const Dataset& d) {
  std::ostringstream os;
  write_dataset_csv(os, d);
  return fnv1a_hex(os.str());
}

void write_dataset_csv(std::ostream& os, const Dataset& d) {
  os << "episode,env,eta,t,h,i,error\n";
  os << std::setprecision(17);
  for (std::size_t e = 0; e < d.errors.size(); ++e) {
    for (const auto& x : d.errors[e].entries()) {
      os << e << ',' << d.episode_env[e] << ',' << d.episode_eta[e] << ',' << x.t << ',' << x.tau - x.t << ','
         << x.i << ',' << x.value << '\n';
    }
  }
}

Dataset read_dataset_csv(std::istream& is, const sim::WorldConfig& world) {
  Dataset d;
  std::string line;
  if (!std::getline(is, line) || line.rfind("episode,", 0) != 0) throw Error("dataset CSV header missing");
  long long current = -1;
  int n_agents = 0;
  struct Row {
    long long ep;
    int env, t, h, i;
    double eta, v;
  };
  std::vector<Row> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Row r{};
    char c;
    if (!(ls >> r.ep >> c >> r.env >> c >> r.eta >> c >> r.t >> c >> r.h >> c >> r.i >> c >> r.v)) {
      throw Error("malformed dataset row: " + line);
    }
    n_agents = std::max(n_agents, r.i + 1);
    rows.push_back(r);
  }
  for (const auto& r : rows) {
    if (r.ep != current) {
      if (r.ep != current + 1) throw Error("dataset episodes must be contiguous");
      current = r.ep;
      d.episode_env.push_back(r.env);
      d.episode_eta.push_back(r.eta);
      d.errors.emplace_back(world.T, world.H, n_agents);
    }
    d.errors.back().set(r.t, r.t + r.h, r.i, r.v);
    d.samples.push_back({{r.eta, static_cast<double>(r.t), static_cast<double>(r.h), static_cast<double>(r.i)}, r.v});
  }
  return d;
}

Artifacts prepare(const CaseStudyConfig& cfg, std::ostream* log) {
  Artifacts a;
  auto t0 = Clock::now();
  const auto train = generate_training_data(cfg, cfg.train_envs, cfg.train_episodes_per_env,
                                            derive_seed(cfg.seed, {kTagTrain}));
  say(log, "training data: " + std::to_string(train.rows()) + " rows (" + std::to_string(ms_since(t0) / 1e3) + " s)");
  a.sigma = scores::fit_sigma(train.errors, cfg.sigma_floor);

  t0 = Clock::now();
  a.model = diffusion::train(cfg.diffusion, train.samples);
  say(log, "diffusion trained (" + std::to_string(ms_since(t0) / 1e3) + " s)");

  for (int k : cfg.train_envs) {
    const auto val = generate_training_data(cfg, {k}, cfg.validation_episodes_per_env,
                                            derive_seed(cfg.seed, {kTagValidation}));
    SeenEnvironment s;
    s.env = k;
    s.eta = mean(val.episode_eta);
    std::vector<double> sc;
    for (const auto& e : val.errors) sc.push_back(scores::episode_score(e, a.sigma));
    s.scores = conformal::ScoreSet(std::move(sc), conformal::Provenance::RealCalibration, env_name(k));
    s.samples = val.samples;
    a.seen.push_back(std::move(s));
  }

  const auto c0s = generate_training_data(cfg, {0}, cfg.case0_sigma_episodes, derive_seed(cfg.seed, {kTagCase0Sigma}));
  a.case0_sigma = scores::fit_sigma(c0s.errors, cfg.sigma_floor);
  const auto c0c = generate_training_data(cfg, {0}, cfg.case0_calibration_episodes,
                                          derive_seed(cfg.seed, {kTagCase0Calib}));
  std::vector<double> sc;
  for (const auto& e : c0c.errors) sc.push_back(scores::episode_score(e, a.case0_sigma));
  a.case0_scores = conformal::ScoreSet(std::move(sc), conformal::Provenance::RealCalibration, "train");
  say(log, "calibration artifacts ready");
  return a;
}

void save_artifacts(const Artifacts& a, const std::string& dir) {
  std::filesystem::create_directories(dir);
  diffusion::save_model(a.model, dir + "/model.json");
  write_json(dir + "/sigma.json", scores::to_json(a.sigma));
  write_json(dir + "/case0_sigma.json", scores::to_json(a.case0_sigma));
  write_json(dir + "/case0_scores.json", conformal::to_json(a.case0_scores));
  nlohmann::json seen = nlohmann::json::array();
  for (const auto& s : a.seen) {
    seen.push_back({{"env", s.env}, {"eta", s.eta}, {"scores", conformal::to_json(s.scores)},
                    {"samples", samples_json(s.samples)}});
  }
  std::ofstream os(dir + "/seen.json");
  if (!os) throw Error("cannot write " + dir + "/seen.json");
  os << seen.dump() << '\n';
}

Artifacts load_artifacts(const std::string& dir) {
  Artifacts a;
  a.model = diffusion::load_model(dir + "/model.json");
  a.sigma = scores::sigma_from_json(read_json(dir + "/sigma.json"));
  a.case0_sigma = scores::sigma_from_json(read_json(dir + "/case0_sigma.json"));
  a.case0_scores = conformal::score_set_from_json(read_json(dir + "/case0_scores.json"));
  for (const auto& s : read_json(dir + "/seen.json")) {
    SeenEnvironment e;
    e.env = s.at("env").get<int>();
    e.eta = s.at("eta").get<double>();
    e.scores = conformal::score_set_from_json(s.at("scores"));
    e.samples = samples_from_json(s.at("samples"));
    a.seen.push_back(std::move(e));
  }
  return a;
}

std::vector<shift::SeenContext> seen_contexts(const Artifacts& a) {
  std::vector<shift::SeenContext> out;
  for (const auto& s : a.seen) out.push_back({{s.eta}, s.scores});
  return out;
}

double ShiftCache::analytic_radius(const CaseStudyConfig& cfg, const Artifacts& a, double eta) {
  const auto idx = shift::nearest_contexts(seen_contexts(a), {eta}, cfg.nearest);
  auto key = idx;
  std::sort(key.begin(), key.end());
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;

  std::vector<diffusion::Sample> pool;
  double eta_mean = 0.0;
  for (auto k : key) {
    pool.insert(pool.end(), a.seen[k].samples.begin(), a.seen[k].samples.end());
    eta_mean += a.seen[k].eta / static_cast<double>(key.size());
  }
  if (pool.empty()) throw Error("no held-out samples for the analytic bound");
  std::vector<diffusion::Sample> held_out;
  const std::size_t stride = std::max<std::size_t>(1, pool.size() / std::max(1, cfg.e_max_rows));
  for (std::size_t r = 0; r < pool.size(); r += stride) held_out.push_back(pool[r]);

  std::uint64_t tag = 0;
  for (auto k : key) tag = tag * 131 + k + 1;
  const auto E = diffusion::evaluate_step_mse(a.model, held_out, cfg.e_draws, derive_seed(cfg.seed, {kTagStepMse, tag}));

  // Largest one-sided slope over a spread of grid contexts.
  const int T = cfg.world.T, H = cfg.world.H;
  std::vector<double> L2(E.size(), -kInf);
  const int n_agents = static_cast<int>(cfg.train_envs.empty() ? 2 : environment(cfg, 1).agents());
  std::uint64_t probe = 0;
  for (int t : {1, T / 2, T - 1}) {
    for (int h : {1, H}) {
      for (int i = 0; i < n_agents; ++i) {
        const auto l = shift::estimate_L2(a.model, {eta_mean, double(t), double(h), double(i)}, cfg.l2_pairs,
                                          derive_seed(cfg.seed, {kTagL2, tag, probe++}));
        for (std::size_t j = 0; j < L2.size(); ++j) L2[j] = std::max(L2[j], l[j]);
      }
    }
  }
  auto ing = shift::make_ingredients(a.model.schedule, E, L2);
  const auto bound = shift::analytic_w2_bound(ing, a.model.schedule);
  last_ingredients = ing;
  const double r = bound.unbounded ? kInf : shift::propagate_to_radius(bound.value * a.model.target_scale, a.sigma);
  cache_[key] = r;
  return r;
}

Calibration calibrate(const CaseStudyConfig& cfg, const Artifacts& a, const CaseSpec& spec, double eta,
                      const conformal::ScoreSet* synthetic, ShiftCache& cache) {
  Calibration c;
  if (spec.source == CalibrationSource::RealTrainEnv) {
    c.quantile = conformal::vanilla_quantile(a.case0_scores, cfg.delta);
  } else {
    if (!synthetic) throw std::invalid_argument("synthetic calibration needs a score set");
    switch (spec.ambiguity) {
      case AmbiguitySource::None:
        c.quantile = conformal::vanilla_quantile(*synthetic, cfg.delta);
        break;
      case AmbiguitySource::EmpiricalWInf: {
        const auto test = shift::aggregate_unseen_context(seen_contexts(a), {eta}, cfg.nearest);
        c.r_used = shift::wasserstein_inf_1d(*synthetic, test);
        c.quantile = conformal::robust_quantile_lp(*synthetic, cfg.delta, c.r_used, cfg.rho);
        break;
      }
      case AmbiguitySource::AnalyticBound:
        c.r_used = cache.analytic_radius(cfg, a, eta);
        if (std::isfinite(c.r_used)) {
          c.quantile = conformal::robust_quantile_lp(*synthetic, cfg.delta, c.r_used, cfg.rho);
        } else {
          c.quantile.infinite = true;
          c.quantile.c_robust = kInf;
        }
        break;
    }
  }
  c.infinite = c.quantile.infinite || !std::isfinite(c.quantile.c_robust);
  c.threshold = c.infinite ? kInf : c.quantile.c_robust;
  return c;
}

sim::EpisodeTrace run_episode(const CaseStudyConfig& cfg, const Artifacts& a, const CaseSpec& spec,
                              const EpisodeData& ep, const Calibration& cal, const EpisodeOptions& opt) {
  const auto& w = cfg.world;
  const auto& sigma = spec.source == CalibrationSource::RealTrainEnv ? a.case0_sigma : a.sigma;
  sim::EpisodeTrace tr;
  tr.env = env_name(ep.env);
  tr.case_id = spec.number();
  tr.loop = to_string(spec.loop);
  tr.eta = ep.eta;
  tr.score = scores::episode_score(ep.errors, sigma);
  tr.threshold = cal.threshold;
  tr.r_used = cal.r_used;
  tr.coverage = !cal.infinite && tr.score <= cal.threshold;
  tr.min_margin = kInf;

  sim::EgoState x = w.ego_start;
  tr.ego.push_back(x);
  if (opt.keep_trace) tr.obstacles.push_back(ep.obstacles.at(0));

  planner::MPCSolution prev;
  bool have_prev = false;
  std::vector<sim::EgoInput> plan;  // open-loop input sequence from T_b on

  for (int t = 0; t < w.T; ++t) {
    sim::EgoInput u{0.0, 0.0};
    if (t >= w.T_b) {
      const bool closed = spec.loop == Loop::Closed;
      if (closed || t == w.T_b) {
        const int horizon = closed ? w.H : w.T - w.T_b;
        double calib_ms = 0.0;
        const int planning_step = t - w.T_b;
        if (opt.timing && closed && spec.source == CalibrationSource::Synthetic && planning_step < cfg.timing_steps) {
          const auto t0 = Clock::now();
          const auto fresh = scores::build_synthetic_scoreset(a.model, ep.eta, w.T, w.H, ep.obstacles.agents(), a.sigma,
                                                              cfg.timing_K, derive_seed(opt.timing_seed, {static_cast<std::uint64_t>(t)}));
          const auto q = spec.ambiguity == AmbiguitySource::None
                             ? conformal::vanilla_quantile(fresh, cfg.delta)
                             : conformal::robust_quantile_lp(fresh, cfg.delta, cal.r_used, cfg.rho);
          (void)q;
          calib_ms = ms_since(t0);
        }
        auto p = make_problem(cfg, ep.obstacles, x, t, horizon, sigma, cal.threshold);
        planner::MPCSolution sol;
        if (have_prev) {
          const auto warm = planner::shift_solution(prev, p);
          sol = planner::solve(p, &warm, cfg.solver);
        } else {
          sol = planner::solve(p, nullptr, cfg.solver);
        }
        if (sol.status == planner::Status::Infeasible) {
          const double solve_ms = sol.solve_ms;
          sol = planner::fallback(p);
          sol.solve_ms = solve_ms;
          tr.fallback = true;
          tr.infeasible = true;
          have_prev = false;
        } else {
          prev = sol;
          have_prev = true;
        }
        plan = sol.inputs;
        tr.step_ms.push_back(sol.solve_ms + calib_ms);
        tr.calibration_ms.push_back(calib_ms);
        if (opt.keep_trace) {
          tr.predictions.push_back(p.centers);
          tr.radii.push_back(p.radii);
        }
      }
      const std::size_t k = closed ? 0 : static_cast<std::size_t>(t - w.T_b);
      if (k < plan.size()) u = plan[k];
    }
    x = sim::ego_step(x, u, w.dt, w.limits.wheelbase, w.limits.v_min, w.limits.v_max);
    tr.ego.push_back(x);
    tr.inputs.push_back(u);
    const auto obs = ep.obstacles.at(t + 1);
    if (opt.keep_trace) tr.obstacles.push_back(obs);
    const auto cc = sim::check_collision({x.x, x.y}, obs, w.eps);
    tr.min_margin = std::min(tr.min_margin, cc.margin);
    if (cc.collision) tr.collision = true;
  }
  return tr;
}

ExperimentReport run_cases(const CaseStudyConfig& cfg, const Artifacts& a, const RunRequest& req, std::ostream* log) {
  ExperimentReport rep;
  rep.config_hash = config_hash(cfg);
  rep.seed = cfg.seed;
  const int episodes = req.episodes > 0 ? req.episodes : cfg.episodes;
  std::vector<CaseSpec> specs;
  for (int c : req.cases) {
    for (Loop l : req.loops) specs.push_back(CaseSpec::make(c, l));
  }
  const bool any_synthetic = std::any_of(specs.begin(), specs.end(), [](const CaseSpec& s) {
    return s.source == CalibrationSource::Synthetic;
  });
  ShiftCache cache;

  for (int env : req.envs) {
    const auto t_env = Clock::now();
    std::vector<ReportRow> rows(specs.size());
    std::vector<std::vector<double>> step_ms(specs.size()), r_used(specs.size()), thr(specs.size());
    for (std::size_t s = 0; s < specs.size(); ++s) {
      rows[s].env = env_name(env);
      rows[s].case_id = specs[s].number();
      rows[s].loop = to_string(specs[s].loop);
    }
    for (int e = 0; e < episodes; ++e) {
      const auto ue = static_cast<std::uint64_t>(e), uk = static_cast<std::uint64_t>(env);
      std::optional<EpisodeData> ep;
      std::optional<conformal::ScoreSet> synth;
      std::string setup_error;
      try {
        ep = simulate_episode(cfg, env, derive_seed(cfg.seed, {kTagTest, uk, ue}));
        if (any_synthetic) {
          synth = scores::build_synthetic_scoreset(a.model, ep->eta, cfg.world.T, cfg.world.H, ep->obstacles.agents(),
                                                   a.sigma, cfg.K, derive_seed(cfg.seed, {kTagSynthetic, uk, ue}));
        }
      } catch (const std::exception& ex) {
        setup_error = ex.what();
      }
      for (std::size_t s = 0; s < specs.size(); ++s) {
        EpisodeSummary sum;
        sum.episode = e;
        try {
          if (!setup_error.empty()) throw Error(setup_error);
          const auto cal = calibrate(cfg, a, specs[s], ep->eta, synth ? &*synth : nullptr, cache);
          EpisodeOptions opt;
          const bool robust = specs[s].ambiguity != AmbiguitySource::None;
          opt.timing = req.timing && robust && e < cfg.timing_episodes;
          opt.timing_seed = derive_seed(cfg.seed, {kTagTiming, uk, ue, static_cast<std::uint64_t>(specs[s].number())});
          opt.keep_trace = req.keep_traces;
          auto tr = run_episode(cfg, a, specs[s], *ep, cal, opt);
          tr.episode = e;
          tr.seed = derive_seed(cfg.seed, {kTagTest, uk, ue});
          int timed = 0;
          for (std::size_t k = 0; k < tr.step_ms.size(); ++k) {
            step_ms[s].push_back(tr.step_ms[k]);
            if (tr.calibration_ms[k] > 0.0 && timed < cfg.timing_steps) {
              TimingSample ts;
              ts.env = env_name(env);
              ts.case_id = specs[s].number();
              ts.episode = e;
              ts.t = cfg.world.T_b + static_cast<int>(k);
              ts.calibration_ms = tr.calibration_ms[k];
              ts.solve_ms = tr.step_ms[k] - tr.calibration_ms[k];
              rep.timing.push_back(ts);
              ++timed;
            }
          }
          sum.eta = tr.eta;
          sum.score = tr.score;
          sum.threshold = tr.threshold;
          sum.coverage = tr.coverage;
          sum.collision = tr.collision;
          sum.fallback = tr.fallback;
          r_used[s].push_back(cal.r_used);
          thr[s].push_back(cal.threshold);
          if (req.keep_traces) rep.traces.push_back(std::move(tr));
        } catch (const std::exception& ex) {
          sum.failed = true;
          sum.failure = ex.what();
          sum.coverage = false;
          sum.collision = true;
        }
        rows[s].episodes.push_back(sum);
      }
    }
    for (std::size_t s = 0; s < specs.size(); ++s) {
      auto& r = rows[s];
      r.n = static_cast<int>(r.episodes.size());
      double cov = 0, safe = 0, inf = 0;
      for (const auto& x : r.episodes) {
        cov += x.coverage;
        safe += !x.collision;
        inf += x.fallback;
        r.failed += x.failed;
      }
      if (r.n > 0) {
        r.coverage = cov / r.n;
        r.safety = safe / r.n;
        r.infeasible = inf / r.n;
      }
      r.mean_ms = mean(step_ms[s]);
      r.p95_ms = percentile(step_ms[s], 0.95);
      r.r_used = mean(r_used[s]);
      r.mean_threshold = mean(thr[s]);
      std::ostringstream msg;
      msg << std::fixed << std::setprecision(3) << r.env << " case" << r.case_id << " " << r.loop
          << " coverage=" << r.coverage << " safety=" << r.safety << " infeasible=" << r.infeasible
          << " r=" << r.r_used << " thr=" << r.mean_threshold << " failed=" << r.failed;
      say(log, msg.str());
      rep.rows.push_back(std::move(r));
    }
    say(log, env_name(env) + " done in " + std::to_string(ms_since(t_env) / 1e3) + " s");
  }
  return rep;
}

std::vector<double> default_sweep_grid(const CaseStudyConfig& cfg, const Artifacts& a) {
  if (!cfg.sweep.grid.empty()) return cfg.sweep.grid;
  // Central 95% of the episode nuisance values the model was trained on.
  std::vector<double> etas;
  for (const auto& s : a.seen) {
    double last = kInf;
    for (const auto& x : s.samples) {
      if (x.c.eta != last) etas.push_back(x.c.eta);
      last = x.c.eta;
    }
  }
  if (etas.size() < 2) throw Error("no seen contexts for the sweep grid");
  std::sort(etas.begin(), etas.end());
  const auto q = [&](double p) { return etas[static_cast<std::size_t>(p * static_cast<double>(etas.size() - 1))]; };
  const double a0 = q(0.025), a1 = q(0.975);
  std::vector<double> g;
  for (int k = 0; k <= 20; ++k) g.push_back(a0 + (a1 - a0) * k / 20.0);
  return g;
}

SweepResult w2_vs_nuisance_sweep(const CaseStudyConfig& cfg, const diffusion::DiffusionModel& model, int env_j,
                                 const std::vector<double>& grid, std::uint64_t seed) {
  const auto& sw = cfg.sweep;
  if (grid.empty()) throw std::invalid_argument("empty nuisance grid");
  SweepResult res;
  res.env = env_j;
  res.grid = grid;
  const int t = sw.t_fixed;
  std::vector<std::vector<double>> test(sw.h_set.size());
  int n_agents = 0;
  for (int e = 0; e < sw.test_episodes; ++e) {
    const auto ep = simulate_episode(cfg, env_j, derive_seed(seed, {0, static_cast<std::uint64_t>(e)}));
    n_agents = ep.obstacles.agents();
    res.eta_measured += ep.eta / sw.test_episodes;
    for (std::size_t k = 0; k < sw.h_set.size(); ++k) {
      for (int i = 0; i < n_agents; ++i) test[k].push_back(ep.errors.at(t, t + sw.h_set[k], i));
    }
  }
  std::vector<conformal::ScoreSet> test_sets;
  for (auto& v : test) test_sets.emplace_back(std::move(v));

  diffusion::GridSampler sampler(model);
  std::vector<float> buf(static_cast<std::size_t>(sw.draws));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (std::size_t k = 0; k < sw.h_set.size(); ++k) {
      std::vector<double> synth;
      for (int i = 0; i < n_agents; ++i) {
        Rng rng(derive_seed(seed, {1, g, k, static_cast<std::uint64_t>(i)}));
        sampler.sample({grid[g], double(t), double(sw.h_set[k]), double(i)}, sw.draws, rng, buf.data());
        for (float v : buf) synth.push_back(std::max(0.0, static_cast<double>(v)));
      }
      const double w2 = shift::wasserstein2_1d(conformal::ScoreSet(std::move(synth), conformal::Provenance::Synthetic),
                                               test_sets[k]);
      res.rows.push_back({grid[g], t + sw.h_set[k], w2});
      acc += w2;
    }
    res.profile.push_back(acc / static_cast<double>(sw.h_set.size()));
  }
  const auto best = std::min_element(res.profile.begin(), res.profile.end()) - res.profile.begin();
  res.argmin_eta = grid[static_cast<std::size_t>(best)];
  return res;
}

std::string report_csv_header() { return "env,case,loop,n,coverage,safety,infeasible,mean_ms,p95_ms,r_used"; }

void write_report_csv(std::ostream& os, const ExperimentReport& r) {
  os << report_csv_header() << '\n';
  os << std::setprecision(10);
  for (const auto& x : r.rows) {
    os << x.env << ',' << x.case_id << ',' << x.loop << ',' << x.n << ',' << x.coverage << ',' << x.safety << ','
       << x.infeasible << ',' << x.mean_ms << ',' << x.p95_ms << ',' << x.r_used << '\n';
  }
}

nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& x : r.rows) {
    nlohmann::json eps = nlohmann::json::array();
    for (const auto& e : x.episodes) {
      eps.push_back({{"episode", e.episode}, {"eta", e.eta}, {"score", e.score},
                     {"threshold", std::isfinite(e.threshold) ? nlohmann::json(e.threshold) : nlohmann::json()},
                     {"coverage", e.coverage}, {"collision", e.collision}, {"fallback", e.fallback},
                     {"failed", e.failed}, {"failure", e.failure}});
    }
    rows.push_back({{"env", x.env}, {"case", x.case_id}, {"loop", x.loop}, {"n", x.n}, {"coverage", x.coverage},
                    {"safety", x.safety}, {"infeasible", x.infeasible}, {"mean_ms", x.mean_ms},
                    {"p95_ms", x.p95_ms},
                    {"r_used", std::isfinite(x.r_used) ? nlohmann::json(x.r_used) : nlohmann::json()},
                    {"failed", x.failed}, {"episodes", eps}});
  }
  nlohmann::json timing = nlohmann::json::array();
  std::vector<double> tot;
  for (const auto& t : r.timing) {
    timing.push_back({{"env", t.env}, {"case", t.case_id}, {"episode", t.episode}, {"t", t.t}, {"ms", t.total_ms()}});
    tot.push_back(t.total_ms());
  }
  return {{"config_hash", r.config_hash},
          {"seed", r.seed},
          {"rows", rows},
          {"timing", {{"samples", timing}, {"mean_ms", mean(tot)}, {"p95_ms", percentile(tot, 0.95)}}}};
}

bool gates_pass(const ExperimentReport& r, const Gates& gates) {
  for (const auto& x : r.rows) {
    if (std::find(gates.robust_cases.begin(), gates.robust_cases.end(), x.case_id) == gates.robust_cases.end()) continue;
    if (x.coverage < gates.coverage_min || x.safety < gates.safety_min) return false;
  }
  return true;
}

int emit_report(const ExperimentReport& r, const std::string& out_dir, const Gates& gates) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream os(out_dir + "/summary.csv");
    if (!os) throw Error("cannot write " + out_dir + "/summary.csv");
    write_report_csv(os, r);
  }
  write_json(out_dir + "/report.json", to_json(r));
  if (!r.traces.empty()) {
    fs::create_directories(out_dir + "/traces");
    std::ofstream csv(out_dir + "/traces.csv");
    csv << sim::trace_csv_header() << '\n';
    for (const auto& tr : r.traces) {
      std::ofstream os(out_dir + "/traces/" + tr.env + "_case" + std::to_string(tr.case_id) + "_" + tr.loop + "_" +
                       std::to_string(tr.episode) + ".json");
      os << sim::to_json(tr).dump() << '\n';
      csv << sim::trace_csv_row(tr) << '\n';
    }
  }
  return gates.enabled && !gates_pass(r, gates) ? 2 : 0;
}

}  // namespace rcp::harness
