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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "rcp/harness.hpp"

namespace fs = std::filesystem;
using namespace rcp;

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "rcp_out";
  std::string artifacts;
};

harness::CaseStudyConfig load(const Globals& g) {
  harness::CaseStudyConfig cfg = g.config.empty() ? harness::CaseStudyConfig{} : harness::load_config(g.config);
  if (g.seed_set) cfg.seed = g.seed;
  return cfg;
}

std::string artifacts_dir(const Globals& g) { return g.artifacts.empty() ? g.out + "/artifacts" : g.artifacts; }

harness::Artifacts artifacts(const Globals& g, const harness::CaseStudyConfig& cfg) {
  const auto dir = artifacts_dir(g);
  if (fs::exists(dir + "/model.json")) return harness::load_artifacts(dir);
  auto a = harness::prepare(cfg, &std::cerr);
  harness::save_artifacts(a, dir);
  return a;
}

std::vector<int> parse_envs(const std::string& s) {
  if (s == "all") return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok == "train" ? 0 : std::stoi(tok));
  return out;
}

harness::Dataset read_dataset(const std::string& path, const harness::CaseStudyConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read dataset " + path);
  return harness::read_dataset_csv(is, cfg.world);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust conformal prediction regions for safe motion planning"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Case-study config JSON")->check(CLI::ExistingFile);
  app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { g.seed = s; g.seed_set = true; },
                                         "Master seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--artifacts", g.artifacts, "Calibration artifacts directory (default OUT/artifacts)");

  auto* gen = app.add_subcommand("gen-data", "Simulate training episodes and write the error dataset");
  std::string gen_envs = "2,4,6,8,10";
  int gen_episodes = 0;
  gen->add_option("--envs", gen_envs, "Comma-separated environments");
  gen->add_option("--episodes", gen_episodes, "Episodes per environment");

  auto* fit = app.add_subcommand("fit-sigma", "Fit per-(h, i) normalizers from a dataset");
  std::string fit_data;
  fit->add_option("--data", fit_data, "Dataset CSV")->required();

  auto* tr = app.add_subcommand("train-diffusion", "Train the conditional diffusion model");
  std::string tr_data;
  tr->add_option("--data", tr_data, "Dataset CSV")->required();

  auto* est = app.add_subcommand("estimate-shift", "Empirical and analytic shift radii at a nuisance value");
  double est_eta = -1.0;
  int est_env = 0;
  est->add_option("--eta", est_eta, "Nuisance value");
  est->add_option("--env", est_env, "Use the buffer nuisance of one episode of this environment");

  auto* run = app.add_subcommand("run", "Run Case 0-3 episodes and emit the report");
  std::string run_case = "all", run_env = "all", run_loop = "closed";
  int run_episodes = 0;
  bool run_traces = false, run_no_timing = false;
  run->add_option("--case", run_case, "0|1|2|3|all");
  run->add_option("--env", run_env, "1..10|train|all or a comma list");
  run->add_option("--loop", run_loop, "open|closed|both");
  run->add_option("--episodes", run_episodes, "Episodes per environment");
  run->add_flag("--traces", run_traces, "Write per-episode traces");
  run->add_flag("--no-timing", run_no_timing, "Skip the per-step recalibration timing");

  auto* sweep = app.add_subcommand("sweep-w2", "W2 between synthetic and test errors over a nuisance grid");
  std::string sweep_env = "1,3,5,7,9";
  sweep->add_option("--env", sweep_env, "Held-out environments");

  auto* report = app.add_subcommand("report", "Merge report.json files into one summary");
  std::vector<std::string> report_in;
  report->add_option("inputs", report_in, "report.json files")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = load(g);
    fs::create_directories(g.out);

    if (*gen) {
      const auto d = harness::generate_training_data(cfg, parse_envs(gen_envs),
                                                     gen_episodes > 0 ? gen_episodes : cfg.train_episodes_per_env,
                                                     derive_seed(cfg.seed, {1}));
      std::ofstream os(g.out + "/dataset.csv");
      harness::write_dataset_csv(os, d);
      std::cout << "rows " << d.rows() << " hash " << harness::dataset_hash(d) << '\n';
      return 0;
    }
    if (*fit) {
      const auto d = read_dataset(fit_data, cfg);
      const auto s = scores::fit_sigma(d.errors, cfg.sigma_floor);
      std::ofstream(g.out + "/sigma.json") << scores::to_json(s).dump(1) << '\n';
      std::cout << "sigma_min " << s.sigma_min() << '\n';
      return 0;
    }
    if (*tr) {
      const auto d = read_dataset(tr_data, cfg);
      const auto m = diffusion::train(cfg.diffusion, d.samples);
      diffusion::save_model(m, g.out + "/model.json");
      std::cout << "final noise loss " << (m.meta.noise_loss.empty() ? 0.0 : m.meta.noise_loss.back()) << '\n';
      return 0;
    }
    if (*est) {
      const auto a = artifacts(g, cfg);
      double eta = est_eta;
      if (eta < 0.0) eta = harness::simulate_episode(cfg, est_env, derive_seed(cfg.seed, {5, static_cast<std::uint64_t>(est_env), 0})).eta;
      const auto synth = scores::build_synthetic_scoreset(a.model, eta, cfg.world.T, cfg.world.H,
                                                          a.sigma.agents(), a.sigma, cfg.K, derive_seed(cfg.seed, {6}));
      harness::ShiftCache cache;
      const auto c2 = harness::calibrate(cfg, a, harness::CaseSpec::make(2, harness::Loop::Closed), eta, &synth, cache);
      const auto c3 = harness::calibrate(cfg, a, harness::CaseSpec::make(3, harness::Loop::Closed), eta, &synth, cache);
      nlohmann::json j = {{"eta", eta},
                          {"winf_radius", c2.r_used},
                          {"analytic_radius", std::isfinite(c3.r_used) ? nlohmann::json(c3.r_used) : nlohmann::json()},
                          {"case2", conformal::to_json(c2.quantile)},
                          {"case3", conformal::to_json(c3.quantile)}};
      if (cache.last_ingredients) {
        j["ingredients"] = shift::to_json(*cache.last_ingredients);
        std::ofstream csv(g.out + "/ingredients.csv");
        shift::write_ingredients_csv(csv, *cache.last_ingredients, a.model.schedule);
      }
      std::ofstream(g.out + "/shift.json") << j.dump(1) << '\n';
      std::cout << j.dump(1) << '\n';
      return 0;
    }
    if (*run) {
      const auto a = artifacts(g, cfg);
      harness::RunRequest req;
      req.envs = parse_envs(run_env);
      if (run_case != "all") req.cases = {std::stoi(run_case)};
      if (run_loop == "both") {
        req.loops = {harness::Loop::Open, harness::Loop::Closed};
      } else {
        req.loops = {harness::loop_from_string(run_loop)};
      }
      req.episodes = run_episodes;
      req.keep_traces = run_traces;
      req.timing = !run_no_timing;
      const auto rep = harness::run_cases(cfg, a, req, &std::cerr);
      return harness::emit_report(rep, g.out, cfg.gates);
    }
    if (*sweep) {
      const auto a = artifacts(g, cfg);
      const auto grid = harness::default_sweep_grid(cfg, a);
      std::ofstream os(g.out + "/sweep_w2.csv");
      os << "env,eta,tau,w2\n";
      for (int env : parse_envs(sweep_env)) {
        const auto r = harness::w2_vs_nuisance_sweep(cfg, a.model, env, grid,
                                                      derive_seed(cfg.seed, {10, static_cast<std::uint64_t>(env)}));
        for (const auto& row : r.rows) os << env << ',' << row.eta << ',' << row.tau << ',' << row.w2 << '\n';
        std::cout << "E" << env << " eta_measured " << r.eta_measured << " argmin " << r.argmin_eta << '\n';
      }
      return 0;
    }
    if (*report) {
      harness::ExperimentReport merged;
      for (const auto& path : report_in) {
        std::ifstream is(path);
        const auto j = nlohmann::json::parse(is);
        merged.config_hash = j.value("config_hash", "");
        merged.seed = j.value("seed", std::uint64_t{0});
        for (const auto& r : j.at("rows")) {
          harness::ReportRow row;
          row.env = r.at("env");
          row.case_id = r.at("case");
          row.loop = r.at("loop");
          row.n = r.at("n");
          row.coverage = r.at("coverage");
          row.safety = r.at("safety");
          row.infeasible = r.at("infeasible");
          row.mean_ms = r.at("mean_ms");
          row.p95_ms = r.at("p95_ms");
          row.r_used = r.at("r_used").is_null() ? std::numeric_limits<double>::infinity() : r.at("r_used").get<double>();
          merged.rows.push_back(row);
        }
      }
      return harness::emit_report(merged, g.out, cfg.gates);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
