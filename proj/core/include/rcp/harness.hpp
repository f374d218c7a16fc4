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

#ifndef RCP_HARNESS_HPP_
#define RCP_HARNESS_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcp/conformal.hpp"
#include "rcp/diffusion.hpp"
#include "rcp/planner.hpp"
#include "rcp/scores.hpp"
#include "rcp/shift.hpp"
#include "rcp/sim.hpp"

namespace rcp::harness {

enum class CaseId { Case0 = 0, Case1 = 1, Case2 = 2, Case3 = 3 };
enum class CalibrationSource { RealTrainEnv, Synthetic };
enum class AmbiguitySource { None, EmpiricalWInf, AnalyticBound };
enum class Loop { Open, Closed };

std::string to_string(Loop loop);
Loop loop_from_string(const std::string& s);

struct CaseSpec {
  CaseId id = CaseId::Case0;
  CalibrationSource source = CalibrationSource::RealTrainEnv;
  AmbiguitySource ambiguity = AmbiguitySource::None;
  Loop loop = Loop::Closed;
  static CaseSpec make(int case_id, Loop loop);
  int number() const { return static_cast<int>(id); }
};

struct Gates {
  double coverage_min = 0.85;
  double safety_min = 0.90;
  std::vector<int> robust_cases{2, 3};
  bool enabled = false;
};

struct SweepConfig {
  std::vector<int> envs{1, 3, 5, 7, 9};
  std::vector<double> grid;  // nuisance values; empty means an automatic grid
  int t_fixed = 20;
  std::vector<int> h_set{1, 2, 4, 6, 8, 10};
  int test_episodes = 200;
  int draws = 400;
};

// Case-study diffusion profile sized for the per-step latency budget.
diffusion::DiffusionConfig case_study_diffusion();

struct CaseStudyConfig {
  static constexpr int kSchemaVersion = 1;
  std::uint64_t seed = 2026;
  sim::WorldConfig world;
  sim::ObstacleNoise noise;
  int predictor_window = 4;
  std::vector<int> train_envs{2, 4, 6, 8, 10};
  int train_episodes_per_env = 60;
  int validation_episodes_per_env = 60;
  int case0_sigma_episodes = 200;
  int case0_calibration_episodes = 500;
  diffusion::DiffusionConfig diffusion = case_study_diffusion();
  double sigma_floor = 1e-3;
  double delta = 0.1;
  int K = 500;
  double rho = 0.0;
  int nearest = 2;
  int l2_pairs = 256;
  int e_draws = 2;
  int e_max_rows = 20000;
  int episodes = 200;
  int timing_K = 1000;
  int timing_episodes = 1;
  int timing_steps = 8;
  planner::CostWeights weights;
  planner::SolverOptions solver;
  SweepConfig sweep;
  Gates gates;
};

nlohmann::json to_json(const CaseStudyConfig& c);
CaseStudyConfig config_from_json(const nlohmann::json& j);
CaseStudyConfig load_config(const std::string& path);
std::string config_hash(const CaseStudyConfig& c);
std::string fnv1a_hex(const std::string& bytes);

sim::EnvironmentConfig environment(const CaseStudyConfig& cfg, int k);

// One simulated episode seen from the buffer and the predictor.
struct EpisodeData {
  int env = 0;
  double eta = 0.0;
  sim::ObstacleTrajectories obstacles;
  scores::PredictionErrorTensor errors{2, 1, 1};
};

scores::PredictionErrorTensor prediction_errors(const sim::ObstacleTrajectories& traj,
                                                const sim::WorldConfig& world, int window);
EpisodeData simulate_episode(const CaseStudyConfig& cfg, int env_k, std::uint64_t seed);
std::vector<diffusion::Sample> to_samples(const EpisodeData& ep);

struct Dataset {
  std::vector<diffusion::Sample> samples;
  std::vector<int> episode_env;
  std::vector<double> episode_eta;
  std::vector<scores::PredictionErrorTensor> errors;
  std::size_t rows() const { return samples.size(); }
};

Dataset generate_training_data(const CaseStudyConfig& cfg, const std::vector<int>& envs,
                               int episodes_per_env, std::uint64_t seed);
std::string dataset_hash(const Dataset& d);
void write_dataset_csv(std::ostream& os, const Dataset& d);
Dataset read_dataset_csv(std::istream& is, const sim::WorldConfig& world);

struct SeenEnvironment {
  int env = 0;
  double eta = 0.0;  // mean buffer nuisance of the validation episodes
  conformal::ScoreSet scores{{0.0}};
  std::vector<diffusion::Sample> samples;
};

// Everything calibrated before the test episodes run.
struct Artifacts {
  diffusion::DiffusionModel model;
  scores::SigmaTable sigma = scores::SigmaTable::constant(1, 1, 1.0);
  scores::SigmaTable case0_sigma = scores::SigmaTable::constant(1, 1, 1.0);
  conformal::ScoreSet case0_scores{{0.0}};
  std::vector<SeenEnvironment> seen;
};

Artifacts prepare(const CaseStudyConfig& cfg, std::ostream* log = nullptr);
void save_artifacts(const Artifacts& a, const std::string& dir);
Artifacts load_artifacts(const std::string& dir);

// Calibrated threshold in score units; radii are sigma(h, i) * threshold.
struct Calibration {
  conformal::QuantileResult quantile;
  double threshold = 0.0;
  double r_used = 0.0;
  bool infinite = false;
};

class ShiftCache {
 public:
  // Analytic radius for the neighbour set of eta (cached per neighbour set).
  double analytic_radius(const CaseStudyConfig& cfg, const Artifacts& a, double eta);
  std::optional<shift::BoundIngredients> last_ingredients;

 private:
  std::map<std::vector<std::size_t>, double> cache_;
};

std::vector<shift::SeenContext> seen_contexts(const Artifacts& a);
Calibration calibrate(const CaseStudyConfig& cfg, const Artifacts& a, const CaseSpec& spec,
                      double eta, const conformal::ScoreSet* synthetic, ShiftCache& cache);

struct EpisodeOptions {
  bool timing = false;
  std::uint64_t timing_seed = 0;
  bool keep_trace = false;
};

// Runs one episode given a calibration; the obstacle motion comes from `ep`.
sim::EpisodeTrace run_episode(const CaseStudyConfig& cfg, const Artifacts& a, const CaseSpec& spec,
                              const EpisodeData& ep, const Calibration& cal,
                              const EpisodeOptions& opt = {});

struct EpisodeSummary {
  int episode = 0;
  double eta = 0.0;
  double score = 0.0;
  double threshold = 0.0;
  bool coverage = false;
  bool collision = false;
  bool fallback = false;
  bool failed = false;
  std::string failure;
};

struct ReportRow {
  std::string env;
  int case_id = 0;
  std::string loop;
  int n = 0;
  double coverage = 0.0;
  double safety = 0.0;
  double infeasible = 0.0;
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  double r_used = 0.0;
  int failed = 0;
  double mean_threshold = 0.0;
  std::vector<EpisodeSummary> episodes;
};

struct TimingSample {
  std::string env;
  int case_id = 0;
  int episode = 0;
  int t = 0;
  double calibration_ms = 0.0;
  double solve_ms = 0.0;
  double total_ms() const { return calibration_ms + solve_ms; }
};

struct ExperimentReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<ReportRow> rows;
  std::vector<TimingSample> timing;
  std::vector<sim::EpisodeTrace> traces;
};

struct RunRequest {
  std::vector<int> envs;  // 0 is the training environment
  std::vector<int> cases{0, 1, 2, 3};
  std::vector<Loop> loops{Loop::Closed};
  int episodes = 0;      // 0 uses the configured count
  bool timing = true;
  bool keep_traces = false;
};

ExperimentReport run_cases(const CaseStudyConfig& cfg, const Artifacts& a, const RunRequest& req,
                           std::ostream* log = nullptr);

struct SweepRow {
  double eta = 0.0;
  int tau = 0;
  double w2 = 0.0;
};

struct SweepResult {
  int env = 0;
  double eta_measured = 0.0;
  std::vector<double> grid;
  std::vector<SweepRow> rows;
  std::vector<double> profile;  // mean W2 over tau, per grid point
  double argmin_eta = 0.0;
};

SweepResult w2_vs_nuisance_sweep(const CaseStudyConfig& cfg, const diffusion::DiffusionModel& model,
                                 int env_j, const std::vector<double>& grid, std::uint64_t seed);
std::vector<double> default_sweep_grid(const CaseStudyConfig& cfg, const Artifacts& a);

std::string report_csv_header();
void write_report_csv(std::ostream& os, const ExperimentReport& r);
nlohmann::json to_json(const ExperimentReport& r);
// Writes summary.csv, report.json and traces; returns the process exit code.
int emit_report(const ExperimentReport& r, const std::string& out_dir, const Gates& gates);
bool gates_pass(const ExperimentReport& r, const Gates& gates);

}  // namespace rcp::harness

#endif  // RCP_HARNESS_HPP_
