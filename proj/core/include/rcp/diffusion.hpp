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

#ifndef RCP_DIFFUSION_HPP_
#define RCP_DIFFUSION_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcp/common.hpp"
#include "rcp/mlp.hpp"

namespace rcp::diffusion {

struct VarianceSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  int steps() const { return static_cast<int>(betas.size()); }
  // 1-based step accessors; alpha_bar(0) == 1.
  double beta(int j) const { return betas.at(j - 1); }
  double alpha(int j) const { return alphas.at(j - 1); }
  double alpha_bar(int j) const { return j == 0 ? 1.0 : alpha_bars.at(j - 1); }
};

VarianceSchedule make_schedule(int steps, double beta_start, double beta_end);

// CARD forward kernel.
double forward_sample(const VarianceSchedule& schedule, double s0, double fphi, int j, double noise);

// Raw conditioning variables (nuisance, time step, lookahead offset, agent index).
struct ContextVector {
  double eta = 0.0;
  double t = 0.0;
  double h = 0.0;
  double i = 0.0;
};

using Features = std::array<double, 4>;

struct Sample {
  ContextVector c;
  double target = 0.0;
};

struct ContextStats {
  Features mean{0.0, 0.0, 0.0, 0.0};
  Features scale{1.0, 1.0, 1.0, 1.0};

  Features standardize(const ContextVector& c) const;
  static ContextStats fit(const std::vector<Sample>& data);
};

struct TrainMeta {
  std::uint64_t encoder_seed = 0;
  std::uint64_t noise_seed = 0;
  int encoder_epochs = 0;
  int noise_epochs = 0;
  std::vector<double> encoder_loss;
  std::vector<double> noise_loss;
};

struct DiffusionConfig {
  int steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::vector<int> encoder_hidden{64, 64};
  std::vector<int> noise_hidden{128, 128};
  int embed_dim = 16;
  int batch = 256;
  int encoder_epochs = 50;
  int noise_epochs = 100;
  double encoder_lr = 1e-3;
  double noise_lr = 1e-3;
  std::uint64_t seed = 1;
};

nlohmann::json to_json(const DiffusionConfig& c);
DiffusionConfig diffusion_config_from_json(const nlohmann::json& j);

class DiffusionModel {
 public:
  static constexpr int kFormatVersion = 1;

  VarianceSchedule schedule;
  ContextStats context_stats;
  double target_offset = 0.0;
  double target_scale = 1.0;
  int embed_dim = 16;
  nn::Mlp encoder;
  nn::Mlp noise_net;
  std::vector<double> step_mse;  // running per-step noise MSE recorded during training
  TrainMeta meta;

  int input_dim() const { return 2 + 4 + embed_dim; }

  // All accessors below work in standardized target units.
  double to_standard(double target) const { return (target - target_offset) / target_scale; }
  double from_standard(double s) const { return s * target_scale + target_offset; }
  double encoder_mean(const Features& c) const;
  double eps(double s_j, int j, double fphi, const Features& c) const;
  std::vector<double> eps_batch(const std::vector<double>& s_j, int j, double fphi,
                                const Features& c) const;
  // Score estimate -eps / sqrt(1 - alpha_bar_j).
  double score(double s_j, int j, double fphi, const Features& c) const;
};

std::vector<double> step_embedding(int j, int dim);

// Creates schedule, standardization statistics and freshly initialized networks.
DiffusionModel init_model(const DiffusionConfig& cfg, const std::vector<Sample>& data);

// Adam regression of the conditional mean; returns the final full-data MSE (standardized units).
double pretrain_encoder(DiffusionModel& model, const std::vector<Sample>& data, int epochs,
                        double lr, int batch, std::uint64_t seed);

// Noise regression with the encoder frozen; returns the per-epoch mean loss.
std::vector<double> train_noise_net(DiffusionModel& model, const std::vector<Sample>& data,
                                    int epochs, int batch, double lr, std::uint64_t seed);

// Per-step noise MSE on a data set with fresh noise (draws per row per step).
std::vector<double> evaluate_step_mse(const DiffusionModel& model, const std::vector<Sample>& data,
                                      int draws, std::uint64_t seed);

DiffusionModel train(const DiffusionConfig& cfg, const std::vector<Sample>& data);

// Reverse-chain samples in target units.
std::vector<double> sample(const DiffusionModel& model, const ContextVector& c, int n,
                           std::uint64_t seed);

nlohmann::json to_json(const DiffusionModel& m);
DiffusionModel model_from_json(const nlohmann::json& j);
void save_model(const DiffusionModel& m, const std::string& path);
DiffusionModel load_model(const std::string& path);

// Fills out[0..n) with standard normals by vectorized Box-Muller, one engine call per pair.
class NormalFiller {
 public:
  void fill(Rng& rng, float* out, int n);

 private:
  Eigen::ArrayXf u1_, u2_, r_;
};

// Batched reverse sampler. Precomputes the step-dependent part of the first layer so a
// draw costs one dense pass per step; one instance per thread.
class GridSampler {
 public:
  explicit GridSampler(const DiffusionModel& model);

  // Writes n draws (target units) for context c into out, consuming normals from rng.
  void sample(const ContextVector& c, int n, Rng& rng, float* out);

 private:
  const DiffusionModel& model_;
  int steps_ = 0;
  int width_ = 0;
  std::vector<float> w_state_;       // first-layer weight on the noisy state
  std::vector<float> w_fphi_;        // first-layer weight on the encoder mean
  std::vector<float> w_ctx_;         // width x 4
  std::vector<float> step_bias_;     // steps x width: b1 + W_emb * emb(j)
  std::vector<float> out_w_;         // single-hidden-layer output weights
  float out_b_ = 0.0f;
  std::vector<Eigen::MatrixXf> deep_w_;  // layers after the first when there are several
  std::vector<Eigen::VectorXf> deep_b_;
  Eigen::MatrixXf hidden_;
  std::vector<float> c1_, c2_, sd_;  // per-step reverse coefficients
  std::vector<float> a_, acc_, x_, z_;
  NormalFiller normals_;
};

}  // namespace rcp::diffusion

#endif  // RCP_DIFFUSION_HPP_
