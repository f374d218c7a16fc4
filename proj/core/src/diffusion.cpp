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

#include "rcp/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <boost/random/normal_distribution.hpp>

namespace rcp::diffusion {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::MatrixXd context_matrix(const DiffusionModel& m, const std::vector<Sample>& data) {
  Eigen::MatrixXd x(4, static_cast<Eigen::Index>(data.size()));
  for (std::size_t n = 0; n < data.size(); ++n) {
    const Features f = m.context_stats.standardize(data[n].c);
    for (int k = 0; k < 4; ++k) x(k, static_cast<Eigen::Index>(n)) = f[k];
  }
  return x;
}

Eigen::MatrixXd embedding_table(int steps, int dim) {
  Eigen::MatrixXd e(dim, steps);
  for (int j = 1; j <= steps; ++j) {
    const auto v = step_embedding(j, dim);
    for (int k = 0; k < dim; ++k) e(k, j - 1) = v[k];
  }
  return e;
}

double cosine_lr(double lr, long long step, long long total) {
  if (total <= 1) return lr;
  const double floor = 0.05 * lr;
  const double p = static_cast<double>(step) / static_cast<double>(total - 1);
  return floor + 0.5 * (lr - floor) * (1.0 + std::cos(kPi * p));
}

void require_finite(double loss, const char* what) {
  if (!std::isfinite(loss)) throw Error(std::string(what) + ": non-finite training loss");
}

}  // namespace

VarianceSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("need 0 < beta_start <= beta_end < 1");
  }
  VarianceSchedule s;
  double prod = 1.0;
  for (int j = 0; j < steps; ++j) {
    const double b = steps == 1 ? beta_start
                                : beta_start + (beta_end - beta_start) * j / (steps - 1.0);
    s.betas.push_back(b);
    s.alphas.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bars.push_back(prod);
  }
  return s;
}

double forward_sample(const VarianceSchedule& schedule, double s0, double fphi, int j, double noise) {
  if (j < 1 || j > schedule.steps()) throw std::out_of_range("diffusion step out of range");
  const double ab = schedule.alpha_bar(j);
  const double sa = std::sqrt(ab);
  return sa * s0 + (1.0 - sa) * fphi + std::sqrt(1.0 - ab) * noise;
}

Features ContextStats::standardize(const ContextVector& c) const {
  const Features raw{c.eta, c.t, c.h, c.i};
  Features out{};
  for (int k = 0; k < 4; ++k) out[k] = (raw[k] - mean[k]) / scale[k];
  return out;
}

ContextStats ContextStats::fit(const std::vector<Sample>& data) {
  ContextStats s;
  if (data.empty()) return s;
  const double n = static_cast<double>(data.size());
  Features sum{}, sq{};
  for (const auto& d : data) {
    const Features raw{d.c.eta, d.c.t, d.c.h, d.c.i};
    for (int k = 0; k < 4; ++k) sum[k] += raw[k];
  }
  for (int k = 0; k < 4; ++k) s.mean[k] = sum[k] / n;
  for (const auto& d : data) {
    const Features raw{d.c.eta, d.c.t, d.c.h, d.c.i};
    for (int k = 0; k < 4; ++k) sq[k] += (raw[k] - s.mean[k]) * (raw[k] - s.mean[k]);
  }
  for (int k = 0; k < 4; ++k) {
    const double sd = std::sqrt(sq[k] / n);
    s.scale[k] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

std::vector<double> step_embedding(int j, int dim) {
  std::vector<double> e(dim);
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / std::max(1, half));
    e[2 * k] = std::sin(j * freq);
    e[2 * k + 1] = std::cos(j * freq);
  }
  return e;
}

double DiffusionModel::encoder_mean(const Features& c) const {
  Eigen::MatrixXd x(4, 1);
  for (int k = 0; k < 4; ++k) x(k, 0) = c[k];
  return encoder.forward(x)(0, 0);
}

double DiffusionModel::eps(double s_j, int j, double fphi, const Features& c) const {
  Eigen::MatrixXd x(input_dim(), 1);
  x(0, 0) = s_j;
  x(1, 0) = fphi;
  for (int k = 0; k < 4; ++k) x(2 + k, 0) = c[k];
  const auto e = step_embedding(j, embed_dim);
  for (int k = 0; k < embed_dim; ++k) x(6 + k, 0) = e[k];
  return noise_net.forward(x)(0, 0);
}

std::vector<double> DiffusionModel::eps_batch(const std::vector<double>& s_j, int j, double fphi,
                                              const Features& c) const {
  const Eigen::Index n = static_cast<Eigen::Index>(s_j.size());
  Eigen::MatrixXd x(input_dim(), n);
  const auto e = step_embedding(j, embed_dim);
  for (Eigen::Index k = 0; k < n; ++k) {
    x(0, k) = s_j[k];
    x(1, k) = fphi;
    for (int d = 0; d < 4; ++d) x(2 + d, k) = c[d];
    for (int d = 0; d < embed_dim; ++d) x(6 + d, k) = e[d];
  }
  const Eigen::MatrixXd out = noise_net.forward(x);
  return std::vector<double>(out.data(), out.data() + out.size());
}

double DiffusionModel::score(double s_j, int j, double fphi, const Features& c) const {
  return -eps(s_j, j, fphi, c) / std::sqrt(1.0 - schedule.alpha_bar(j));
}

DiffusionModel init_model(const DiffusionConfig& cfg, const std::vector<Sample>& data) {
  DiffusionModel m;
  m.schedule = make_schedule(cfg.steps, cfg.beta_start, cfg.beta_end);
  m.context_stats = ContextStats::fit(data);
  if (!data.empty()) {
    double mean = 0.0;
    for (const auto& d : data) mean += d.target;
    mean /= static_cast<double>(data.size());
    double var = 0.0;
    for (const auto& d : data) var += (d.target - mean) * (d.target - mean);
    const double sd = std::sqrt(var / static_cast<double>(data.size()));
    m.target_offset = mean;
    m.target_scale = sd > 1e-12 ? sd : 1.0;
  }
  m.embed_dim = cfg.embed_dim;
  std::vector<int> enc{4};
  enc.insert(enc.end(), cfg.encoder_hidden.begin(), cfg.encoder_hidden.end());
  enc.push_back(1);
  std::vector<int> noise{m.input_dim()};
  noise.insert(noise.end(), cfg.noise_hidden.begin(), cfg.noise_hidden.end());
  noise.push_back(1);
  m.encoder = nn::Mlp(enc, derive_seed(cfg.seed, {1}));
  m.noise_net = nn::Mlp(noise, derive_seed(cfg.seed, {2}));
  return m;
}

double pretrain_encoder(DiffusionModel& model, const std::vector<Sample>& data, int epochs,
                        double lr, int batch, std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("encoder pretraining needs data");
  if (batch < 1) throw std::invalid_argument("batch must be positive");
  const Eigen::MatrixXd x = context_matrix(model, data);
  Eigen::RowVectorXd y(static_cast<Eigen::Index>(data.size()));
  for (std::size_t n = 0; n < data.size(); ++n) y(n) = model.to_standard(data[n].target);

  Rng rng(seed);
  std::vector<Eigen::Index> perm(data.size());
  std::iota(perm.begin(), perm.end(), 0);
  nn::Adam opt(model.encoder, lr);
  const Eigen::Index n_total = static_cast<Eigen::Index>(data.size());
  const long long batches_per_epoch = (n_total + batch - 1) / batch;
  const long long total = batches_per_epoch * std::max(0, epochs);
  long long step = 0;
  nn::Mlp::Tape tape;
  Eigen::MatrixXd xb;
  Eigen::MatrixXd yb;
  model.meta.encoder_seed = seed;
  model.meta.encoder_epochs = epochs;
  for (int ep = 0; ep < epochs; ++ep) {
    std::shuffle(perm.begin(), perm.end(), rng);
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n_total; start += batch) {
      const Eigen::Index b = std::min<Eigen::Index>(batch, n_total - start);
      xb.resize(4, b);
      yb.resize(1, b);
      for (Eigen::Index k = 0; k < b; ++k) {
        xb.col(k) = x.col(perm[start + k]);
        yb(0, k) = y(perm[start + k]);
      }
      const Eigen::MatrixXd out = model.encoder.forward(xb, tape);
      const Eigen::MatrixXd diff = out - yb;
      const double loss = diff.squaredNorm() / static_cast<double>(b);
      require_finite(loss, "encoder pretraining");
      epoch_loss += loss * static_cast<double>(b);
      auto grads = model.encoder.zero_like();
      model.encoder.backward(tape, (2.0 / static_cast<double>(b)) * diff, grads);
      opt.set_lr(cosine_lr(lr, step++, total));
      opt.step(model.encoder, grads);
    }
    model.meta.encoder_loss.push_back(epoch_loss / static_cast<double>(n_total));
  }
  const Eigen::MatrixXd pred = model.encoder.forward(x);
  const double mse = (pred - y).squaredNorm() / static_cast<double>(n_total);
  require_finite(mse, "encoder pretraining");
  return mse;
}

std::vector<double> train_noise_net(DiffusionModel& model, const std::vector<Sample>& data,
                                    int epochs, int batch, double lr, std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("noise-net training needs data");
  if (batch < 1) throw std::invalid_argument("batch must be positive");
  const int steps = model.schedule.steps();
  const Eigen::MatrixXd ctx = context_matrix(model, data);
  const Eigen::RowVectorXd fphi = model.encoder.forward(ctx);
  const Eigen::MatrixXd emb = embedding_table(steps, model.embed_dim);
  std::vector<double> s0(data.size());
  for (std::size_t n = 0; n < data.size(); ++n) s0[n] = model.to_standard(data[n].target);

  Rng rng(seed);
  boost::random::normal_distribution<double> normal;
  std::uniform_int_distribution<int> step_dist(1, steps);
  std::vector<Eigen::Index> perm(data.size());
  std::iota(perm.begin(), perm.end(), 0);
  nn::Adam opt(model.noise_net, lr);
  const Eigen::Index n_total = static_cast<Eigen::Index>(data.size());
  const long long total = ((n_total + batch - 1) / batch) * std::max(0, epochs);
  long long step = 0;
  std::vector<double> curve;
  std::vector<double> sq(steps, 0.0), cnt(steps, 0.0);
  nn::Mlp::Tape tape;
  Eigen::MatrixXd xb;
  Eigen::MatrixXd target;
  std::vector<int> js;
  model.meta.noise_seed = seed;
  model.meta.noise_epochs = epochs;
  for (int ep = 0; ep < epochs; ++ep) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::fill(sq.begin(), sq.end(), 0.0);
    std::fill(cnt.begin(), cnt.end(), 0.0);
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n_total; start += batch) {
      const Eigen::Index b = std::min<Eigen::Index>(batch, n_total - start);
      xb.resize(model.input_dim(), b);
      target.resize(1, b);
      js.resize(static_cast<std::size_t>(b));
      for (Eigen::Index k = 0; k < b; ++k) {
        const Eigen::Index n = perm[start + k];
        const int j = step_dist(rng);
        const double e = normal(rng);
        js[k] = j;
        xb(0, k) = forward_sample(model.schedule, s0[n], fphi(n), j, e);
        xb(1, k) = fphi(n);
        xb.block(2, k, 4, 1) = ctx.col(n);
        xb.block(6, k, model.embed_dim, 1) = emb.col(j - 1);
        target(0, k) = e;
      }
      const Eigen::MatrixXd out = model.noise_net.forward(xb, tape);
      const Eigen::MatrixXd diff = out - target;
      const double loss = diff.squaredNorm() / static_cast<double>(b);
      require_finite(loss, "noise-net training");
      epoch_loss += loss * static_cast<double>(b);
      for (Eigen::Index k = 0; k < b; ++k) {
        sq[js[k] - 1] += diff(0, k) * diff(0, k);
        cnt[js[k] - 1] += 1.0;
      }
      auto grads = model.noise_net.zero_like();
      model.noise_net.backward(tape, (2.0 / static_cast<double>(b)) * diff, grads);
      opt.set_lr(cosine_lr(lr, step++, total));
      opt.step(model.noise_net, grads);
    }
    curve.push_back(epoch_loss / static_cast<double>(n_total));
    model.step_mse.assign(steps, 0.0);
    for (int j = 0; j < steps; ++j) model.step_mse[j] = cnt[j] > 0.0 ? sq[j] / cnt[j] : 0.0;
  }
  model.meta.noise_loss.insert(model.meta.noise_loss.end(), curve.begin(), curve.end());
  if (!model.noise_net.all_finite()) throw Error("noise-net training produced non-finite weights");
  return curve;
}

std::vector<double> evaluate_step_mse(const DiffusionModel& model, const std::vector<Sample>& data,
                                      int draws, std::uint64_t seed) {
  if (data.empty() || draws < 1) throw std::invalid_argument("need data and draws >= 1");
  const int steps = model.schedule.steps();
  const Eigen::MatrixXd ctx = context_matrix(model, data);
  const Eigen::RowVectorXd fphi = model.encoder.forward(ctx);
  const Eigen::MatrixXd emb = embedding_table(steps, model.embed_dim);
  const Eigen::Index n_rows = static_cast<Eigen::Index>(data.size());
  const Eigen::Index cols = n_rows * draws;
  constexpr Eigen::Index kChunk = 8192;
  std::vector<double> out(steps, 0.0);
  boost::random::normal_distribution<double> normal;
  Eigen::MatrixXd xb;
  Eigen::RowVectorXd e;
  for (int j = 1; j <= steps; ++j) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(j)}));
    double sum = 0.0;
    for (Eigen::Index start = 0; start < cols; start += kChunk) {
      const Eigen::Index b = std::min(kChunk, cols - start);
      xb.resize(model.input_dim(), b);
      e.resize(b);
      for (Eigen::Index k = 0; k < b; ++k) {
        const Eigen::Index n = (start + k) % n_rows;
        e(k) = normal(rng);
        xb(0, k) = forward_sample(model.schedule, model.to_standard(data[n].target), fphi(n), j, e(k));
        xb(1, k) = fphi(n);
        xb.block(2, k, 4, 1) = ctx.col(n);
        xb.block(6, k, model.embed_dim, 1) = emb.col(j - 1);
      }
      sum += (model.noise_net.forward(xb).row(0) - e).squaredNorm();
    }
    out[j - 1] = sum / static_cast<double>(cols);
  }
  return out;
}

DiffusionModel train(const DiffusionConfig& cfg, const std::vector<Sample>& data) {
  DiffusionModel m = init_model(cfg, data);
  pretrain_encoder(m, data, cfg.encoder_epochs, cfg.encoder_lr, cfg.batch, derive_seed(cfg.seed, {3}));
  train_noise_net(m, data, cfg.noise_epochs, cfg.batch, cfg.noise_lr, derive_seed(cfg.seed, {4}));
  return m;
}

std::vector<double> sample(const DiffusionModel& model, const ContextVector& c, int n,
                           std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("sample count must be >= 0");
  std::vector<double> out;
  if (n == 0) return out;
  GridSampler sampler(model);
  Rng rng(seed);
  std::vector<float> buf(static_cast<std::size_t>(n));
  sampler.sample(c, n, rng, buf.data());
  out.assign(buf.begin(), buf.end());
  return out;
}

nlohmann::json to_json(const DiffusionConfig& c) {
  return {{"steps", c.steps},
          {"beta_start", c.beta_start},
          {"beta_end", c.beta_end},
          {"encoder_hidden", c.encoder_hidden},
          {"noise_hidden", c.noise_hidden},
          {"embed_dim", c.embed_dim},
          {"batch", c.batch},
          {"encoder_epochs", c.encoder_epochs},
          {"noise_epochs", c.noise_epochs},
          {"encoder_lr", c.encoder_lr},
          {"noise_lr", c.noise_lr},
          {"seed", c.seed}};
}

DiffusionConfig diffusion_config_from_json(const nlohmann::json& j) {
  DiffusionConfig c;
  c.steps = j.value("steps", c.steps);
  c.beta_start = j.value("beta_start", c.beta_start);
  c.beta_end = j.value("beta_end", c.beta_end);
  c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
  c.noise_hidden = j.value("noise_hidden", c.noise_hidden);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.batch = j.value("batch", c.batch);
  c.encoder_epochs = j.value("encoder_epochs", c.encoder_epochs);
  c.noise_epochs = j.value("noise_epochs", c.noise_epochs);
  c.encoder_lr = j.value("encoder_lr", c.encoder_lr);
  c.noise_lr = j.value("noise_lr", c.noise_lr);
  c.seed = j.value("seed", c.seed);
  return c;
}

nlohmann::json to_json(const DiffusionModel& m) {
  nlohmann::json j;
  j["format"] = "rcp-diffusion";
  j["format_version"] = DiffusionModel::kFormatVersion;
  j["schedule"] = {{"betas", m.schedule.betas}};
  j["context_stats"] = {{"mean", m.context_stats.mean}, {"scale", m.context_stats.scale}};
  j["target"] = {{"offset", m.target_offset}, {"scale", m.target_scale}};
  j["embed_dim"] = m.embed_dim;
  j["encoder"] = m.encoder.to_json();
  j["noise_net"] = m.noise_net.to_json();
  j["step_mse"] = m.step_mse;
  j["train_meta"] = {{"encoder_seed", m.meta.encoder_seed},
                     {"noise_seed", m.meta.noise_seed},
                     {"encoder_epochs", m.meta.encoder_epochs},
                     {"noise_epochs", m.meta.noise_epochs},
                     {"encoder_loss", m.meta.encoder_loss},
                     {"noise_loss", m.meta.noise_loss}};
  return j;
}

DiffusionModel model_from_json(const nlohmann::json& j) {
  if (j.value("format_version", 0) != DiffusionModel::kFormatVersion) {
    throw std::invalid_argument("unsupported diffusion model format version");
  }
  DiffusionModel m;
  const auto betas = j.at("schedule").at("betas").get<std::vector<double>>();
  double prod = 1.0;
  for (double b : betas) {
    m.schedule.betas.push_back(b);
    m.schedule.alphas.push_back(1.0 - b);
    prod *= 1.0 - b;
    m.schedule.alpha_bars.push_back(prod);
  }
  m.context_stats.mean = j.at("context_stats").at("mean").get<Features>();
  m.context_stats.scale = j.at("context_stats").at("scale").get<Features>();
  m.target_offset = j.at("target").at("offset").get<double>();
  m.target_scale = j.at("target").at("scale").get<double>();
  m.embed_dim = j.at("embed_dim").get<int>();
  m.encoder = nn::Mlp::from_json(j.at("encoder"));
  m.noise_net = nn::Mlp::from_json(j.at("noise_net"));
  m.step_mse = j.value("step_mse", std::vector<double>{});
  if (j.contains("train_meta")) {
    const auto& t = j.at("train_meta");
    m.meta.encoder_seed = t.value("encoder_seed", std::uint64_t{0});
    m.meta.noise_seed = t.value("noise_seed", std::uint64_t{0});
    m.meta.encoder_epochs = t.value("encoder_epochs", 0);
    m.meta.noise_epochs = t.value("noise_epochs", 0);
    m.meta.encoder_loss = t.value("encoder_loss", std::vector<double>{});
    m.meta.noise_loss = t.value("noise_loss", std::vector<double>{});
  }
  if (m.noise_net.input_dim() != m.input_dim() || m.encoder.input_dim() != 4) {
    throw std::invalid_argument("network shapes do not match the model layout");
  }
  return m;
}

void save_model(const DiffusionModel& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << to_json(m).dump();
  if (!os) throw Error("write failed: " + path);
}

DiffusionModel load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path);
  return model_from_json(nlohmann::json::parse(is));
}

}  // namespace rcp::diffusion
