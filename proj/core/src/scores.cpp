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

#include "rcp/scores.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rcp::scores {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

PredictionErrorTensor::PredictionErrorTensor(int T, int H, int N) : T_(T), H_(H), N_(N) {
  if (T < 2 || H < 1 || N < 1) throw std::invalid_argument("need T >= 2, H >= 1, N >= 1");
  data_.assign(static_cast<std::size_t>(T - 1) * H * N, kNaN);
}

std::size_t PredictionErrorTensor::size() const { return index_set(T_, H_, N_).size(); }

bool PredictionErrorTensor::contains(int t, int tau, int i) const {
  return t >= 1 && t <= T_ - 1 && tau > t && tau <= std::min(t + H_, T_) && i >= 0 && i < N_;
}

std::size_t PredictionErrorTensor::offset(int t, int tau, int i) const {
  if (!contains(t, tau, i)) throw std::out_of_range("error key outside the index set");
  return (static_cast<std::size_t>(t - 1) * H_ + (tau - t - 1)) * N_ + i;
}

double PredictionErrorTensor::at(int t, int tau, int i) const {
  const double v = data_[offset(t, tau, i)];
  if (std::isnan(v)) throw std::out_of_range("error entry not set");
  return v;
}

void PredictionErrorTensor::set(int t, int tau, int i, double value) {
  if (!std::isfinite(value) || value < 0.0) throw std::invalid_argument("errors must be finite and >= 0");
  data_[offset(t, tau, i)] = value;
}

std::vector<PredictionErrorTensor::Entry> PredictionErrorTensor::entries() const {
  std::vector<Entry> out;
  for (const auto& k : index_set(T_, H_, N_)) {
    const double v = data_[offset(k.t, k.t + k.h, k.i)];
    if (!std::isnan(v)) out.push_back({k.t, k.t + k.h, k.i, v});
  }
  return out;
}

std::vector<GridKey> index_set(int T, int H, int N) {
  std::vector<GridKey> keys;
  for (int t = 1; t <= T - 1; ++t) {
    for (int tau = t + 1; tau <= std::min(t + H, T); ++tau) {
      for (int i = 0; i < N; ++i) keys.push_back({t, tau - t, i});
    }
  }
  return keys;
}

SigmaTable::SigmaTable(int H, int N, std::vector<double> values)
    : H_(H), N_(N), values_(std::move(values)) {
  if (H < 1 || N < 1) throw std::invalid_argument("sigma table needs H >= 1 and N >= 1");
  if (values_.size() != static_cast<std::size_t>(H) * N) throw std::invalid_argument("sigma table size mismatch");
  for (double v : values_) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("sigma values must be positive");
  }
  sigma_min_ = *std::min_element(values_.begin(), values_.end());
}

SigmaTable SigmaTable::constant(int H, int N, double value) {
  return SigmaTable(H, N, std::vector<double>(static_cast<std::size_t>(H) * N, value));
}

double SigmaTable::at(int h, int i) const {
  if (h < 1 || h > H_ || i < 0 || i >= N_) throw std::out_of_range("sigma key out of range");
  return values_[static_cast<std::size_t>(h - 1) * N_ + i];
}

double episode_score(const PredictionErrorTensor& errors, const SigmaTable& sigma) {
  const auto e = errors.entries();
  if (e.empty()) throw std::invalid_argument("empty error tensor");
  double best = 0.0;
  for (const auto& x : e) best = std::max(best, x.value / sigma.at(x.tau - x.t, x.i));
  return best;
}

SigmaTable fit_sigma(const std::vector<PredictionErrorTensor>& calibration_errors, double floor) {
  if (calibration_errors.empty()) throw std::invalid_argument("fit_sigma needs at least one episode");
  if (!(floor > 0.0)) throw std::invalid_argument("sigma floor must be positive");
  const int H = calibration_errors.front().horizon();
  const int N = calibration_errors.front().agents();
  std::vector<double> sum(static_cast<std::size_t>(H) * N, 0.0), cnt(sum.size(), 0.0);
  for (const auto& ep : calibration_errors) {
    if (ep.horizon() != H || ep.agents() != N) throw std::invalid_argument("inconsistent tensor shapes");
    for (const auto& x : ep.entries()) {
      const std::size_t k = static_cast<std::size_t>(x.tau - x.t - 1) * N + x.i;
      sum[k] += x.value;
      cnt[k] += 1.0;
    }
  }
  std::vector<double> sigma(sum.size());
  for (std::size_t k = 0; k < sum.size(); ++k) {
    sigma[k] = std::max(floor, cnt[k] > 0.0 ? sum[k] / cnt[k] : 0.0);
  }
  return SigmaTable(H, N, std::move(sigma));
}

RegionRadii region_radii(const conformal::QuantileResult& quantile, const SigmaTable& sigma, int t,
                         int H, int N) {
  if (quantile.infinite || !std::isfinite(quantile.c_nominal + quantile.delta_correction)) {
    throw UnboundedRegion();
  }
  RegionRadii out;
  out.t = t;
  out.H = H;
  out.N = N;
  out.quantile = quantile;
  const double c = quantile.c_nominal + quantile.delta_correction;
  for (int h = 1; h <= H; ++h) {
    for (int i = 0; i < N; ++i) out.radii.push_back(sigma.at(h, i) * c);
  }
  return out;
}

conformal::ScoreSet build_synthetic_scoreset(const diffusion::DiffusionModel& model, double eta,
                                             int T, int H, int N, const SigmaTable& sigma, int K,
                                             std::uint64_t seed) {
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  if (sigma.horizon() < H || sigma.agents() < N) throw std::invalid_argument("sigma table does not cover the grid");
  const auto grid = index_set(T, H, N);
  diffusion::GridSampler sampler(model);
  std::vector<double> best(static_cast<std::size_t>(K), 0.0);
  std::vector<float> draws(static_cast<std::size_t>(K));
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const auto& key = grid[c];
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(c)}));
    sampler.sample({eta, static_cast<double>(key.t), static_cast<double>(key.h), static_cast<double>(key.i)},
                   K, rng, draws.data());
    const double inv = 1.0 / sigma.at(key.h, key.i);
    for (int k = 0; k < K; ++k) {
      const double v = std::max(0.0, static_cast<double>(draws[k])) * inv;
      if (v > best[k]) best[k] = v;
    }
  }
  return conformal::ScoreSet(std::move(best), conformal::Provenance::Synthetic);
}

double synthetic_episode_score(const diffusion::DiffusionModel& model, double eta, int T, int H,
                               int N, const SigmaTable& sigma, std::uint64_t seed) {
  return build_synthetic_scoreset(model, eta, T, H, N, sigma, 1, seed)[0];
}

nlohmann::json to_json(const SigmaTable& s) {
  nlohmann::json m = nlohmann::json::object();
  for (int h = 1; h <= s.horizon(); ++h) {
    for (int i = 0; i < s.agents(); ++i) m[std::to_string(h) + ":" + std::to_string(i)] = s.at(h, i);
  }
  return {{"H", s.horizon()}, {"N", s.agents()}, {"sigma", m}, {"sigma_min", s.sigma_min()}};
}

SigmaTable sigma_from_json(const nlohmann::json& j) {
  const int H = j.at("H").get<int>();
  const int N = j.at("N").get<int>();
  std::vector<double> v(static_cast<std::size_t>(H) * N);
  for (int h = 1; h <= H; ++h) {
    for (int i = 0; i < N; ++i) {
      v[static_cast<std::size_t>(h - 1) * N + i] =
          j.at("sigma").at(std::to_string(h) + ":" + std::to_string(i)).get<double>();
    }
  }
  return SigmaTable(H, N, std::move(v));
}

nlohmann::json to_json(const PredictionErrorTensor& e) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& x : e.entries()) rows.push_back({x.t, x.tau, x.i, x.value});
  return {{"T", e.episode_length()}, {"H", e.horizon()}, {"N", e.agents()}, {"entries", rows}};
}

PredictionErrorTensor errors_from_json(const nlohmann::json& j) {
  PredictionErrorTensor e(j.at("T").get<int>(), j.at("H").get<int>(), j.at("N").get<int>());
  for (const auto& r : j.at("entries")) {
    e.set(r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(), r.at(3).get<double>());
  }
  return e;
}

}  // namespace rcp::scores
