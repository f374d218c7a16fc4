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

#ifndef RCP_SCORES_HPP_
#define RCP_SCORES_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcp/conformal.hpp"
#include "rcp/diffusion.hpp"

namespace rcp::scores {

// Position-error norms over the index set {t=1..T-1} x {tau=t+1..min(t+H,T)} x {agents}.
// Agents are 0-based; times follow the episode step numbering (positions exist for 0..T).
class PredictionErrorTensor {
 public:
  struct Entry {
    int t, tau, i;
    double value;
  };

  PredictionErrorTensor(int T, int H, int N);

  int episode_length() const { return T_; }
  int horizon() const { return H_; }
  int agents() const { return N_; }
  // Number of keys in the index set.
  std::size_t size() const;
  bool contains(int t, int tau, int i) const;
  double at(int t, int tau, int i) const;
  void set(int t, int tau, int i, double value);
  // Keys in canonical order (t, then tau, then agent).
  std::vector<Entry> entries() const;

 private:
  std::size_t offset(int t, int tau, int i) const;
  int T_, H_, N_;
  std::vector<double> data_;
};

// Canonical enumeration of the index set as (t, h = tau - t, i).
struct GridKey {
  int t, h, i;
};
std::vector<GridKey> index_set(int T, int H, int N);

class SigmaTable {
 public:
  SigmaTable(int H, int N, std::vector<double> values);
  static SigmaTable constant(int H, int N, double value);

  int horizon() const { return H_; }
  int agents() const { return N_; }
  double at(int h, int i) const;
  double sigma_min() const { return sigma_min_; }
  const std::vector<double>& values() const { return values_; }

 private:
  int H_, N_;
  std::vector<double> values_;  // (h-1)*N + i
  double sigma_min_;
};

struct RegionRadii {
  int t = 0;
  int H = 0;
  int N = 0;
  std::vector<double> radii;  // (h-1)*N + i, tau = t + h
  conformal::QuantileResult quantile;
  std::string centers_source = "constant-velocity";

  double at(int tau, int i) const { return radii.at(static_cast<std::size_t>(tau - t - 1) * N + i); }
};

// Raised when radii are requested from an infinite quantile.
class UnboundedRegion : public Error {
 public:
  UnboundedRegion() : Error("quantile is infinite; prediction regions are unbounded") {}
};

double episode_score(const PredictionErrorTensor& errors, const SigmaTable& sigma);

SigmaTable fit_sigma(const std::vector<PredictionErrorTensor>& calibration_errors, double floor = 1e-3);

RegionRadii region_radii(const conformal::QuantileResult& quantile, const SigmaTable& sigma, int t,
                         int H, int N);

double synthetic_episode_score(const diffusion::DiffusionModel& model, double eta, int T, int H,
                               int N, const SigmaTable& sigma, std::uint64_t seed);

// K synthetic scores; context stream c of the grid is seeded from (seed, c).
conformal::ScoreSet build_synthetic_scoreset(const diffusion::DiffusionModel& model, double eta,
                                             int T, int H, int N, const SigmaTable& sigma, int K,
                                             std::uint64_t seed);

nlohmann::json to_json(const SigmaTable& s);
SigmaTable sigma_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PredictionErrorTensor& e);
PredictionErrorTensor errors_from_json(const nlohmann::json& j);

}  // namespace rcp::scores

#endif  // RCP_SCORES_HPP_
