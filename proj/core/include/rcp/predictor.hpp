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

#ifndef RCP_PREDICTOR_HPP_
#define RCP_PREDICTOR_HPP_

#include <vector>

#include "rcp/common.hpp"

namespace rcp::predictor {

struct ObstacleHistory {
  std::vector<Vec2> positions;  // samples 0..t
  double dt = 0.125;
};

struct PredictionSet {
  int t = 0;
  int H = 0;
  int N = 0;
  std::vector<Vec2> yhat;  // (h-1)*N + i for tau = t + h

  Vec2 at(int tau, int i) const { return yhat.at(static_cast<std::size_t>(tau - t - 1) * N + i); }
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual PredictionSet predict(const std::vector<ObstacleHistory>& histories, int t, int H) const = 0;
};

// Least-squares velocity over the last `window` samples, extrapolated linearly.
Vec2 estimate_velocity(const ObstacleHistory& history, int t, int window);

PredictionSet predict(const std::vector<ObstacleHistory>& histories, int t, int H, int window = 4);

class ConstantVelocityPredictor : public Predictor {
 public:
  explicit ConstantVelocityPredictor(int window = 4) : window_(window) {}
  PredictionSet predict(const std::vector<ObstacleHistory>& histories, int t, int H) const override {
    return rcp::predictor::predict(histories, t, H, window_);
  }

 private:
  int window_;
};

}  // namespace rcp::predictor

#endif  // RCP_PREDICTOR_HPP_
