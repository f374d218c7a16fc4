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

#include "rcp/predictor.hpp"

#include <algorithm>
#include <stdexcept>

namespace rcp::predictor {

Vec2 estimate_velocity(const ObstacleHistory& history, int t, int window) {
  if (window < 2) throw std::invalid_argument("window must be >= 2");
  if (t < 1 || static_cast<std::size_t>(t) >= history.positions.size()) {
    throw std::invalid_argument("insufficient history: need samples 0..t with t >= 1");
  }
  const int first = std::max(0, t - window + 1);
  const int n = t - first + 1;
  double tm = 0.0;
  Vec2 pm;
  for (int k = first; k <= t; ++k) {
    tm += k * history.dt;
    pm = pm + history.positions[k];
  }
  tm /= n;
  pm = (1.0 / n) * pm;
  double stt = 0.0;
  Vec2 stp;
  for (int k = first; k <= t; ++k) {
    const double d = k * history.dt - tm;
    stt += d * d;
    stp = stp + d * (history.positions[k] - pm);
  }
  return (1.0 / stt) * stp;
}

PredictionSet predict(const std::vector<ObstacleHistory>& histories, int t, int H, int window) {
  if (H < 1) throw std::invalid_argument("horizon must be >= 1");
  PredictionSet out;
  out.t = t;
  out.H = H;
  out.N = static_cast<int>(histories.size());
  out.yhat.resize(static_cast<std::size_t>(H) * out.N);
  for (int i = 0; i < out.N; ++i) {
    const auto& hist = histories[i];
    const Vec2 v = estimate_velocity(hist, t, window);
    const Vec2 p = hist.positions[t];
    for (int h = 1; h <= H; ++h) {
      out.yhat[static_cast<std::size_t>(h - 1) * out.N + i] = p + (h * hist.dt) * v;
    }
  }
  return out;
}

}  // namespace rcp::predictor
