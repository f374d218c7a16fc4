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

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rcp/diffusion.hpp"

namespace rcp::diffusion {

void NormalFiller::fill(Rng& rng, float* out, int n) {
  if (n <= 0) return;
  const int pairs = (n + 1) / 2;
  u1_.resize(pairs);
  u2_.resize(pairs);
  constexpr float kUnit = 1.0f / 16777216.0f;
  for (int p = 0; p < pairs; ++p) {
    const std::uint64_t w = rng();
    u1_[p] = (static_cast<float>(w >> 40) + 0.5f) * kUnit;
    u2_[p] = static_cast<float>((w >> 8) & 0xFFFFFFu) * (6.28318530718f * kUnit);
  }
  // Evaluated into owned aligned buffers so results do not depend on the alignment of out.
  r_ = (-2.0f * u1_.log()).sqrt();
  u1_ = r_ * u2_.cos();
  r_ = r_ * u2_.sin();
  std::copy_n(u1_.data(), pairs, out);
  std::copy_n(r_.data(), n - pairs, out + pairs);
}

GridSampler::GridSampler(const DiffusionModel& model) : model_(model) {
  const auto& layers = model.noise_net.layers();
  if (layers.size() < 2) throw std::invalid_argument("noise net needs a hidden layer");
  steps_ = model.schedule.steps();
  const auto& first = layers.front();
  width_ = static_cast<int>(first.W.rows());
  w_state_.resize(width_);
  w_fphi_.resize(width_);
  w_ctx_.resize(static_cast<std::size_t>(width_) * 4);
  step_bias_.resize(static_cast<std::size_t>(steps_) * width_);
  for (int k = 0; k < width_; ++k) {
    w_state_[k] = static_cast<float>(first.W(k, 0));
    w_fphi_[k] = static_cast<float>(first.W(k, 1));
    for (int c = 0; c < 4; ++c) w_ctx_[k * 4 + c] = static_cast<float>(first.W(k, 2 + c));
  }
  for (int j = 1; j <= steps_; ++j) {
    const auto e = step_embedding(j, model.embed_dim);
    for (int k = 0; k < width_; ++k) {
      double v = first.b(k);
      for (int d = 0; d < model.embed_dim; ++d) v += first.W(k, 6 + d) * e[d];
      step_bias_[static_cast<std::size_t>(j - 1) * width_ + k] = static_cast<float>(v);
    }
  }
  if (layers.size() == 2) {
    out_w_.resize(width_);
    for (int k = 0; k < width_; ++k) out_w_[k] = static_cast<float>(layers[1].W(0, k));
    out_b_ = static_cast<float>(layers[1].b(0));
  } else {
    for (std::size_t l = 1; l < layers.size(); ++l) {
      deep_w_.push_back(layers[l].W.cast<float>());
      deep_b_.push_back(layers[l].b.cast<float>());
    }
  }
  c1_.resize(steps_);
  c2_.resize(steps_);
  sd_.resize(steps_);
  for (int j = 1; j <= steps_; ++j) {
    const double a = model.schedule.alpha(j);
    const double ab = model.schedule.alpha_bar(j);
    const double b = model.schedule.beta(j);
    c1_[j - 1] = static_cast<float>(1.0 / std::sqrt(a));
    c2_[j - 1] = static_cast<float>(b / (std::sqrt(1.0 - ab) * std::sqrt(a)));
    sd_[j - 1] = static_cast<float>(std::sqrt(b));
  }
  a_.resize(width_);
}

void GridSampler::sample(const ContextVector& c, int n, Rng& rng, float* out) {
  if (n <= 0) return;
  const Features f = model_.context_stats.standardize(c);
  const double fphi = model_.encoder_mean(f);
  const float ff = static_cast<float>(fphi);
  // Context part of the first layer; the state enters as x + fphi, so fold w_state * fphi in.
  std::vector<float> ctx(width_);
  for (int k = 0; k < width_; ++k) {
    double v = w_fphi_[k] * fphi + w_state_[k] * fphi;
    for (int d = 0; d < 4; ++d) v += w_ctx_[k * 4 + d] * f[d];
    ctx[k] = static_cast<float>(v);
  }
  x_.resize(n);
  acc_.resize(n);
  z_.resize(n);
  normals_.fill(rng, x_.data(), n);

  float* __restrict x = x_.data();
  float* __restrict acc = acc_.data();
  for (int j = steps_; j >= 1; --j) {
    const float* sb = &step_bias_[static_cast<std::size_t>(j - 1) * width_];
    for (int k = 0; k < width_; ++k) a_[k] = ctx[k] + sb[k];
    if (deep_w_.empty()) {
      for (int m = 0; m < n; ++m) acc[m] = out_b_;
      for (int k = 0; k < width_; ++k) {
        const float ak = a_[k], wk = w_state_[k], vk = out_w_[k];
        for (int m = 0; m < n; ++m) {
          float h = ak + wk * x[m];
          h = h > 0.0f ? h : 0.0f;
          acc[m] += vk * h;
        }
      }
    } else {
      hidden_.resize(width_, n);
      for (int m = 0; m < n; ++m) {
        for (int k = 0; k < width_; ++k) {
          const float h = a_[k] + w_state_[k] * x[m];
          hidden_(k, m) = h > 0.0f ? h : 0.0f;
        }
      }
      Eigen::MatrixXf cur = hidden_;
      for (std::size_t l = 0; l < deep_w_.size(); ++l) {
        Eigen::MatrixXf next = deep_w_[l] * cur;
        next.colwise() += deep_b_[l];
        if (l + 1 < deep_w_.size()) next = next.cwiseMax(0.0f);
        cur = std::move(next);
      }
      for (int m = 0; m < n; ++m) acc[m] = cur(0, m);
    }
    const float c1 = c1_[j - 1], c2 = c2_[j - 1];
    if (j > 1) {
      const float sd = sd_[j - 1];
      normals_.fill(rng, z_.data(), n);
      const float* __restrict z = z_.data();
      for (int m = 0; m < n; ++m) x[m] = c1 * x[m] - c2 * acc[m] + sd * z[m];
    } else {
      for (int m = 0; m < n; ++m) x[m] = c1 * x[m] - c2 * acc[m];
    }
  }
  const float scale = static_cast<float>(model_.target_scale);
  const float offset = static_cast<float>(model_.target_offset);
  for (int m = 0; m < n; ++m) {
    const float v = (x[m] + ff) * scale + offset;
    if (!std::isfinite(v)) {
      throw Error("reverse chain produced a non-finite value at draw " + std::to_string(m));
    }
    out[m] = v;
  }
}

}  // namespace rcp::diffusion
