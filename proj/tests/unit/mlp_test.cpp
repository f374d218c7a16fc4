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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rcp/mlp.hpp"

using rcp::nn::Adam;
using rcp::nn::Layer;
using rcp::nn::Mlp;

namespace {

double loss(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& w) {
  return (net.forward(x).array() * w.array()).sum();
}

}  // namespace

TEST(Mlp, ShapesAndInitBounds) {
  Mlp net({5, 7, 3, 1}, 1);
  EXPECT_EQ(net.input_dim(), 5);
  EXPECT_EQ(net.output_dim(), 1);
  EXPECT_EQ(net.sizes(), (std::vector<int>{5, 7, 3, 1}));
  for (const auto& l : net.layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.W.cols()));
    EXPECT_LE(l.W.cwiseAbs().maxCoeff(), bound);
    EXPECT_LE(l.b.cwiseAbs().maxCoeff(), bound);
  }
  EXPECT_THROW(Mlp({3}, 1), std::invalid_argument);
  EXPECT_THROW(Mlp({3, 0, 1}, 1), std::invalid_argument);
}

TEST(Mlp, DeterministicInit) {
  Mlp a({4, 8, 1}, 42), b({4, 8, 1}, 42), c({4, 8, 1}, 43);
  EXPECT_TRUE(a.layers()[0].W.isApprox(b.layers()[0].W, 0.0));
  EXPECT_FALSE(a.layers()[0].W.isApprox(c.layers()[0].W));
}

TEST(Mlp, ForwardMatchesHandComputation) {
  Mlp net({2, 2, 1}, 1);
  auto& L = net.layers();
  L[0].W << 1.0, -1.0, 0.5, 2.0;
  L[0].b << 0.0, -3.0;
  L[1].W << 2.0, 1.0;
  L[1].b << 0.5;
  Eigen::MatrixXd x(2, 2);
  x << 1.0, 3.0, 2.0, 1.0;
  // column 0: h = relu(-1, 1.5) -> 2.0; column 1: h = relu(2, 0.5) -> 5.0
  const auto y = net.forward(x);
  EXPECT_DOUBLE_EQ(y(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(y(0, 1), 5.0);
}

TEST(Mlp, BackwardMatchesCentralDifferences) {
  Mlp net({3, 6, 5, 1}, 7);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Eigen::MatrixXd x(3, 9), w(1, 9);
  for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = n(rng);
  for (Eigen::Index k = 0; k < w.size(); ++k) w(k) = n(rng);
  Mlp::Tape tape;
  net.forward(x, tape);
  auto grads = net.zero_like();
  net.backward(tape, w, grads);
  const double h = 1e-6;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    for (Eigen::Index k = 0; k < net.layers()[l].W.size(); ++k) {
      Mlp p = net, m = net;
      p.layers()[l].W(k) += h;
      m.layers()[l].W(k) -= h;
      const double fd = (loss(p, x, w) - loss(m, x, w)) / (2 * h);
      EXPECT_NEAR(grads[l].W(k), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
    for (Eigen::Index k = 0; k < net.layers()[l].b.size(); ++k) {
      Mlp p = net, m = net;
      p.layers()[l].b(k) += h;
      m.layers()[l].b(k) -= h;
      const double fd = (loss(p, x, w) - loss(m, x, w)) / (2 * h);
      EXPECT_NEAR(grads[l].b(k), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Mlp, BackwardAccumulates) {
  Mlp net({2, 4, 1}, 2);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 3), w = Eigen::MatrixXd::Ones(1, 3);
  Mlp::Tape tape;
  net.forward(x, tape);
  auto once = net.zero_like(), twice = net.zero_like();
  net.backward(tape, w, once);
  net.backward(tape, w, twice);
  net.backward(tape, w, twice);
  EXPECT_TRUE(twice[0].W.isApprox(2.0 * once[0].W));
}

TEST(Adam, FirstStepMovesEveryParameterByLr) {
  Mlp net({1, 1}, 1);
  Adam opt(net, 0.1);
  auto g = net.zero_like();
  g[0].W(0, 0) = 5.0;
  g[0].b(0) = -0.01;
  const double w0 = net.layers()[0].W(0, 0), b0 = net.layers()[0].b(0);
  opt.step(net, g);
  EXPECT_NEAR(net.layers()[0].W(0, 0), w0 - 0.1, 1e-6);
  EXPECT_NEAR(net.layers()[0].b(0), b0 + 0.1, 1e-4);
}

TEST(Adam, FitsLinearMap) {
  Mlp net({1, 1}, 3);
  Adam opt(net, 0.05);
  Eigen::MatrixXd x(1, 20), y(1, 20);
  for (int k = 0; k < 20; ++k) {
    x(0, k) = -1.0 + 0.1 * k;
    y(0, k) = 3.0 * x(0, k) - 0.5;
  }
  for (int it = 0; it < 2000; ++it) {
    Mlp::Tape tape;
    const auto out = net.forward(x, tape);
    auto g = net.zero_like();
    net.backward(tape, 2.0 * (out - y) / 20.0, g);
    opt.step(net, g);
  }
  EXPECT_NEAR(net.layers()[0].W(0, 0), 3.0, 1e-3);
  EXPECT_NEAR(net.layers()[0].b(0), -0.5, 1e-3);
}

TEST(Mlp, JsonRoundTripAndFiniteness) {
  Mlp net({3, 4, 1}, 9);
  const auto back = Mlp::from_json(net.to_json());
  ASSERT_EQ(back.sizes(), net.sizes());
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    EXPECT_TRUE(back.layers()[l].W.isApprox(net.layers()[l].W, 0.0));
    EXPECT_TRUE(back.layers()[l].b.isApprox(net.layers()[l].b, 0.0));
  }
  EXPECT_TRUE(net.all_finite());
  net.layers()[0].W(0, 0) = std::nan("");
  EXPECT_FALSE(net.all_finite());
}
