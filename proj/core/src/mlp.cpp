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

#include "rcp/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "rcp/common.hpp"

namespace rcp::nn {

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  std::vector<double> data(m.data(), m.data() + m.size());
  return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (shape.size() != 2 || static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1]) {
    throw std::invalid_argument("malformed weight array");
  }
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), shape[0], shape[1]);
}

}  // namespace

Mlp::Mlp(const std::vector<int>& sizes, std::uint64_t seed) {
  if (sizes.size() < 2) throw std::invalid_argument("network needs at least input and output sizes");
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    if (in <= 0 || out <= 0) throw std::invalid_argument("layer sizes must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Layer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
    for (Eigen::Index c = 0; c < layer.W.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.W.rows(); ++r) layer.W(r, c) = u(rng);
    for (Eigen::Index r = 0; r < layer.b.size(); ++r) layer.b(r) = u(rng);
    layers_.push_back(std::move(layer));
  }
}

int Mlp::input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().W.cols()); }
int Mlp::output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().W.rows()); }

std::vector<int> Mlp::sizes() const {
  std::vector<int> s;
  if (layers_.empty()) return s;
  s.push_back(input_dim());
  for (const auto& l : layers_) s.push_back(static_cast<int>(l.W.rows()));
  return s;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = (layers_[l].W * h).colwise() + layers_[l].b;
    if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Tape& tape) const {
  tape.inputs.resize(layers_.size());
  tape.pre.resize(layers_.size());
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    tape.inputs[l] = h;
    tape.pre[l] = (layers_[l].W * h).colwise() + layers_[l].b;
    h = (l + 1 < layers_.size()) ? Eigen::MatrixXd(tape.pre[l].cwiseMax(0.0)) : tape.pre[l];
  }
  return h;
}

void Mlp::backward(const Tape& tape, const Eigen::MatrixXd& dy, std::vector<Layer>& grads) const {
  Eigen::MatrixXd delta = dy;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    if (k + 1 < layers_.size()) {
      delta = delta.cwiseProduct((tape.pre[k].array() > 0.0).cast<double>().matrix());
    }
    grads[k].W.noalias() += delta * tape.inputs[k].transpose();
    grads[k].b += delta.rowwise().sum();
    if (k > 0) delta = layers_[k].W.transpose() * delta;
  }
}

std::vector<Layer> Mlp::zero_like() const {
  std::vector<Layer> g;
  for (const auto& l : layers_) {
    g.push_back({Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()), Eigen::VectorXd::Zero(l.b.size())});
  }
  return g;
}

bool Mlp::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.W.allFinite() || !l.b.allFinite()) return false;
  }
  return true;
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : layers_) {
    arr.push_back({{"W", matrix_json(l.W)}, {"b", matrix_json(l.b)}});
  }
  return {{"activation", "relu"}, {"layers", arr}};
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  Mlp net;
  for (const auto& lj : j.at("layers")) {
    Layer l{matrix_from_json(lj.at("W")), matrix_from_json(lj.at("b"))};
    if (l.b.size() != l.W.rows()) throw std::invalid_argument("bias size mismatch");
    if (!net.layers_.empty() && net.layers_.back().W.rows() != l.W.cols()) {
      throw std::invalid_argument("layer shape mismatch");
    }
    net.layers_.push_back(std::move(l));
  }
  return net;
}

Adam::Adam(const Mlp& net, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(net.zero_like()), v_(net.zero_like()) {}

void Adam::step(Mlp& net, const std::vector<Layer>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const double step = lr_ * std::sqrt(c2) / c1;
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    param.array() -= step * m.array() / (v.array().sqrt() + eps_);
  };
  auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].W, m_[l].W, v_[l].W, grads[l].W);
    update(layers[l].b, m_[l].b, v_[l].b, grads[l].b);
  }
}

}  // namespace rcp::nn
