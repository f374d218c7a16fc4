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

#ifndef RCP_MLP_HPP_
#define RCP_MLP_HPP_

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace rcp::nn {

struct Layer {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;
};

// Fully connected ReLU network with a linear output layer. Batches are stored column-wise.
class Mlp {
 public:
  struct Tape {
    std::vector<Eigen::MatrixXd> inputs;  // input of every layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of every layer
  };

  Mlp() = default;
  Mlp(const std::vector<int>& sizes, std::uint64_t seed);

  int input_dim() const;
  int output_dim() const;
  std::vector<int> sizes() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape& tape) const;
  // Accumulates parameter gradients of sum(dy .* output) into grads (same shapes as layers()).
  void backward(const Tape& tape, const Eigen::MatrixXd& dy, std::vector<Layer>& grads) const;
  std::vector<Layer> zero_like() const;

  bool all_finite() const;
  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

 private:
  std::vector<Layer> layers_;
};

class Adam {
 public:
  Adam(const Mlp& net, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void set_lr(double lr) { lr_ = lr; }
  void step(Mlp& net, const std::vector<Layer>& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<Layer> m_, v_;
};

}  // namespace rcp::nn

#endif  // RCP_MLP_HPP_
