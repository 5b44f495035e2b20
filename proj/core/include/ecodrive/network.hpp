#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ecodrive/rng.hpp"

namespace ecodrive {

// Fully connected network with tanh hidden layers and a linear output layer.
// Batches are column-major: one sample per column.
class Mlp {
 public:
  struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
  };

  // Activations recorded by a forward pass; h[0] is the input, h[k] the output
  // of layer k.
  struct Tape {
    std::vector<Eigen::MatrixXd> h;
  };

  Mlp() = default;
  // Weights ~ N(0, 1/fan_in); the last layer is further scaled by
  // `output_scale`. Biases start at zero.
  Mlp(std::vector<int> sizes, Rng& rng, double output_scale = 1.0);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int num_params() const;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape& tape) const;

  // Sum over the batch of J_n^T grad_out.col(n), as a flat parameter vector.
  Eigen::VectorXd backward(const Tape& tape, const Eigen::MatrixXd& grad_out) const;

  // J_n * dtheta for each sample n (output x batch).
  Eigen::MatrixXd jvp(const Tape& tape, const Eigen::VectorXd& dtheta) const;

  Eigen::VectorXd flat() const;
  void set_flat(const Eigen::VectorXd& theta);

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  // Builds a network from explicit shapes with all parameters zero.
  static Mlp zeros(std::vector<int> sizes);

 private:
  std::vector<int> sizes_;
  std::vector<Layer> layers_;
};

}  // namespace ecodrive
