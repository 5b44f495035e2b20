#include "ecodrive/network.hpp"

#include <cmath>
#include <stdexcept>

namespace ecodrive {

Mlp::Mlp(std::vector<int> sizes, Rng& rng, double output_scale) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least two layer sizes");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k + 1 < sizes_.size(); ++k) {
    Layer layer{Eigen::MatrixXd(sizes_[k + 1], sizes_[k]), Eigen::VectorXd::Zero(sizes_[k + 1])};
    double scale = 1.0 / std::sqrt(static_cast<double>(sizes_[k]));
    if (k + 2 == sizes_.size()) scale *= output_scale;
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
        layer.weight(i, j) = scale * normal(rng);
      }
    }
    layers_.push_back(std::move(layer));
  }
}

Mlp Mlp::zeros(std::vector<int> sizes) {
  Mlp net;
  net.sizes_ = std::move(sizes);
  for (std::size_t k = 0; k + 1 < net.sizes_.size(); ++k) {
    net.layers_.push_back({Eigen::MatrixXd::Zero(net.sizes_[k + 1], net.sizes_[k]),
                           Eigen::VectorXd::Zero(net.sizes_[k + 1])});
  }
  return net;
}

int Mlp::num_params() const {
  int n = 0;
  for (const auto& l : layers_) n += static_cast<int>(l.weight.size() + l.bias.size());
  return n;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd h = x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    Eigen::MatrixXd z = layers_[k].weight * h;
    z.colwise() += layers_[k].bias;
    h = (k + 1 < layers_.size()) ? Eigen::MatrixXd(z.array().tanh()) : z;
  }
  return h;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Tape& tape) const {
  tape.h.clear();
  tape.h.reserve(layers_.size() + 1);
  tape.h.push_back(x);
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    Eigen::MatrixXd z = layers_[k].weight * tape.h.back();
    z.colwise() += layers_[k].bias;
    if (k + 1 < layers_.size()) z = z.array().tanh().matrix();
    tape.h.push_back(std::move(z));
  }
  return tape.h.back();
}

Eigen::VectorXd Mlp::backward(const Tape& tape, const Eigen::MatrixXd& grad_out) const {
  Eigen::VectorXd grad(num_params());
  // Offsets of each layer's block in the flat layout.
  std::vector<int> offset(layers_.size());
  int pos = 0;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    offset[k] = pos;
    pos += static_cast<int>(layers_[k].weight.size() + layers_[k].bias.size());
  }
  Eigen::MatrixXd delta = grad_out;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& layer = layers_[k];
    const Eigen::MatrixXd& input = tape.h[k];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offset[k], layer.weight.rows(),
                                   layer.weight.cols());
    gw.noalias() = delta * input.transpose();
    grad.segment(offset[k] + layer.weight.size(), layer.bias.size()) = delta.rowwise().sum();
    if (k > 0) {
      Eigen::MatrixXd back = layer.weight.transpose() * delta;
      delta = back.array() * (1.0 - input.array().square());
    }
  }
  return grad;
}

Eigen::MatrixXd Mlp::jvp(const Tape& tape, const Eigen::VectorXd& dtheta) const {
  const Eigen::Index batch = tape.h[0].cols();
  Eigen::MatrixXd tangent = Eigen::MatrixXd::Zero(tape.h[0].rows(), batch);
  int pos = 0;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& layer = layers_[k];
    Eigen::Map<const Eigen::MatrixXd> dw(dtheta.data() + pos, layer.weight.rows(),
                                         layer.weight.cols());
    pos += static_cast<int>(layer.weight.size());
    const auto db = dtheta.segment(pos, layer.bias.size());
    pos += static_cast<int>(layer.bias.size());
    Eigen::MatrixXd dz = dw * tape.h[k];
    if (k > 0) dz.noalias() += layer.weight * tangent;
    dz.colwise() += db;
    if (k + 1 < layers_.size()) {
      tangent = dz.array() * (1.0 - tape.h[k + 1].array().square());
    } else {
      tangent = std::move(dz);
    }
  }
  return tangent;
}

Eigen::VectorXd Mlp::flat() const {
  Eigen::VectorXd theta(num_params());
  int pos = 0;
  for (const auto& l : layers_) {
    theta.segment(pos, l.weight.size()) =
        Eigen::Map<const Eigen::VectorXd>(l.weight.data(), l.weight.size());
    pos += static_cast<int>(l.weight.size());
    theta.segment(pos, l.bias.size()) = l.bias;
    pos += static_cast<int>(l.bias.size());
  }
  return theta;
}

void Mlp::set_flat(const Eigen::VectorXd& theta) {
  if (theta.size() != num_params()) throw std::invalid_argument("Mlp::set_flat size mismatch");
  int pos = 0;
  for (auto& l : layers_) {
    Eigen::Map<Eigen::VectorXd>(l.weight.data(), l.weight.size()) =
        theta.segment(pos, l.weight.size());
    pos += static_cast<int>(l.weight.size());
    l.bias = theta.segment(pos, l.bias.size());
    pos += static_cast<int>(l.bias.size());
  }
}

}  // namespace ecodrive
