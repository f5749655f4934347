#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nnreach/error.hpp"

namespace nnreach {

/// Index into a controller's output layer.
struct ActionId {
  std::size_t index = 0;
  auto operator<=>(const ActionId&) const = default;
};

/// Feedforward network: ReLU on every hidden layer, identity on the output layer.
/// weights[l] has shape sizes[l+1] x sizes[l].
template <typename Scalar>
class BasicNetwork {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  BasicNetwork() = default;

  BasicNetwork(std::vector<Matrix> weights, std::vector<Vector> biases)
      : weights_(std::move(weights)), biases_(std::move(biases)) {
    if (weights_.empty()) throw InvalidArgument("Network: no layers");
    if (weights_.size() != biases_.size()) throw InvalidArgument("Network: weight/bias count mismatch");
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      if (weights_[l].rows() != biases_[l].size()) {
        throw InvalidArgument("Network: layer " + std::to_string(l) + " bias length does not match weights");
      }
      if (l > 0 && weights_[l].cols() != weights_[l - 1].rows()) {
        throw InvalidArgument("Network: layer " + std::to_string(l) + " input width mismatch");
      }
      if (!weights_[l].allFinite() || !biases_[l].allFinite()) {
        throw InvalidArgument("Network: non-finite parameter in layer " + std::to_string(l));
      }
    }
  }

  std::size_t num_layers() const { return weights_.size(); }
  Eigen::Index input_size() const { return weights_.front().cols(); }
  Eigen::Index output_size() const { return weights_.back().rows(); }

  std::vector<Eigen::Index> layer_sizes() const {
    std::vector<Eigen::Index> sizes{input_size()};
    for (const auto& w : weights_) sizes.push_back(w.rows());
    return sizes;
  }

  const Matrix& weights(std::size_t layer) const { return weights_[layer]; }
  const Vector& biases(std::size_t layer) const { return biases_[layer]; }
  Matrix& weights(std::size_t layer) { return weights_[layer]; }
  Vector& biases(std::size_t layer) { return biases_[layer]; }

 private:
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

using Network = BasicNetwork<double>;

/// Forward pass. Throws InvalidArgument on a length mismatch.
template <typename Scalar, typename Derived>
typename BasicNetwork<Scalar>::Vector evaluate(const BasicNetwork<Scalar>& net,
                                               const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != net.input_size()) {
    throw InvalidArgument("evaluate: input has length " + std::to_string(x.size()) + ", expected " +
                          std::to_string(net.input_size()));
  }
  typename BasicNetwork<Scalar>::Vector a = x;
  const std::size_t last = net.num_layers() - 1;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    a = net.weights(l) * a + net.biases(l);
    if (l != last) a = a.cwiseMax(Scalar(0));
  }
  return a;
}

/// Batched forward pass: one input per column.
template <typename Scalar>
typename BasicNetwork<Scalar>::Matrix evaluate_batch(const BasicNetwork<Scalar>& net,
                                                     const typename BasicNetwork<Scalar>::Matrix& inputs) {
  if (inputs.rows() != net.input_size()) throw InvalidArgument("evaluate_batch: input size mismatch");
  typename BasicNetwork<Scalar>::Matrix a = inputs;
  const std::size_t last = net.num_layers() - 1;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    a = (net.weights(l) * a).colwise() + net.biases(l);
    if (l != last) a = a.cwiseMax(Scalar(0));
  }
  return a;
}

/// Index of the largest output; ties go to the lowest index. Throws InvalidValue on NaN.
template <typename Derived>
ActionId argmax_action(const Eigen::MatrixBase<Derived>& outputs) {
  if (outputs.size() == 0) throw InvalidArgument("argmax_action: empty output");
  std::size_t best = 0;
  for (Eigen::Index i = 0; i < outputs.size(); ++i) {
    if (std::isnan(outputs[i])) throw InvalidValue("argmax_action: NaN output");
    if (outputs[i] > outputs[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  }
  return ActionId{best};
}

/// Text model format: `layers=L`, `sizes=n0,...,nL`, then per layer a `W` line followed by
/// one comma-separated row per output unit, and a `b` line followed by the bias row.
/// `#` starts a comment.
Network load_network(std::istream& in);
void save_network(std::ostream& out, const Network& net);

Network load_network_file(const std::string& path);
void save_network_file(const std::string& path, const Network& net);

}  // namespace nnreach
