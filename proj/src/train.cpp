#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nnreach/mdp.hpp"

namespace nnreach {

namespace {

Dataset collect(const QTable& table, std::optional<std::size_t> drop_dim, std::size_t keep_index) {
  const auto& grid = table.grid;
  std::vector<std::size_t> rows;
  for (std::size_t s = 0; s < grid.size(); ++s) {
    if (drop_dim && (s / grid.stride(*drop_dim)) % grid.coords(*drop_dim).size() != keep_index) continue;
    rows.push_back(s);
  }
  const auto in_dims = static_cast<Eigen::Index>(grid.dims() - (drop_dim ? 1 : 0));
  Dataset data;
  data.inputs.resize(in_dims, static_cast<Eigen::Index>(rows.size()));
  data.targets.resize(table.values.cols(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const MdpPoint p = grid.point(rows[k]);
    Eigen::Index r = 0;
    for (std::size_t d = 0; d < grid.dims(); ++d) {
      if (drop_dim && d == *drop_dim) continue;
      data.inputs(r++, static_cast<Eigen::Index>(k)) = p[d];
    }
    data.targets.col(static_cast<Eigen::Index>(k)) = table.values.row(static_cast<Eigen::Index>(rows[k])).transpose();
  }
  return data;
}

// Loss weights: lambda where the optimal action is under-valued or another is over-valued.
Eigen::MatrixXd loss_weights(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& targets, double lambda) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Ones(pred.rows(), pred.cols());
  for (Eigen::Index j = 0; j < pred.cols(); ++j) {
    const Eigen::Index best = static_cast<Eigen::Index>(argmax_action(targets.col(j)).index);
    for (Eigen::Index a = 0; a < pred.rows(); ++a) {
      const double e = pred(a, j) - targets(a, j);
      if ((a == best && e < 0.0) || (a != best && e > 0.0)) w(a, j) = lambda;
    }
  }
  return w;
}

// Forward pass keeping every layer's post-activation, then backpropagation.
double forward_backward(const Network& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& t, double lambda,
                        Gradient& grad) {
  const std::size_t layers = net.num_layers();
  std::vector<Eigen::MatrixXd> acts(layers + 1);
  acts[0] = x;
  for (std::size_t l = 0; l < layers; ++l) {
    acts[l + 1] = (net.weights(l) * acts[l]).colwise() + net.biases(l);
    if (l + 1 != layers) acts[l + 1] = acts[l + 1].cwiseMax(0.0);
  }
  const Eigen::MatrixXd& pred = acts[layers];
  const Eigen::MatrixXd w = loss_weights(pred, t, lambda);
  const Eigen::MatrixXd err = pred - t;
  const double count = static_cast<double>(err.size());
  const double loss = (w.array() * err.array().square()).sum() / count;

  grad.weights.resize(layers);
  grad.biases.resize(layers);
  Eigen::MatrixXd delta = (2.0 / count) * (w.array() * err.array()).matrix();
  for (std::size_t l = layers; l-- > 0;) {
    grad.weights[l] = delta * acts[l].transpose();
    grad.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = net.weights(l).transpose() * delta;
      delta = (acts[l].array() > 0.0).select(delta, 0.0);
    }
  }
  return loss;
}

}  // namespace

Dataset make_dataset(const QTable& table) { return collect(table, std::nullopt, 0); }

Dataset make_dataset(const QTable& table, std::size_t drop_dim, std::size_t keep_index) {
  if (drop_dim >= table.grid.dims() || keep_index >= table.grid.coords(drop_dim).size()) {
    throw InvalidArgument("make_dataset: dimension or index out of range");
  }
  return collect(table, drop_dim, keep_index);
}

double asymmetric_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& targets, double lambda) {
  if (pred.rows() != targets.rows() || pred.cols() != targets.cols()) {
    throw InvalidArgument("asymmetric_loss: shape mismatch");
  }
  const Eigen::MatrixXd w = loss_weights(pred, targets, lambda);
  return (w.array() * (pred - targets).array().square()).sum() / static_cast<double>(pred.size());
}

double loss_and_gradient(const Network& net, const Dataset& data, double lambda, Gradient& grad) {
  if (data.inputs.rows() != net.input_size() || data.targets.rows() != net.output_size() ||
      data.inputs.cols() != data.targets.cols()) {
    throw InvalidArgument("loss_and_gradient: dataset does not match the network");
  }
  return forward_backward(net, data.inputs, data.targets, lambda, grad);
}

FitReport evaluate_fit(const Network& net, const Dataset& data) {
  const Eigen::MatrixXd pred = evaluate_batch(net, data.inputs);
  FitReport report;
  std::size_t agree = 0;
  for (Eigen::Index j = 0; j < pred.cols(); ++j) {
    if (argmax_action(pred.col(j)) == argmax_action(data.targets.col(j))) ++agree;
  }
  report.accuracy = pred.cols() ? static_cast<double>(agree) / static_cast<double>(pred.cols()) : 0.0;
  report.mean_abs_error = pred.size() ? (pred - data.targets).cwiseAbs().mean() : 0.0;
  return report;
}

TrainResult train_network(const Dataset& data, std::span<const int> arch, const TrainConfig& cfg) {
  if (arch.size() < 2) throw InvalidArgument("train_network: architecture needs input and output sizes");
  if (arch.front() != data.inputs.rows() || arch.back() != data.targets.rows()) {
    throw InvalidArgument("train_network: architecture does not match the dataset");
  }
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lambda > 0.0) || !(cfg.learning_rate > 0.0)) {
    throw InvalidArgument("train_network: invalid training configuration");
  }
  const Eigen::Index n = data.inputs.cols();
  if (n == 0) throw InvalidArgument("train_network: empty dataset");

  // Train in normalized coordinates; one shared affine map for targets keeps the argmax.
  const Eigen::VectorXd mu = data.inputs.rowwise().mean();
  Eigen::VectorXd sigma = ((data.inputs.colwise() - mu).array().square().rowwise().mean()).sqrt();
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (!(sigma[i] > 0.0)) sigma[i] = 1.0;
  }
  const double t_mean = data.targets.mean();
  double t_scale = std::sqrt((data.targets.array() - t_mean).square().mean());
  if (!(t_scale > 0.0)) t_scale = 1.0;
  const Eigen::MatrixXd x = (data.inputs.colwise() - mu).array().colwise() / sigma.array();
  const Eigen::MatrixXd t = (data.targets.array() - t_mean) / t_scale;

  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  for (std::size_t l = 0; l + 1 < arch.size(); ++l) {
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / arch[l]));
    Eigen::MatrixXd w(arch[l + 1], arch[l]);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = init(rng);
    weights.push_back(std::move(w));
    biases.push_back(Eigen::VectorXd::Zero(arch[l + 1]));
  }
  Network net(std::move(weights), std::move(biases));

  const std::size_t layers = net.num_layers();
  std::vector<Eigen::MatrixXd> m_w(layers), v_w(layers);
  std::vector<Eigen::VectorXd> m_b(layers), v_b(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    m_w[l] = Eigen::MatrixXd::Zero(net.weights(l).rows(), net.weights(l).cols());
    v_w[l] = m_w[l];
    m_b[l] = Eigen::VectorXd::Zero(net.biases(l).size());
    v_b[l] = m_b[l];
  }

  TrainResult result;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Gradient grad;
  double lr = cfg.learning_rate;
  long long step = 0;
  const Eigen::Index batch = std::min<Eigen::Index>(cfg.batch_size, n);
  Eigen::MatrixXd bx(x.rows(), batch), bt(t.rows(), batch);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start + batch <= n; start += batch) {
      for (Eigen::Index j = 0; j < batch; ++j) {
        bx.col(j) = x.col(order[static_cast<std::size_t>(start + j)]);
        bt.col(j) = t.col(order[static_cast<std::size_t>(start + j)]);
      }
      const double loss = forward_backward(net, bx, bt, cfg.lambda, grad);
      if (!std::isfinite(loss)) throw TrainingFailure(epoch, "train_network: loss became non-finite");
      epoch_loss += loss;
      ++batches;
      ++step;
      for (std::size_t l = 0; l < layers; ++l) {
        if (cfg.optimizer == Optimizer::adamax) {
          const double correction = lr / (1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
          m_w[l] = cfg.beta1 * m_w[l] + (1.0 - cfg.beta1) * grad.weights[l];
          v_w[l] = (cfg.beta2 * v_w[l]).cwiseMax(grad.weights[l].cwiseAbs());
          net.weights(l).array() -= correction * m_w[l].array() / (v_w[l].array() + 1e-12);
          m_b[l] = cfg.beta1 * m_b[l] + (1.0 - cfg.beta1) * grad.biases[l];
          v_b[l] = (cfg.beta2 * v_b[l]).cwiseMax(grad.biases[l].cwiseAbs());
          net.biases(l).array() -= correction * m_b[l].array() / (v_b[l].array() + 1e-12);
        } else {
          m_w[l] = cfg.momentum * m_w[l] - lr * grad.weights[l];
          net.weights(l) += m_w[l];
          m_b[l] = cfg.momentum * m_b[l] - lr * grad.biases[l];
          net.biases(l) += m_b[l];
        }
      }
    }
    result.loss_history.push_back(epoch_loss / std::max(batches, 1));
    lr *= cfg.lr_decay;
  }

  // Fold the normalization into the first and last layers so the network takes raw units.
  net.weights(0) = net.weights(0).array().rowwise() / sigma.transpose().array();
  net.biases(0) -= net.weights(0) * mu;
  net.weights(layers - 1) *= t_scale;
  net.biases(layers - 1) = net.biases(layers - 1) * t_scale + Eigen::VectorXd::Constant(net.biases(layers - 1).size(), t_mean);
  if (!net.weights(0).allFinite() || !net.biases(layers - 1).allFinite()) {
    throw TrainingFailure(cfg.epochs, "train_network: non-finite parameters");
  }
  result.net = net;
  const FitReport fit = evaluate_fit(net, data);
  result.accuracy = fit.accuracy;
  result.mean_abs_error = fit.mean_abs_error;
  return result;
}

}  // namespace nnreach
