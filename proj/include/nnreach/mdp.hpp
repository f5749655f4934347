#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nnreach/action_set.hpp"
#include "nnreach/dynamics.hpp"
#include "nnreach/grid.hpp"
#include "nnreach/network.hpp"

namespace nnreach {

inline constexpr std::size_t kMaxMdpDims = 4;
using MdpPoint = std::array<double, kMaxMdpDims>;

/// Tensor grid of value-iteration points, one sorted coordinate list per dimension.
/// Flat indices are row-major with the last dimension fastest.
class StateGrid {
 public:
  StateGrid() = default;
  explicit StateGrid(std::vector<std::vector<double>> coords);

  std::size_t dims() const { return coords_.size(); }
  std::size_t size() const { return size_; }
  const std::vector<double>& coords(std::size_t d) const { return coords_[d]; }
  const std::vector<std::vector<double>>& all_coords() const { return coords_; }
  std::size_t stride(std::size_t d) const { return strides_[d]; }

  MdpPoint point(std::size_t index) const;
  std::size_t flat(std::span<const std::size_t> multi) const;

 private:
  std::vector<std::vector<double>> coords_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

/// Multilinear interpolation weights at `s` (clamped to the grid), zero weights omitted.
void interpolation_weights(const StateGrid& grid, std::span<const double> s,
                           std::vector<std::pair<std::uint32_t, double>>& out);

struct Successor {
  MdpPoint state{};
  double prob = 0.0;
};

/// Finite-horizon MDP with discount 1. An empty successor list marks a terminal state,
/// whose Q-values are just the reward.
struct MdpSpec {
  std::string name;
  StateGrid grid;
  std::size_t num_actions = 0;
  std::function<double(const MdpPoint& s, std::size_t a)> reward;
  std::function<void(const MdpPoint& s, std::size_t a, std::vector<Successor>& out)> kernel;
};

/// Q-values, one row per grid point and one column per action.
struct QTable {
  StateGrid grid;
  Eigen::MatrixXd values;

  std::size_t num_actions() const { return static_cast<std::size_t>(values.cols()); }
};

struct ValueIterationResult {
  QTable table;
  int sweeps = 0;
  double residual = 0.0;
  bool converged = false;
  /// Set when the residual grew by more than 1e-9 between sweeps after first dropping.
  bool residual_increased = false;
};

/// Jacobi sweeps of Q(s,a) = r(s,a) + sum_s' T(s,a,s') max_a' Q(s',a') with interpolated
/// successor values until the max-norm change drops below `tol`.
ValueIterationResult value_iteration(const MdpSpec& spec, double tol, int max_iters, int workers = 1);

Eigen::VectorXd interpolate_q(const QTable& table, std::span<const double> s);
ActionId greedy_action(const QTable& table, std::span<const double> s);

/// 100 x 100 grid over (p, v), controls {-1, 0, +1}, three equally likely disturbances
/// {-0.5, 0, 0.5}, reward -1 until the goal.
MdpSpec mountain_car_spec(const McConfig& cfg = {}, int points_per_dim = 100);

/// Penalty magnitudes (rewards are their negatives).
struct VcRewardParams {
  double nmac = 1.0;
  double alert = 0.01;
  double reversal = 0.02;
  double strengthen = 0.01;
  double weak_to_strong = 0.02;
  /// Half-width (ft) of the altitude band penalized at tau = 0. Widening it past the NMAC
  /// threshold buys the synthesized policy a separation margin.
  double penalty_band = 100.0;
};

double vcas_reward(Advisory previous, Advisory issued, double h, int tau, const VcRewardParams& params);

/// Coordinates of the VerticalCAS value-iteration grid.
struct VcMdpGrid {
  std::vector<double> h;
  std::vector<double> hdot0;
  int tau_max = 40;

  static VcMdpGrid standard();
};

/// States (h, hdot0, tau, previous advisory); actions are the nine advisories. The pilot flies
/// the previous advisory this step using the min, mid and max of its acceleration interval.
MdpSpec verticalcas_spec(const VcRewardParams& params, const VcConfig& dyn = {},
                         const VcMdpGrid& grid = VcMdpGrid::standard());

/// Text form: `dims=`, `actions=`, one `coords<d>=` line per dimension, then `i j ... : q...`.
void save_qtable(std::ostream& out, const QTable& table);
QTable load_qtable(std::istream& in);

// ---------------------------------------------------------------------------
// Tabular controllers
// ---------------------------------------------------------------------------

/// Actions that are the interpolated-Q argmax somewhere in `box`. `fixed` supplies values for
/// the trailing table dimensions not covered by the box (e.g. tau and advisory).
ActionSet tabular_action_set(const QTable& table, const HyperRect& box, std::span<const double> fixed = {});

/// Per-cell action sets for a grid. Layers map to the discrete axis values, which are passed
/// as trailing fixed coordinates.
ActionMap tabular_controller(const QTable& table, const Grid& grid, int workers = 1);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class Optimizer { adamax, momentum };

struct TrainConfig {
  int epochs = 1000;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double lr_decay = 1.0;  // multiplier applied after every epoch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double momentum = 0.9;
  double lambda = 4.0;  // asymmetric-loss multiplier
  Optimizer optimizer = Optimizer::adamax;
  std::uint64_t seed = 0;
};

/// Inputs one per column, targets one per column.
struct Dataset {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
};

/// All grid points of the table. When `drop_dim` is given, only points whose coordinate in that
/// dimension equals coords(drop_dim)[keep_index] are used, and the dimension is removed.
Dataset make_dataset(const QTable& table);
Dataset make_dataset(const QTable& table, std::size_t drop_dim, std::size_t keep_index);

/// Mean over entries of w * (pred - target)^2, with w = lambda where the optimal action is
/// under-valued or a suboptimal action is over-valued, else 1.
double asymmetric_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& targets, double lambda);

struct Gradient {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

double loss_and_gradient(const Network& net, const Dataset& data, double lambda, Gradient& grad);

struct TrainResult {
  Network net;
  double accuracy = 0.0;  // argmax agreement with the table
  double mean_abs_error = 0.0;
  std::vector<double> loss_history;
};

/// `arch` lists every layer width including input and output.
TrainResult train_network(const Dataset& data, std::span<const int> arch, const TrainConfig& cfg);

struct FitReport {
  double accuracy = 0.0;
  double mean_abs_error = 0.0;
};
FitReport evaluate_fit(const Network& net, const Dataset& data);

}  // namespace nnreach
