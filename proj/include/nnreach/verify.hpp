#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>

#include "nnreach/action_set.hpp"
#include "nnreach/grid.hpp"
#include "nnreach/hyper_rect.hpp"
#include "nnreach/network.hpp"

namespace nnreach {

/// Per-output closed intervals.
struct OutputBounds {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  bool contains(const Eigen::VectorXd& y) const {
    return (y.array() >= lo.array()).all() && (y.array() <= hi.array()).all();
  }
};

/// Affine envelopes lower(x) <= y(x) <= upper(x) valid for x in `domain`, one row per neuron.
struct AffineEnvelope {
  Eigen::MatrixXd lower_coeffs;
  Eigen::VectorXd lower_offsets;
  Eigen::MatrixXd upper_coeffs;
  Eigen::VectorXd upper_offsets;
};

struct SymbolicBounds {
  HyperRect domain;
  AffineEnvelope outputs;
  /// Envelope extremes over the domain, intersected with the interval pass carried alongside.
  OutputBounds concrete;

  const OutputBounds& concretize() const { return concrete; }
};

/// min / max of c . x + offset over a box.
double affine_min(const Eigen::Ref<const Eigen::RowVectorXd>& coeffs, double offset, const HyperRect& box);
double affine_max(const Eigen::Ref<const Eigen::RowVectorXd>& coeffs, double offset, const HyperRect& box);

/// Layer-by-layer interval arithmetic.
OutputBounds interval_bounds(const Network& net, const HyperRect& rect);

/// Symbolic interval propagation: affine envelopes through every ReLU with linear
/// relaxations of unstable neurons.
SymbolicBounds symbolic_bounds(const Network& net, const HyperRect& rect);

enum class BoundMethod { interval, symbolic };

struct VerifyOptions {
  BoundMethod method = BoundMethod::symbolic;
  /// Maximum bisections spent per candidate action.
  int budget = 12;
  /// Widths are measured in these units when choosing a split dimension (defaults to the
  /// cell's own widths). Pass the grid extent to make splits agree with refine_cell.
  std::optional<Eigen::VectorXd> split_scale;
};

/// Sound over-approximation of { argmax f(x) : x in cell }.
ActionSet action_set_verified(const Network& net, const HyperRect& cell, const VerifyOptions& options = {});

/// Argmax at the 2^d cell corners plus n uniform samples. Under-approximation; not sound.
ActionSet action_set_sampling(const Network& net, const HyperRect& cell, int n, std::uint64_t seed);

enum class ApproxMethod { sampling, interval, symbolic };

struct ApproxOptions {
  ApproxMethod method = ApproxMethod::symbolic;
  int budget = 12;
  int samples = 100;
  std::uint64_t seed = 0;
  int workers = 1;
};

/// Decomposes a layer index into one index per discrete axis.
std::vector<std::size_t> layer_coordinates(const Grid& grid, std::size_t layer);

/// Network input box for a cell on a layer: the continuous box followed by the values of
/// the discrete axes that are not model selectors.
HyperRect controller_input_box(const Grid& grid, const HyperRect& cell, std::size_t layer);

/// Which network serves a layer (product index over model-selector axes).
std::size_t controller_model_index(const Grid& grid, std::size_t layer);

/// One ActionSet per (layer, cell). `nets` holds one network per combination of
/// model-selector axes (a single network when there are none). Only cells whose entry is
/// still empty in `reuse` are computed when it is supplied.
ActionMap approximate_controller(std::span<const Network> nets, const Grid& grid, const ApproxOptions& options,
                                 const ActionMap* reuse = nullptr);

/// Deterministic per-cell seed.
std::uint64_t cell_seed(std::uint64_t seed, std::size_t layer, CellId id);

}  // namespace nnreach
