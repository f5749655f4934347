#include <algorithm>
#include <cmath>

#include "nnreach/mdp.hpp"
#include "nnreach/parallel.hpp"
#include "nnreach/verify.hpp"

namespace nnreach {

ActionSet tabular_action_set(const QTable& table, const HyperRect& box, std::span<const double> fixed) {
  const std::size_t free_dims = static_cast<std::size_t>(box.dims());
  if (free_dims + fixed.size() != table.grid.dims()) {
    throw InvalidArgument("tabular_action_set: box and fixed coordinates do not match the table dimensions");
  }
  const std::size_t na = table.num_actions();
  if (na > kMaxActions) throw InvalidArgument("tabular_action_set: too many actions");

  // Breakpoints: the box faces plus every grid line strictly inside. Between consecutive
  // breakpoints the interpolant is multilinear, so pairwise differences peak at vertices.
  std::vector<std::vector<double>> breaks(free_dims);
  for (std::size_t d = 0; d < free_dims; ++d) {
    const double lo = box.lo(static_cast<Eigen::Index>(d));
    const double hi = box.hi(static_cast<Eigen::Index>(d));
    breaks[d].push_back(lo);
    for (double c : table.grid.coords(d)) {
      if (c > lo && c < hi) breaks[d].push_back(c);
    }
    if (hi > lo) breaks[d].push_back(hi);
  }

  std::vector<std::size_t> node_stride(free_dims, 1);
  std::size_t nodes = 1;
  for (std::size_t d = free_dims; d-- > 0;) {
    node_stride[d] = nodes;
    nodes *= breaks[d].size();
  }
  Eigen::MatrixXd q(static_cast<Eigen::Index>(nodes), static_cast<Eigen::Index>(na));
  MdpPoint point{};
  for (std::size_t k = 0; k < fixed.size(); ++k) point[free_dims + k] = fixed[k];
  double scale = 0.0;
  for (std::size_t node = 0; node < nodes; ++node) {
    for (std::size_t d = 0; d < free_dims; ++d) point[d] = breaks[d][(node / node_stride[d]) % breaks[d].size()];
    q.row(static_cast<Eigen::Index>(node)) =
        interpolate_q(table, std::span<const double>(point.data(), table.grid.dims())).transpose();
    scale = std::max(scale, q.row(static_cast<Eigen::Index>(node)).cwiseAbs().maxCoeff());
  }
  const double margin = 1e-9 * (1.0 + scale);

  // Pieces are indexed by their lowest node; each has 2^free_dims vertices.
  std::vector<std::size_t> piece_counts(free_dims);
  std::size_t pieces = 1;
  for (std::size_t d = 0; d < free_dims; ++d) {
    piece_counts[d] = std::max<std::size_t>(1, breaks[d].size() - 1);
    pieces *= piece_counts[d];
  }
  std::vector<std::size_t> vertices;
  ActionSet result;
  for (std::size_t piece = 0; piece < pieces; ++piece) {
    std::size_t base = 0;
    std::size_t rest = piece;
    std::vector<bool> wide(free_dims);
    for (std::size_t d = free_dims; d-- > 0;) {
      const std::size_t i = rest % piece_counts[d];
      rest /= piece_counts[d];
      base += i * node_stride[d];
      wide[d] = breaks[d].size() > 1;
    }
    vertices.clear();
    for (std::size_t corner = 0; corner < (std::size_t{1} << free_dims); ++corner) {
      std::size_t v = base;
      bool valid = true;
      for (std::size_t d = 0; d < free_dims; ++d) {
        if ((corner >> d) & 1u) {
          if (!wide[d]) {
            valid = false;
            break;
          }
          v += node_stride[d];
        }
      }
      if (valid) vertices.push_back(v);
    }
    for (std::size_t a = 0; a < na; ++a) {
      if (result.contains(ActionId{a})) continue;
      bool excluded = false;
      for (std::size_t b = 0; b < na && !excluded; ++b) {
        if (b == a) continue;
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t v : vertices) {
          worst = std::max(worst, q(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(a)) -
                                      q(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(b)));
        }
        excluded = worst < -margin;
      }
      if (!excluded) result.insert(ActionId{a});
    }
  }
  return result;
}

ActionMap tabular_controller(const QTable& table, const Grid& grid, int workers) {
  const std::size_t layers = grid.layer_count();
  ActionMap map(layers, grid.next_id());
  const std::size_t cells = grid.size();
  parallel_for(layers * cells, workers, [&](std::size_t begin, std::size_t end) {
    std::vector<double> fixed;
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t layer = k / cells;
      const Cell& cell = grid.cells()[k % cells];
      const auto coords = layer_coordinates(grid, layer);
      fixed.clear();
      for (std::size_t i = 0; i < coords.size(); ++i) fixed.push_back(grid.discrete_axes()[i].values[coords[i]]);
      try {
        map.set(layer, cell.id, tabular_action_set(table, cell.box, fixed));
      } catch (const std::exception& e) {
        throw std::runtime_error("tabular_controller: cell " + std::to_string(cell.id) + ": " + e.what());
      }
    }
  });
  return map;
}

}  // namespace nnreach
