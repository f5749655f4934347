#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nnreach/hyper_rect.hpp"
#include "nnreach/polytope.hpp"

namespace nnreach {

using CellId = std::uint32_t;

struct Cell {
  CellId id;
  HyperRect box;
};

/// A categorical axis that is never refined. `values` are the coordinates fed to a controller
/// (e.g. tau in seconds); when `selects_model` is set the index picks which network to run
/// instead of being fed as an input.
struct DiscreteAxis {
  std::string name;
  std::vector<double> values;
  bool selects_model = false;

  std::size_t size() const { return values.size(); }
};

/// Minimum cell width as a fraction of the full extent of its dimension.
inline constexpr double kRefinementFloor = 1.0 / (1 << 20);

/// Adaptive partition of a box into hyper-rectangular cells.
///
/// Immutable: refinement returns a new Grid. Cells are kept sorted by id; ids of split cells
/// are retired and never reused. Point location uses half-open boxes [lo, hi) with the global
/// upper face closed; region queries use closed boxes.
class Grid {
 public:
  Grid(HyperRect bounds, std::vector<Cell> cells, std::vector<DiscreteAxis> discrete = {},
       CellId next_id = 0);

  const HyperRect& bounds() const { return bounds_; }
  Eigen::Index dims() const { return bounds_.dims(); }
  std::span<const Cell> cells() const { return cells_; }
  std::size_t size() const { return cells_.size(); }

  const std::vector<DiscreteAxis>& discrete_axes() const { return discrete_; }
  /// Product of discrete axis cardinalities (1 when there are none).
  std::size_t layer_count() const;

  bool contains(CellId id) const { return id < slot_.size() && slot_[id] != kNoSlot; }
  /// Throws NotFound for retired or unknown ids.
  const HyperRect& box(CellId id) const;
  std::size_t index_of(CellId id) const;
  /// One past the largest id ever issued.
  CellId next_id() const { return next_id_; }

  /// Visits the index of every cell whose closed box meets the closed query box.
  template <typename Fn>
  void for_each_overlapping(const HyperRect& query, Fn&& fn) const;

 private:
  static constexpr std::uint32_t kNoSlot = 0xffffffffu;

  struct Node {
    HyperRect box;
    std::uint32_t begin = 0;  // range into order_ for leaves
    std::uint32_t end = 0;
    std::uint32_t left = 0;  // child indices; 0 means leaf
    std::uint32_t right = 0;
  };

  void build_index();
  std::uint32_t build_node(std::uint32_t begin, std::uint32_t end);

  HyperRect bounds_;
  std::vector<Cell> cells_;
  std::vector<DiscreteAxis> discrete_;
  std::vector<std::uint32_t> slot_;
  CellId next_id_ = 0;

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
};

template <typename Fn>
void Grid::for_each_overlapping(const HyperRect& query, Fn&& fn) const {
  if (nodes_.empty()) return;
  std::uint32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (!node.box.intersects(query)) continue;
    if (node.left == 0) {
      for (std::uint32_t k = node.begin; k < node.end; ++k) {
        const std::uint32_t idx = order_[k];
        if (cells_[idx].box.intersects(query)) fn(idx);
      }
    } else {
      stack[top++] = node.right;
      stack[top++] = node.left;
    }
  }
}

/// Uniform partition with counts[i] equal-width cells along dimension i.
Grid build_uniform_grid(const HyperRect& bounds, std::span<const int> counts,
                        std::vector<DiscreteAxis> discrete = {});

/// Splits one cell at the midpoint of its widest dimension (width relative to the full
/// extent). Throws NotFound or RefinementFloor.
Grid refine_cell(const Grid& grid, CellId id);

/// Same result as calling refine_cell for each id in increasing id order.
Grid refine_cells(const Grid& grid, std::span<const CellId> ids);

/// Dimension refine_cell splits along.
Eigen::Index refinement_dim(const Grid& grid, const HyperRect& cell);

/// Unique cell holding `point` under the half-open convention. Throws OutOfBounds.
CellId locate(const Grid& grid, const Eigen::VectorXd& point);

/// Cells whose closed box meets the closed feasible region, sorted by id.
std::vector<CellId> cells_intersecting(const Grid& grid, const Polytope& region);
std::vector<CellId> cells_intersecting(const Grid& grid, const HyperRect& region);

/// Text form: `dims=<k>`, `bounds=<lo...>/<hi...>`, optional `axis=<name>:<values>[:model]`
/// lines, then `id lo... hi...` per cell. `#` lines are comments.
void write_grid(std::ostream& out, const Grid& grid);
Grid read_grid(std::istream& in);

}  // namespace nnreach
