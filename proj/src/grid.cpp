#include "nnreach/grid.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "nnreach/text.hpp"

namespace nnreach {

namespace {

constexpr std::uint32_t kLeafSize = 8;

}  // namespace

Grid::Grid(HyperRect bounds, std::vector<Cell> cells, std::vector<DiscreteAxis> discrete, CellId next_id)
    : bounds_(std::move(bounds)), cells_(std::move(cells)), discrete_(std::move(discrete)), next_id_(next_id) {
  if (bounds_.dims() == 0) throw InvalidArgument("Grid: zero-dimensional bounds");
  if (cells_.empty()) throw InvalidArgument("Grid: no cells");
  for (const auto& axis : discrete_) {
    if (axis.values.empty()) throw InvalidArgument("Grid: discrete axis '" + axis.name + "' is empty");
  }
  std::sort(cells_.begin(), cells_.end(), [](const Cell& a, const Cell& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < cells_.size(); ++i) {
    if (cells_[i].id == cells_[i - 1].id) {
      throw InvalidArgument("Grid: duplicate cell id " + std::to_string(cells_[i].id));
    }
  }
  next_id_ = std::max<CellId>(next_id_, cells_.back().id + 1);

  double volume = 0.0;
  for (const auto& c : cells_) {
    if (c.box.dims() != bounds_.dims()) throw InvalidArgument("Grid: cell dimension mismatch");
    if (!bounds_.contains(c.box)) {
      throw InvalidArgument("Grid: cell " + std::to_string(c.id) + " lies outside the bounds");
    }
    volume += c.box.volume();
  }
  const double expected = bounds_.volume();
  if (std::abs(volume - expected) > 1e-9 * std::max(expected, 1e-300)) {
    throw InvalidArgument("Grid: cell volumes do not add up to the bounds volume");
  }

  slot_.assign(next_id_, kNoSlot);
  for (std::size_t i = 0; i < cells_.size(); ++i) slot_[cells_[i].id] = static_cast<std::uint32_t>(i);
  build_index();
}

std::size_t Grid::layer_count() const {
  std::size_t n = 1;
  for (const auto& axis : discrete_) n *= axis.size();
  return n;
}

const HyperRect& Grid::box(CellId id) const { return cells_[index_of(id)].box; }

std::size_t Grid::index_of(CellId id) const {
  if (!contains(id)) throw NotFound("Grid: unknown cell id " + std::to_string(id));
  return slot_[id];
}

void Grid::build_index() {
  nodes_.clear();
  order_.resize(cells_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * cells_.size() / kLeafSize + 2);
  build_node(0, static_cast<std::uint32_t>(cells_.size()));
}

std::uint32_t Grid::build_node(std::uint32_t begin, std::uint32_t end) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({});
  HyperRect box = cells_[order_[begin]].box;
  Eigen::VectorXd clo = box.center(), chi = clo;
  for (std::uint32_t k = begin + 1; k < end; ++k) {
    const auto& b = cells_[order_[k]].box;
    box = hull(box, b);
    const Eigen::VectorXd c = b.center();
    clo = clo.cwiseMin(c);
    chi = chi.cwiseMax(c);
  }
  nodes_[index].box = box;
  nodes_[index].begin = begin;
  nodes_[index].end = end;
  if (end - begin <= kLeafSize) return index;

  const Eigen::VectorXd spread = (chi - clo).cwiseQuotient(bounds_.widths().cwiseMax(1e-300));
  Eigen::Index axis = 0;
  spread.maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double ca = cells_[a].box.lo(axis) + cells_[a].box.hi(axis);
                     const double cb = cells_[b].box.lo(axis) + cells_[b].box.hi(axis);
                     return ca < cb || (ca == cb && a < b);
                   });
  const std::uint32_t left = build_node(begin, mid);
  const std::uint32_t right = build_node(mid, end);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

Grid build_uniform_grid(const HyperRect& bounds, std::span<const int> counts, std::vector<DiscreteAxis> discrete) {
  const auto d = bounds.dims();
  if (static_cast<Eigen::Index>(counts.size()) != d) {
    throw InvalidArgument("build_uniform_grid: need one count per dimension");
  }
  std::size_t total = 1;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (counts[i] < 1) throw InvalidArgument("build_uniform_grid: count must be >= 1");
    if (!(bounds.lo(i) < bounds.hi(i))) throw InvalidArgument("build_uniform_grid: degenerate or inverted bounds");
    total *= static_cast<std::size_t>(counts[i]);
  }
  // Shared boundaries are computed once so neighbouring cells agree bit for bit.
  std::vector<std::vector<double>> edges(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const int n = counts[i];
    edges[i].resize(n + 1);
    for (int k = 0; k <= n; ++k) {
      edges[i][k] = bounds.lo(i) + (bounds.hi(i) - bounds.lo(i)) * k / n;
    }
    edges[i][n] = bounds.hi(i);
  }
  std::vector<Cell> cells;
  cells.reserve(total);
  std::vector<int> idx(d, 0);
  Eigen::VectorXd lo(d), hi(d);
  for (std::size_t c = 0; c < total; ++c) {
    for (Eigen::Index i = 0; i < d; ++i) {
      lo[i] = edges[i][idx[i]];
      hi[i] = edges[i][idx[i] + 1];
    }
    cells.push_back({static_cast<CellId>(c), HyperRect(lo, hi)});
    // Row-major: the last dimension varies fastest.
    for (Eigen::Index i = d - 1; i >= 0; --i) {
      if (++idx[i] < counts[i]) break;
      idx[i] = 0;
    }
  }
  return Grid(bounds, std::move(cells), std::move(discrete));
}

Eigen::Index refinement_dim(const Grid& grid, const HyperRect& cell) {
  return widest_relative_dim(cell, grid.bounds().widths());
}

Grid refine_cells(const Grid& grid, std::span<const CellId> ids) {
  std::vector<CellId> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  const Eigen::VectorXd extent = grid.bounds().widths();
  std::vector<char> retired(grid.size(), 0);
  std::vector<Cell> children;
  children.reserve(2 * sorted.size());
  CellId next = grid.next_id();
  for (CellId id : sorted) {
    const std::size_t idx = grid.index_of(id);
    const HyperRect& box = grid.cells()[idx].box;
    const Eigen::Index dim = refinement_dim(grid, box);
    if ((box.hi(dim) - box.lo(dim)) / 2 < kRefinementFloor * extent[dim]) {
      throw RefinementFloor("refine_cell: cell " + std::to_string(id) + " is at the minimum width");
    }
    auto [left, right] = bisect(box, dim);
    retired[idx] = 1;
    children.push_back({next++, std::move(left)});
    children.push_back({next++, std::move(right)});
  }
  std::vector<Cell> cells;
  cells.reserve(grid.size() + sorted.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!retired[i]) cells.push_back(grid.cells()[i]);
  }
  for (auto& c : children) cells.push_back(std::move(c));
  return Grid(grid.bounds(), std::move(cells), grid.discrete_axes(), next);
}

Grid refine_cell(const Grid& grid, CellId id) {
  const CellId ids[] = {id};
  return refine_cells(grid, ids);
}

CellId locate(const Grid& grid, const Eigen::VectorXd& point) {
  if (point.size() != grid.dims()) throw InvalidArgument("locate: dimension mismatch");
  if (!grid.bounds().contains(point)) throw OutOfBounds("locate: point outside grid bounds");
  const auto& top = grid.bounds().hi();
  const HyperRect probe = HyperRect::point(point);
  CellId found = 0;
  bool hit = false;
  grid.for_each_overlapping(probe, [&](std::uint32_t idx) {
    if (hit) return;
    const auto& box = grid.cells()[idx].box;
    for (Eigen::Index i = 0; i < point.size(); ++i) {
      const bool inside = point[i] < box.hi(i) || (point[i] == box.hi(i) && box.hi(i) == top[i]);
      if (!inside) return;
    }
    found = grid.cells()[idx].id;
    hit = true;
  });
  if (!hit) throw OutOfBounds("locate: no cell contains the point");
  return found;
}

std::vector<CellId> cells_intersecting(const Grid& grid, const Polytope& region) {
  if (region.dim() != grid.dims()) throw InvalidArgument("cells_intersecting: dimension mismatch");
  std::vector<CellId> out;
  auto bbox = bounding_box(region, grid.bounds());
  if (!bbox) return out;
  const Eigen::VectorXd pad = 1e-10 * grid.bounds().widths();
  const HyperRect query(bbox->lo() - pad, bbox->hi() + pad);
  grid.for_each_overlapping(query, [&](std::uint32_t idx) {
    if (intersects(region, grid.cells()[idx].box)) out.push_back(grid.cells()[idx].id);
  });
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<CellId> cells_intersecting(const Grid& grid, const HyperRect& region) {
  if (region.dims() != grid.dims()) throw InvalidArgument("cells_intersecting: dimension mismatch");
  std::vector<CellId> out;
  grid.for_each_overlapping(region, [&](std::uint32_t idx) { out.push_back(grid.cells()[idx].id); });
  std::sort(out.begin(), out.end());
  return out;
}

void write_grid(std::ostream& out, const Grid& grid) {
  const auto& b = grid.bounds();
  out << "dims=" << grid.dims() << '\n';
  out << "bounds=" << join_doubles(b.lo()) << '/' << join_doubles(b.hi()) << '\n';
  for (const auto& axis : grid.discrete_axes()) {
    out << "axis=" << axis.name << ':' << join_doubles(axis.values) << (axis.selects_model ? ":model" : "") << '\n';
  }
  for (const auto& c : grid.cells()) {
    out << c.id;
    for (double v : c.box.lo()) out << ' ' << format_double(v);
    for (double v : c.box.hi()) out << ' ' << format_double(v);
    out << '\n';
  }
}

Grid read_grid(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  long long dims = -1;
  std::optional<HyperRect> bounds;
  std::vector<Cell> cells;
  std::vector<DiscreteAxis> axes;
  auto parse_list = [&](std::string_view text) {
    auto parts = split(text, ',');
    if (static_cast<long long>(parts.size()) != dims) throw ParseError(lineno, "bounds have the wrong length");
    Eigen::VectorXd v(dims);
    for (long long i = 0; i < dims; ++i) v[i] = parse_double(parts[i]);
    return v;
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    try {
      if (view.starts_with("dims=")) {
        dims = parse_int(view.substr(5));
        if (dims < 1) throw ParseError(lineno, "dims must be positive");
      } else if (view.starts_with("bounds=")) {
        if (dims < 1) throw ParseError(lineno, "bounds before dims");
        auto body = view.substr(7);
        const auto slash = body.find('/');
        if (slash == std::string_view::npos) throw ParseError(lineno, "bounds need lo/hi");
        bounds = HyperRect(parse_list(body.substr(0, slash)), parse_list(body.substr(slash + 1)));
      } else if (view.starts_with("axis=")) {
        const auto parts = split(view.substr(5), ':');
        if (parts.size() < 2 || parts.size() > 3 || parts[0].empty()) throw ParseError(lineno, "axis needs name:values[:model]");
        if (parts.size() == 3 && parts[2] != "model") throw ParseError(lineno, "unknown axis flag");
        DiscreteAxis axis{std::string(parts[0]), {}, parts.size() == 3};
        for (auto tok : split(parts[1], ',')) axis.values.push_back(parse_double(tok));
        axes.push_back(std::move(axis));
      } else {
        if (!bounds) throw ParseError(lineno, "cell line before header");
        auto parts = split(view, ' ');
        std::erase_if(parts, [](std::string_view p) { return p.empty(); });
        if (static_cast<long long>(parts.size()) != 1 + 2 * dims) throw ParseError(lineno, "cell line has wrong field count");
        const auto id = parse_int(parts[0]);
        if (id < 0 || id > 0xfffffffell) throw ParseError(lineno, "cell id out of range");
        Eigen::VectorXd lo(dims), hi(dims);
        for (long long i = 0; i < dims; ++i) {
          lo[i] = parse_double(parts[1 + i]);
          hi[i] = parse_double(parts[1 + dims + i]);
        }
        cells.push_back({static_cast<CellId>(id), HyperRect(lo, hi)});
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  if (!bounds) throw ParseError(lineno, "missing header");
  try {
    return Grid(*bounds, std::move(cells), std::move(axes));
  } catch (const InvalidArgument& e) {
    throw ParseError(lineno, e.what());
  }
}

}  // namespace nnreach
