#include "nnreach/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "nnreach/parallel.hpp"

namespace nnreach {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kFormSlack = 1e-12;

void check_input(const Network& net, const HyperRect& rect, const char* who) {
  if (rect.dims() != net.input_size()) {
    throw InvalidArgument(std::string(who) + ": rect has " + std::to_string(rect.dims()) + " dims, network expects " +
                          std::to_string(net.input_size()));
  }
}

// Interval image of W * [lo, hi] + b, widened by a floating-point rounding allowance.
void affine_interval(const Eigen::MatrixXd& w, const Eigen::VectorXd& b, const Eigen::VectorXd& lo,
                     const Eigen::VectorXd& hi, Eigen::VectorXd& out_lo, Eigen::VectorXd& out_hi) {
  const Eigen::MatrixXd wp = w.cwiseMax(0.0);
  const Eigen::MatrixXd wn = w.cwiseMin(0.0);
  out_lo = wp * lo + wn * hi + b;
  out_hi = wp * hi + wn * lo + b;
  const Eigen::VectorXd terms = w.cwiseAbs() * lo.cwiseAbs().cwiseMax(hi.cwiseAbs());
  const Eigen::VectorXd mag = (terms.array() > 0).select(terms + b.cwiseAbs(), 0.0);
  const double k = static_cast<double>(w.cols() + 2) * kEps;
  out_lo -= k * mag;
  out_hi += k * mag;
}

// Outward allowance for evaluating a form; a form with no live terms is its offset exactly.
Eigen::VectorXd form_slack(const Eigen::MatrixXd& c, const Eigen::VectorXd& off, const HyperRect& box) {
  const Eigen::VectorXd terms = c.cwiseAbs() * box.lo().cwiseAbs().cwiseMax(box.hi().cwiseAbs());
  return (terms.array() > 0).select(kFormSlack * (terms + off.cwiseAbs()), 0.0);
}

// Symbolic state of one layer: lower/upper affine forms in the input plus concrete bounds.
struct Layer {
  Eigen::MatrixXd lc, uc;
  Eigen::VectorXd lo_off, up_off;
  Eigen::VectorXd lo, hi;
};

Eigen::VectorXd form_max(const Eigen::MatrixXd& c, const Eigen::VectorXd& off, const HyperRect& box) {
  const Eigen::MatrixXd cp = c.cwiseMax(0.0);
  const Eigen::MatrixXd cn = c.cwiseMin(0.0);
  Eigen::VectorXd out = cp * box.hi() + cn * box.lo() + off;
  return out + form_slack(c, off, box);
}

Eigen::VectorXd form_min(const Eigen::MatrixXd& c, const Eigen::VectorXd& off, const HyperRect& box) {
  const Eigen::MatrixXd cp = c.cwiseMax(0.0);
  const Eigen::MatrixXd cn = c.cwiseMin(0.0);
  Eigen::VectorXd out = cp * box.lo() + cn * box.hi() + off;
  return out - form_slack(c, off, box);
}

Layer input_layer(const HyperRect& box) {
  const Eigen::Index d = box.dims();
  Layer s;
  s.lc = Eigen::MatrixXd::Identity(d, d);
  s.uc = s.lc;
  s.lo_off = Eigen::VectorXd::Zero(d);
  s.up_off = s.lo_off;
  s.lo = box.lo();
  s.hi = box.hi();
  return s;
}

// Pre-activation forms of the next layer.
Layer affine_step(const Layer& in, const Eigen::MatrixXd& w, const Eigen::VectorXd& b, const HyperRect& box) {
  const Eigen::MatrixXd wp = w.cwiseMax(0.0);
  const Eigen::MatrixXd wn = w.cwiseMin(0.0);
  Layer z;
  z.uc = wp * in.uc + wn * in.lc;
  z.up_off = wp * in.up_off + wn * in.lo_off + b;
  z.lc = wp * in.lc + wn * in.uc;
  z.lo_off = wp * in.lo_off + wn * in.up_off + b;

  Eigen::VectorXd ilo, ihi;
  affine_interval(w, b, in.lo, in.hi, ilo, ihi);
  z.lo = ilo.cwiseMax(form_min(z.lc, z.lo_off, box));
  z.hi = ihi.cwiseMin(form_max(z.uc, z.up_off, box));
  for (Eigen::Index i = 0; i < z.lo.size(); ++i) {
    if (z.lo[i] > z.hi[i]) z.lo[i] = z.hi[i];
  }
  return z;
}

void relu_step(Layer& z) {
  for (Eigen::Index i = 0; i < z.lo.size(); ++i) {
    const double l = z.lo[i];
    const double u = z.hi[i];
    if (u <= 0.0) {
      z.lc.row(i).setZero();
      z.uc.row(i).setZero();
      z.lo_off[i] = 0.0;
      z.up_off[i] = 0.0;
      z.lo[i] = 0.0;
      z.hi[i] = 0.0;
    } else if (l < 0.0) {
      const double slope = u / (u - l);
      z.uc.row(i) *= slope;
      z.up_off[i] = slope * (z.up_off[i] - l);
      z.lc.row(i) *= slope;
      z.lo_off[i] *= slope;
      z.lo[i] = 0.0;
    }
  }
}

// Forms of the last hidden layer's activations (the input itself for single-layer nets).
Layer penultimate(const Network& net, const HyperRect& box) {
  Layer s = input_layer(box);
  for (std::size_t l = 0; l + 1 < net.num_layers(); ++l) {
    s = affine_step(s, net.weights(l), net.biases(l), box);
    relu_step(s);
  }
  return s;
}

void penultimate_interval(const Network& net, const HyperRect& box, Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
  lo = box.lo();
  hi = box.hi();
  for (std::size_t l = 0; l + 1 < net.num_layers(); ++l) {
    Eigen::VectorXd nlo, nhi;
    affine_interval(net.weights(l), net.biases(l), lo, hi, nlo, nhi);
    lo = nlo.cwiseMax(0.0);
    hi = nhi.cwiseMax(0.0);
  }
}

// Per-piece pairwise bounds: ub(a, b) >= max over the piece of y_a - y_b.
class PairwiseBounds {
 public:
  PairwiseBounds(const Network& net, const HyperRect& box, BoundMethod method)
      : w_(net.weights(net.num_layers() - 1)), b_(net.biases(net.num_layers() - 1)), box_(box) {
    if (method == BoundMethod::symbolic) {
      layer_ = penultimate(net, box);
      lo_ = layer_.lo;
      hi_ = layer_.hi;
      symbolic_ = true;
    } else {
      penultimate_interval(net, box, lo_, hi_);
    }
  }

  double upper(std::size_t a, std::size_t b) const {
    const Eigen::RowVectorXd c = w_.row(static_cast<Eigen::Index>(a)) - w_.row(static_cast<Eigen::Index>(b));
    const double db = b_[static_cast<Eigen::Index>(a)] - b_[static_cast<Eigen::Index>(b)];
    const Eigen::RowVectorXd cp = c.cwiseMax(0.0);
    const Eigen::RowVectorXd cn = c.cwiseMin(0.0);
    const double mag = c.cwiseAbs().dot(lo_.cwiseAbs().cwiseMax(hi_.cwiseAbs())) + std::abs(db);
    double ub = cp.dot(hi_) + cn.dot(lo_) + db;
    if (symbolic_) {
      const Eigen::RowVectorXd coeffs = cp * layer_.uc + cn * layer_.lc;
      const double off = cp.dot(layer_.up_off) + cn.dot(layer_.lo_off) + db;
      ub = std::min(ub, affine_max(coeffs, off, box_));
    }
    return ub + 1e-10 + 1e-9 * mag;
  }

 private:
  const Eigen::MatrixXd& w_;
  const Eigen::VectorXd& b_;
  const HyperRect& box_;
  Layer layer_;
  Eigen::VectorXd lo_, hi_;
  bool symbolic_ = false;
};

bool excluded_on(const PairwiseBounds& bounds, std::size_t a, std::size_t n) {
  for (std::size_t b = 0; b < n; ++b) {
    if (b != a && bounds.upper(a, b) < 0.0) return true;
  }
  return false;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

double affine_min(const Eigen::Ref<const Eigen::RowVectorXd>& coeffs, double offset, const HyperRect& box) {
  double acc = offset;
  double mag = 0.0;
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) {
    acc += coeffs[i] * (coeffs[i] >= 0 ? box.lo(i) : box.hi(i));
    mag += std::abs(coeffs[i]) * std::max(std::abs(box.lo(i)), std::abs(box.hi(i)));
  }
  return mag > 0 ? acc - kFormSlack * (mag + std::abs(offset)) : acc;
}

double affine_max(const Eigen::Ref<const Eigen::RowVectorXd>& coeffs, double offset, const HyperRect& box) {
  double acc = offset;
  double mag = 0.0;
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) {
    acc += coeffs[i] * (coeffs[i] >= 0 ? box.hi(i) : box.lo(i));
    mag += std::abs(coeffs[i]) * std::max(std::abs(box.lo(i)), std::abs(box.hi(i)));
  }
  return mag > 0 ? acc + kFormSlack * (mag + std::abs(offset)) : acc;
}

OutputBounds interval_bounds(const Network& net, const HyperRect& rect) {
  check_input(net, rect, "interval_bounds");
  Eigen::VectorXd lo = rect.lo();
  Eigen::VectorXd hi = rect.hi();
  const std::size_t last = net.num_layers() - 1;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Eigen::VectorXd nlo, nhi;
    affine_interval(net.weights(l), net.biases(l), lo, hi, nlo, nhi);
    if (l != last) {
      nlo = nlo.cwiseMax(0.0);
      nhi = nhi.cwiseMax(0.0);
    }
    lo = std::move(nlo);
    hi = std::move(nhi);
  }
  return {lo, hi};
}

SymbolicBounds symbolic_bounds(const Network& net, const HyperRect& rect) {
  check_input(net, rect, "symbolic_bounds");
  Layer s = penultimate(net, rect);
  const std::size_t last = net.num_layers() - 1;
  Layer z = affine_step(s, net.weights(last), net.biases(last), rect);
  SymbolicBounds out{rect, {z.lc, z.lo_off, z.uc, z.up_off}, {z.lo, z.hi}};
  return out;
}

ActionSet action_set_verified(const Network& net, const HyperRect& cell, const VerifyOptions& options) {
  check_input(net, cell, "action_set_verified");
  const auto n = static_cast<std::size_t>(net.output_size());
  if (n > kMaxActions) throw InvalidArgument("action_set_verified: too many outputs");
  const Eigen::VectorXd scale = options.split_scale ? *options.split_scale : Eigen::VectorXd(cell.widths());
  if (scale.size() != cell.dims()) throw InvalidArgument("action_set_verified: split scale dimension mismatch");

  // Actions seen at the cell center are certainly possible.
  ActionSet result = ActionSet::single(argmax_action(evaluate(net, cell.center())));

  for (std::size_t a = 0; a < n; ++a) {
    if (result.contains(ActionId{a})) continue;
    int budget = options.budget;
    bool possible = false;
    std::vector<HyperRect> stack{cell};
    while (!stack.empty() && !possible) {
      HyperRect piece = std::move(stack.back());
      stack.pop_back();
      const PairwiseBounds bounds(net, piece, options.method);
      if (excluded_on(bounds, a, n)) continue;
      const ActionId at_center = argmax_action(evaluate(net, piece.center()));
      result.insert(at_center);
      if (at_center.index == a || budget <= 0) {
        possible = true;
        break;
      }
      const Eigen::Index dim = widest_relative_dim(piece, scale);
      if (!(piece.hi(dim) > piece.lo(dim))) {
        possible = true;
        break;
      }
      --budget;
      auto [left, right] = bisect(piece, dim);
      stack.push_back(std::move(right));
      stack.push_back(std::move(left));
    }
    if (possible) result.insert(ActionId{a});
  }
  return result;
}

ActionSet action_set_sampling(const Network& net, const HyperRect& cell, int n, std::uint64_t seed) {
  check_input(net, cell, "action_set_sampling");
  if (n < 1) throw InvalidArgument("action_set_sampling: n must be >= 1");
  const Eigen::Index d = cell.dims();
  ActionSet result;
  Eigen::VectorXd x(d);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << d); ++mask) {
    for (Eigen::Index i = 0; i < d; ++i) x[i] = ((mask >> i) & 1u) ? cell.hi(i) : cell.lo(i);
    result.insert(argmax_action(evaluate(net, x)));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < n; ++k) {
    for (Eigen::Index i = 0; i < d; ++i) x[i] = cell.lo(i) + unit(rng) * (cell.hi(i) - cell.lo(i));
    result.insert(argmax_action(evaluate(net, x)));
  }
  return result;
}

std::uint64_t cell_seed(std::uint64_t seed, std::size_t layer, CellId id) {
  return splitmix(splitmix(seed ^ (static_cast<std::uint64_t>(layer) << 32)) ^ id);
}

std::vector<std::size_t> layer_coordinates(const Grid& grid, std::size_t layer) {
  const auto& axes = grid.discrete_axes();
  std::vector<std::size_t> coords(axes.size());
  for (std::size_t k = axes.size(); k-- > 0;) {
    coords[k] = layer % axes[k].size();
    layer /= axes[k].size();
  }
  return coords;
}

std::size_t controller_model_index(const Grid& grid, std::size_t layer) {
  const auto coords = layer_coordinates(grid, layer);
  std::size_t index = 0;
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const auto& axis = grid.discrete_axes()[k];
    if (axis.selects_model) index = index * axis.size() + coords[k];
  }
  return index;
}

HyperRect controller_input_box(const Grid& grid, const HyperRect& cell, std::size_t layer) {
  const auto coords = layer_coordinates(grid, layer);
  std::vector<double> lo(cell.lo().data(), cell.lo().data() + cell.dims());
  std::vector<double> hi(cell.hi().data(), cell.hi().data() + cell.dims());
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const auto& axis = grid.discrete_axes()[k];
    if (axis.selects_model) continue;
    lo.push_back(axis.values[coords[k]]);
    hi.push_back(axis.values[coords[k]]);
  }
  return HyperRect(Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size())),
                   Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size())));
}

ActionMap approximate_controller(std::span<const Network> nets, const Grid& grid, const ApproxOptions& options,
                                 const ActionMap* reuse) {
  std::size_t models = 1;
  for (const auto& axis : grid.discrete_axes()) {
    if (axis.selects_model) models *= axis.size();
  }
  if (nets.size() != models) {
    throw InvalidArgument("approximate_controller: expected " + std::to_string(models) + " networks, got " +
                          std::to_string(nets.size()));
  }
  const std::size_t layers = grid.layer_count();
  ActionMap map(layers, grid.next_id());

  // Split scale: grid extent on continuous dims, unit on the degenerate discrete inputs.
  const Eigen::VectorXd extent = grid.bounds().widths();

  const std::size_t cells = grid.size();
  const std::size_t total = layers * cells;
  parallel_for(total, options.workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t layer = k / cells;
      const Cell& cell = grid.cells()[k % cells];
      if (reuse && !reuse->get(layer, cell.id).empty()) {
        map.set(layer, cell.id, reuse->get(layer, cell.id));
        continue;
      }
      const Network& net = nets[controller_model_index(grid, layer)];
      try {
        const HyperRect input = controller_input_box(grid, cell.box, layer);
        if (input.dims() != net.input_size()) {
          throw InvalidArgument("network input size " + std::to_string(net.input_size()) +
                                " does not match controller input " + std::to_string(input.dims()));
        }
        ActionSet actions;
        if (options.method == ApproxMethod::sampling) {
          actions = action_set_sampling(net, input, options.samples, cell_seed(options.seed, layer, cell.id));
        } else {
          VerifyOptions vo;
          vo.method = options.method == ApproxMethod::interval ? BoundMethod::interval : BoundMethod::symbolic;
          vo.budget = options.budget;
          Eigen::VectorXd scale = Eigen::VectorXd::Ones(input.dims());
          scale.head(extent.size()) = extent;
          vo.split_scale = scale;
          actions = action_set_verified(net, input, vo);
        }
        map.set(layer, cell.id, actions);
      } catch (const std::exception& e) {
        throw std::runtime_error("approximate_controller: cell " + std::to_string(cell.id) + " (layer " +
                                 std::to_string(layer) + "): " + e.what());
      }
    }
  });
  return map;
}

}  // namespace nnreach
