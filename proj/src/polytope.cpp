#include "nnreach/polytope.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nnreach {

Polytope Polytope::from_rect(const HyperRect& box) {
  Polytope p(box.dims());
  for (Eigen::Index i = 0; i < box.dims(); ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(box.dims());
    e[i] = 1.0;
    p.add(e, box.hi(i));
    p.add(-e, -box.lo(i));
  }
  return p;
}

Polytope& Polytope::add(Eigen::VectorXd normal, double offset) {
  if (normal.size() != dim_) {
    throw InvalidArgument("Polytope::add: normal has dimension " + std::to_string(normal.size()) +
                          ", expected " + std::to_string(dim_));
  }
  if (normal.isZero(0.0)) {
    throw InvalidArgument("Polytope::add: zero normal");
  }
  if (!normal.allFinite() || std::isnan(offset)) {
    throw InvalidArgument("Polytope::add: non-finite half-space");
  }
  halfspaces_.push_back({std::move(normal), offset});
  return *this;
}

bool Polytope::contains(const Eigen::VectorXd& x, double tol) const {
  return max_violation(x) <= tol;
}

double Polytope::max_violation(const Eigen::VectorXd& x) const {
  if (x.size() != dim_) {
    throw InvalidArgument("Polytope: point dimension mismatch");
  }
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& h : halfspaces_) {
    worst = std::max(worst, h.normal.dot(x) - h.offset);
  }
  return worst;
}

namespace {

// Signed distance-like value of a 2-D point against a half-space, with the slack folded in
// so that "inside" is simply value <= 0.
double side(const Halfspace& h, const Eigen::Vector2d& x) {
  const double ax = h.normal[0] * x[0] + h.normal[1] * x[1];
  const double scale = std::abs(h.offset) + std::abs(h.normal[0] * x[0]) + std::abs(h.normal[1] * x[1]);
  return ax - h.offset - kGeometryRelTol * scale;
}

void clip(std::vector<Eigen::Vector2d>& poly, const Halfspace& h, std::vector<Eigen::Vector2d>& scratch) {
  scratch.clear();
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& cur = poly[i];
    const Eigen::Vector2d& nxt = poly[(i + 1) % n];
    const double dc = side(h, cur);
    const double dn = side(h, nxt);
    if (dc <= 0.0) scratch.push_back(cur);
    if ((dc <= 0.0) != (dn <= 0.0)) {
      const double t = dc / (dc - dn);
      scratch.push_back(cur + t * (nxt - cur));
    }
  }
  poly.swap(scratch);
}

// Feasible interval of a 1-D polytope intersected with [lo, hi].
std::optional<std::pair<double, double>> clip_interval(const Polytope& region, double lo, double hi) {
  for (const auto& h : region.halfspaces()) {
    const double a = h.normal[0];
    const double bound = h.offset / a;
    const double slack = kGeometryRelTol * (std::abs(bound) + std::max(std::abs(lo), std::abs(hi)));
    if (a > 0) {
      hi = std::min(hi, bound + slack);
    } else {
      lo = std::max(lo, bound - slack);
    }
    if (lo > hi) return std::nullopt;
  }
  return std::make_pair(lo, hi);
}

}  // namespace

std::vector<Eigen::Vector2d> clip_to_box(const Polytope& region, const HyperRect& box) {
  if (region.dim() != 2 || box.dims() != 2) {
    throw InvalidArgument("clip_to_box: 2-D polytope and box required");
  }
  std::vector<Eigen::Vector2d> poly{{box.lo(0), box.lo(1)},
                                    {box.hi(0), box.lo(1)},
                                    {box.hi(0), box.hi(1)},
                                    {box.lo(0), box.hi(1)}};
  std::vector<Eigen::Vector2d> scratch;
  scratch.reserve(16);
  for (const auto& h : region.halfspaces()) {
    clip(poly, h, scratch);
    if (poly.empty()) break;
  }
  return poly;
}

bool intersects(const Polytope& region, const HyperRect& box) {
  if (region.dim() != box.dims()) {
    throw InvalidArgument("intersects: dimension mismatch");
  }
  if (region.dim() == 1) {
    return clip_interval(region, box.lo(0), box.hi(0)).has_value();
  }
  if (region.dim() == 2) {
    return !clip_to_box(region, box).empty();
  }
  // Separating half-space test only.
  for (const auto& h : region.halfspaces()) {
    double min_ax = 0.0;
    for (Eigen::Index i = 0; i < box.dims(); ++i) {
      min_ax += h.normal[i] * (h.normal[i] > 0 ? box.lo(i) : box.hi(i));
    }
    if (min_ax > h.offset + kGeometryRelTol * (std::abs(h.offset) + std::abs(min_ax))) return false;
  }
  return true;
}

std::optional<HyperRect> bounding_box(const Polytope& region, const HyperRect& within) {
  if (region.dim() != within.dims()) {
    throw InvalidArgument("bounding_box: dimension mismatch");
  }
  if (region.dim() == 1) {
    auto iv = clip_interval(region, within.lo(0), within.hi(0));
    if (!iv) return std::nullopt;
    Eigen::VectorXd lo(1), hi(1);
    lo << iv->first;
    hi << iv->second;
    return HyperRect(lo, hi);
  }
  if (region.dim() == 2) {
    const auto poly = clip_to_box(region, within);
    if (poly.empty()) return std::nullopt;
    Eigen::VectorXd lo = poly.front(), hi = poly.front();
    for (const auto& v : poly) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    // Clipped vertices can land a rounding error outside the box.
    lo = lo.cwiseMax(within.lo());
    hi = hi.cwiseMin(within.hi());
    hi = hi.cwiseMax(lo);
    return HyperRect(lo, hi);
  }
  if (!intersects(region, within)) return std::nullopt;
  return within;
}

}  // namespace nnreach
