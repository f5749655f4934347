#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

#include "nnreach/hyper_rect.hpp"

namespace nnreach {

/// a . x <= b
struct Halfspace {
  Eigen::VectorXd normal;
  double offset = 0.0;
};

/// Intersection of closed half-spaces. May be empty; emptiness is a query, not an invariant.
class Polytope {
 public:
  explicit Polytope(Eigen::Index dim) : dim_(dim) {}

  static Polytope from_rect(const HyperRect& box);

  /// Throws InvalidArgument on a zero normal or a dimension mismatch.
  Polytope& add(Eigen::VectorXd normal, double offset);

  Eigen::Index dim() const { return dim_; }
  std::span<const Halfspace> halfspaces() const { return halfspaces_; }
  std::size_t size() const { return halfspaces_.size(); }

  /// Membership with an absolute slack `tol` on every constraint.
  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;

  /// Largest constraint violation a.x - b over all half-spaces (<= 0 means inside).
  double max_violation(const Eigen::VectorXd& x) const;

 private:
  Eigen::Index dim_;
  std::vector<Halfspace> halfspaces_;
};

/// Relative tolerance used by the geometric predicates. Decisions near a face are
/// resolved toward "intersects", which keeps reachability conservative.
inline constexpr double kGeometryRelTol = 1e-12;

/// Vertices of the convex polygon P ∩ box (2-D only). Empty when the intersection is empty;
/// degenerate intersections come back as repeated or collinear vertices.
std::vector<Eigen::Vector2d> clip_to_box(const Polytope& region, const HyperRect& box);

/// Closed intersection test. Exact (up to kGeometryRelTol) for dimension 1 and 2; in higher
/// dimensions it only checks each half-space separately and may report false positives.
bool intersects(const Polytope& region, const HyperRect& box);

/// Bounding box of P ∩ within, or nullopt when that set is empty. Dimensions above 2 fall
/// back to `within`.
std::optional<HyperRect> bounding_box(const Polytope& region, const HyperRect& within);

}  // namespace nnreach
