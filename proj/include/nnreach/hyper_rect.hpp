#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "nnreach/error.hpp"

namespace nnreach {

/// Closed axis-aligned box [lo, hi]. Zero-width dimensions are allowed.
template <typename Scalar>
class BasicHyperRect {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  BasicHyperRect() = default;

  BasicHyperRect(Vector lo, Vector hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.size() != hi_.size()) {
      throw InvalidArgument("HyperRect: lo and hi have different lengths");
    }
    for (Eigen::Index i = 0; i < lo_.size(); ++i) {
      if (!(lo_[i] <= hi_[i])) {
        throw InvalidArgument("HyperRect: lo > hi in dimension " + std::to_string(i));
      }
    }
  }

  /// Degenerate box holding a single point.
  static BasicHyperRect point(const Vector& x) { return BasicHyperRect(x, x); }

  Eigen::Index dims() const { return lo_.size(); }
  const Vector& lo() const { return lo_; }
  const Vector& hi() const { return hi_; }
  Scalar lo(Eigen::Index i) const { return lo_[i]; }
  Scalar hi(Eigen::Index i) const { return hi_[i]; }

  Vector widths() const { return hi_ - lo_; }
  Vector center() const { return lo_ + (hi_ - lo_) / Scalar(2); }

  Scalar volume() const { return widths().prod(); }

  template <typename Derived>
  bool contains(const Eigen::MatrixBase<Derived>& x) const {
    return (x.array() >= lo_.array()).all() && (x.array() <= hi_.array()).all();
  }

  bool contains(const BasicHyperRect& other) const {
    return (other.lo_.array() >= lo_.array()).all() && (other.hi_.array() <= hi_.array()).all();
  }

  /// Closed-set intersection test: touching faces count.
  bool intersects(const BasicHyperRect& other) const {
    return (lo_.array() <= other.hi_.array()).all() && (other.lo_.array() <= hi_.array()).all();
  }

  friend bool operator==(const BasicHyperRect& a, const BasicHyperRect& b) {
    return a.lo_.size() == b.lo_.size() && a.lo_ == b.lo_ && a.hi_ == b.hi_;
  }

 private:
  Vector lo_;
  Vector hi_;
};

using HyperRect = BasicHyperRect<double>;

/// Smallest box containing both arguments.
template <typename Scalar>
BasicHyperRect<Scalar> hull(const BasicHyperRect<Scalar>& a, const BasicHyperRect<Scalar>& b) {
  return BasicHyperRect<Scalar>(a.lo().cwiseMin(b.lo()), a.hi().cwiseMax(b.hi()));
}

/// Splits `box` at the midpoint of dimension `dim`; the two halves share the midpoint exactly.
template <typename Scalar>
std::pair<BasicHyperRect<Scalar>, BasicHyperRect<Scalar>> bisect(const BasicHyperRect<Scalar>& box,
                                                                 Eigen::Index dim) {
  const Scalar mid = box.lo(dim) + (box.hi(dim) - box.lo(dim)) / Scalar(2);
  auto left_hi = box.hi();
  auto right_lo = box.lo();
  left_hi[dim] = mid;
  right_lo[dim] = mid;
  return {BasicHyperRect<Scalar>(box.lo(), left_hi), BasicHyperRect<Scalar>(right_lo, box.hi())};
}

/// Dimension with the largest width measured in units of `scale` (lowest index on ties).
template <typename Scalar, typename Derived>
Eigen::Index widest_relative_dim(const BasicHyperRect<Scalar>& box,
                                 const Eigen::MatrixBase<Derived>& scale) {
  Eigen::Index best = 0;
  Scalar best_width = Scalar(-1);
  for (Eigen::Index i = 0; i < box.dims(); ++i) {
    const Scalar rel = scale[i] > Scalar(0) ? (box.hi(i) - box.lo(i)) / scale[i] : Scalar(0);
    if (rel > best_width) {
      best_width = rel;
      best = i;
    }
  }
  return best;
}

}  // namespace nnreach
