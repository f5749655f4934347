#pragma once

#include <Eigen/Dense>

#include <random>
#include <vector>

#include "nnreach/hyper_rect.hpp"
#include "nnreach/network.hpp"

namespace nnreach::testing {

/// Network with the given layer widths and weights drawn from N(0, scale^2).
inline Network random_network(std::mt19937_64& rng, const std::vector<int>& widths, double scale = 0.5) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    Eigen::MatrixXd m(widths[l], widths[l - 1]);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    Eigen::VectorXd v(widths[l]);
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = n(rng);
    w.push_back(std::move(m));
    b.push_back(std::move(v));
  }
  return Network(std::move(w), std::move(b));
}

/// Random box inside [-1, 1]^d with widths up to max_width.
inline HyperRect random_rect(std::mt19937_64& rng, int d, double max_width = 0.5) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd lo(d), hi(d);
  for (int i = 0; i < d; ++i) {
    const double w = max_width * u(rng);
    lo[i] = -1.0 + (2.0 - w) * u(rng);
    hi[i] = lo[i] + w;
  }
  return HyperRect(lo, hi);
}

inline Eigen::VectorXd sample_in(std::mt19937_64& rng, const HyperRect& box) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd x(box.dims());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = box.lo(i) + u(rng) * (box.hi(i) - box.lo(i));
  return x;
}

}  // namespace nnreach::testing
