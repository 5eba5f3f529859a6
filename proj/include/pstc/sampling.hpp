#pragma once

// Random points in and on ellipsoids and random test matrices.

#include <cmath>
#include <random>

#include "pstc/linalg.hpp"
#include "pstc/setcalc.hpp"

namespace pstc::sampling {

using Rng = std::mt19937_64;

inline Vec gaussian(Rng& rng, Index n) {
  std::normal_distribution<double> g;
  Vec v(n);
  for (Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

inline Vec on_sphere(Rng& rng, Index n) {
  Vec v = gaussian(rng, n);
  while (v.norm() == 0.0) v = gaussian(rng, n);
  return v / v.norm();
}

/// Uniform in the unit ball.
inline Vec in_ball(Rng& rng, Index n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return std::pow(u(rng), 1.0 / static_cast<double>(n)) * on_sphere(rng, n);
}

inline Vec in_ellipsoid(Rng& rng, const Ellipsoid& e) {
  return e.center() + linalg::psd_factor(e.shape()) * in_ball(rng, e.dim());
}

inline Vec on_ellipsoid(Rng& rng, const Ellipsoid& e) {
  return e.center() + linalg::psd_factor(e.shape()) * on_sphere(rng, e.dim());
}

/// Mixture used by the property suites: half interior, half boundary.
inline Vec in_or_on(Rng& rng, const Ellipsoid& e) {
  std::bernoulli_distribution coin(0.5);
  return coin(rng) ? on_ellipsoid(rng, e) : in_ellipsoid(rng, e);
}

/// Symmetric positive definite with eigenvalues log-uniform in [lo, hi].
inline Mat random_spd(Rng& rng, Index n, double lo = 1e-2, double hi = 1e1) {
  Eigen::HouseholderQR<Mat> qr(Mat::NullaryExpr(n, n, [&]() { return std::normal_distribution<double>()(rng); }));
  const Mat q = qr.householderQ();
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  Vec ev(n);
  for (Index i = 0; i < n; ++i) ev(i) = std::exp(u(rng));
  return linalg::symmetrize(q * ev.asDiagonal() * q.transpose());
}

inline Mat random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  return Mat::NullaryExpr(rows, cols, [&]() { return g(rng); });
}

}  // namespace pstc::sampling
