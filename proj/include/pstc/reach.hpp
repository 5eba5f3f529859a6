#pragma once

/**
 * @file reach.hpp
 * @brief Outer ellipsoidal approximations of the disturbance reach sets
 *        X_w(t) = { int_0^t exp(Ap (t - s)) E w(s) ds : w(s) in E(0, Wbar) }.
 *
 * Each direction l yields an external ellipsoid tight along l at the final
 * time, obtained by integrating the external-approximation shape equation
 *
 *     dQ/dt = Ap Q + Q Ap' + pi Q + G / pi,   G = E Wbar E',
 *     pi(t) = sqrt(l(t)' G l(t)) / sqrt(l(t)' Q l(t)),
 *     l(t)  = exp(Ap' (t_end - t)) l,
 *
 * which is an outer approximation for any positive pi(t). The per-direction
 * ellipsoids are then intersected (outer-approximated) into one shape W(kappa).
 */

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "pstc/linalg.hpp"
#include "pstc/setcalc.hpp"
#include "pstc/sysmodel.hpp"

namespace pstc {

struct ReachConfig {
  std::vector<Vec> directions;  // empty: canonical basis of the plant state
  int substeps = 32;            // RK4 steps per controller period
  double seed_regularization = -1.0;  // q0; negative selects 1e-12 * tr(E Wbar E')

  void validate(Index nx) const {
    if (substeps < 4) throw std::invalid_argument("reach: substeps must be >= 4");
    for (const auto& l : directions) {
      linalg::require(l.size() == nx, "reach: direction dimension must equal plant order");
      if (!(l.norm() > 0.0)) throw std::invalid_argument("reach: directions must be nonzero");
    }
  }

  [[nodiscard]] std::vector<Vec> directions_or_default(Index nx) const {
    if (!directions.empty()) return directions;
    std::vector<Vec> out;
    for (Index i = 0; i < nx; ++i) out.push_back(Vec::Unit(nx, i));
    return out;
  }
};

/// W(kappa) for kappa in 0..kappa_max; W(0) = 0.
struct DisturbanceTables {
  std::vector<Mat> W;

  [[nodiscard]] int kappa_max() const { return static_cast<int>(W.size()) - 1; }
  [[nodiscard]] const Mat& at(int kappa) const {
    if (kappa < 0 || kappa > kappa_max()) throw std::out_of_range("disturbance tables: kappa out of range");
    return W[static_cast<std::size_t>(kappa)];
  }
};

namespace detail {

inline Mat reach_rhs(const Mat& a, const Mat& g, const Mat& q, const Vec& l, double& pi) {
  const double num = l.dot(g * l);
  const double den = l.dot(q * l);
  if (num > 1e-12 * g.trace() * l.squaredNorm() && den > 0.0) {
    const double candidate = std::sqrt(num / den);
    if (std::isfinite(candidate) && candidate > 0.0) pi = candidate;
  }
  return a * q + q * a.transpose() + pi * q + g / pi;
}

}  // namespace detail

/// Shape of an outer approximation of X_w(t_end), tight along l0. RK4 on a
/// grid of spacing delta = t_end / (substeps * periods), graded near the
/// start, from a seed that provably contains X_w(t0) for a small t0.
inline Mat tight_reach_along(const PlantModel& plant, const Mat& wbar, double t_end, const Vec& l0,
                             const ReachConfig& cfg, int periods = 1) {
  const Index n = plant.nx();
  linalg::require(wbar.rows() == plant.nw() && wbar.cols() == plant.nw(), "reach: Wbar must be nw x nw");
  linalg::require(l0.size() == n, "reach: direction dimension mismatch");
  if (!(l0.norm() > 0.0)) throw std::invalid_argument("reach: direction must be nonzero");
  if (!(t_end > 0.0)) throw std::invalid_argument("reach: t_end must be positive");
  if (periods < 1) throw std::invalid_argument("reach: periods must be >= 1");
  const Mat g = linalg::symmetrize(plant.E * wbar * plant.E.transpose());
  if (linalg::is_zero(g)) return Mat::Zero(n, n);

  const int steps = cfg.substeps * periods;
  const double delta = t_end / steps;
  const Mat& a = plant.Ap;

  // Near the seed pi ~ 1/t, so a step of size delta at t ~ delta has O(1)
  // relative size no matter how small delta is. The first kGraded uniform
  // steps are replaced by steps of t / kGraded starting from t0 << delta.
  constexpr int kGraded = 16;
  const int graded_until = std::min(steps, kGraded);
  const double t1 = delta * graded_until;
  const double t0 = delta / 1024.0;

  // X_w(t0) = { t0 * E wavg } + { int R(s) E w }, |R(s)| <= exp(|A| t0) - 1.
  const double a_norm = Eigen::JacobiSVD<Mat>(a).singularValues()(0);
  const double beta = t0 * std::expm1(a_norm * t0) * std::sqrt(linalg::sym_lambda_max(g));
  Ellipsoid seed = Ellipsoid::centered(t0 * t0 * g);
  if (beta > 0.0) seed = minksum_outer(seed, Ellipsoid::centered(beta * beta * Mat::Identity(n, n)));
  const double q0 = cfg.seed_regularization >= 0.0 ? cfg.seed_regularization : 1e-12 * g.trace();
  Mat q = seed.shape() + q0 * Mat::Identity(n, n);

  // l at half-step resolution on the uniform grid t1, t1 + delta/2, ..., t_end.
  const int uniform = steps - graded_until;
  const int nl = 2 * uniform + 1;
  std::vector<Vec> l(static_cast<std::size_t>(nl));
  const Mat back = linalg::expm(a.transpose() * (0.5 * delta));
  l.back() = l0.normalized();
  for (int j = nl - 2; j >= 0; --j) l[static_cast<std::size_t>(j)] = (back * l[static_cast<std::size_t>(j + 1)]).normalized();

  double pi = std::sqrt(g.trace() / q.trace());
  auto rk4 = [&](double dt, const Vec& la, const Vec& lm, const Vec& lb) {
    const Mat k1 = detail::reach_rhs(a, g, q, la, pi);
    const Mat k2 = detail::reach_rhs(a, g, q + 0.5 * dt * k1, lm, pi);
    const Mat k3 = detail::reach_rhs(a, g, q + 0.5 * dt * k2, lm, pi);
    const Mat k4 = detail::reach_rhs(a, g, q + dt * k3, lb, pi);
    q = linalg::symmetrize(q + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  };

  // Graded phase on [t0, t1]; l(t) to first order around l(t1). Any positive
  // pi keeps the result outer, so this only affects tightness.
  const Vec& l1 = l.front();
  auto l_at = [&](double t) { return Vec((l1 + (t1 - t) * (a.transpose() * l1)).normalized()); };
  for (double t = t0; t < t1;) {
    const double dt = std::min(t / kGraded, t1 - t);
    rk4(dt, l_at(t), l_at(t + 0.5 * dt), l_at(t + dt));
    t = (t1 - t - dt <= 1e-12 * t1) ? t1 : t + dt;
  }
  for (int s = 0; s < uniform; ++s) {
    rk4(delta, l[static_cast<std::size_t>(2 * s)], l[static_cast<std::size_t>(2 * s + 1)],
        l[static_cast<std::size_t>(2 * s + 2)]);
  }
  return q;
}

/// W(kappa) for kappa = 1..kappa_max at t = h*kappa, one tight ellipsoid per
/// direction, combined through intersect_outer_centered.
inline DisturbanceTables build_disturbance_tables(const PlantModel& plant, const Mat& wbar, double h,
                                                  int kappa_max, const ReachConfig& cfg) {
  cfg.validate(plant.nx());
  if (kappa_max < 1) throw std::invalid_argument("reach: kappa_max must be >= 1");
  const Index n = plant.nx();
  const auto dirs = cfg.directions_or_default(n);
  DisturbanceTables out;
  out.W.assign(static_cast<std::size_t>(kappa_max) + 1, Mat::Zero(n, n));
  for (int k = 1; k <= kappa_max; ++k) {
    std::vector<Mat> shapes;
    shapes.reserve(dirs.size());
    for (const auto& l : dirs) shapes.push_back(tight_reach_along(plant, wbar, h * k, l, cfg, k));
    if (linalg::is_zero(shapes.front())) continue;
    out.W[static_cast<std::size_t>(k)] = intersect_outer_centered(shapes).shape();
  }
  return out;
}

}  // namespace pstc
