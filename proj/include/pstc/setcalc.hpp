#pragma once

/**
 * @file setcalc.hpp
 * @brief Ellipsoidal set calculus.
 *
 * Ellipsoids E(m, M) = { x : l'x <= l'm + sqrt(l'Ml) for all l } with a
 * possibly singular PSD shape M, elliptical cylinders
 * C(y, M, C) = { x : (Cx - y)' M^-1 (Cx - y) <= 1 }, and the outer
 * approximations needed by a guaranteed state estimator: trace-optimal
 * Minkowski sums, ellipsoid/cylinder fusion, exact hyperplane sections and
 * intersections of centred ellipsoids.
 *
 * All operations are pure functions on immutable values.
 */

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pstc/linalg.hpp"

namespace pstc {

/// Raised when an intersection is detected to be empty (fusion z <= 0 or an
/// infeasible hyperplane section). Callers decide the fallback.
class EmptyIntersection : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Ellipsoid {
 public:
  static constexpr double kPsdTolerance = 1e-9;

  Ellipsoid() = default;

  /// Symmetrizes the shape. Negative eigenvalues within
  /// kPsdTolerance * max(1, |lambda|_max) are clamped to zero; larger ones throw.
  Ellipsoid(Vec center, Mat shape) : center_(std::move(center)), shape_(std::move(shape)) {
    linalg::require(shape_.rows() == shape_.cols(), "ellipsoid shape must be square");
    linalg::require(shape_.rows() == center_.size(), "ellipsoid center/shape dimension mismatch");
    shape_ = linalg::symmetrize(shape_);
    if (dim() == 0) return;
    Eigen::SelfAdjointEigenSolver<Mat> es(shape_, Eigen::EigenvaluesOnly);
    const Vec& ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (!std::isfinite(ev.sum())) throw NumericalError("ellipsoid shape is not finite");
    if (ev.minCoeff() < -kPsdTolerance * scale) {
      throw NumericalError("ellipsoid shape is not positive semidefinite");
    }
    if (ev.minCoeff() < 0.0) {
      Eigen::SelfAdjointEigenSolver<Mat> full(shape_);
      const Vec d = full.eigenvalues().cwiseMax(0.0);
      shape_ = linalg::symmetrize(full.eigenvectors() * d.asDiagonal() *
                                  full.eigenvectors().transpose());
    }
  }

  static Ellipsoid point(const Vec& c) { return {c, Mat::Zero(c.size(), c.size())}; }
  static Ellipsoid centered(const Mat& shape) { return {Vec::Zero(shape.rows()), shape}; }

  [[nodiscard]] const Vec& center() const { return center_; }
  [[nodiscard]] const Mat& shape() const { return shape_; }
  [[nodiscard]] Index dim() const { return center_.size(); }
  [[nodiscard]] double trace() const { return shape_.trace(); }
  [[nodiscard]] bool is_nondegenerate() const { return linalg::is_positive_definite(shape_); }

 private:
  Vec center_;
  Mat shape_;
};

class EllipticalCylinder {
 public:
  /// offset y (m), shape M (m x m, PD), projector C (m x n, rank m).
  EllipticalCylinder(Vec offset, Mat shape, Mat projector)
      : offset_(std::move(offset)), shape_(linalg::symmetrize(shape)), projector_(std::move(projector)) {
    const Index m = offset_.size();
    linalg::require(shape_.rows() == m && shape_.cols() == m, "cylinder shape must be m x m");
    linalg::require(projector_.rows() == m, "cylinder projector must have m rows");
    linalg::require(m <= projector_.cols(), "cylinder projector must satisfy m <= n");
    if (m > 0 && !(linalg::sym_lambda_min(shape_) > 0.0)) {
      throw NumericalError("cylinder shape must be positive definite");
    }
    if (linalg::rank(projector_, 1e-10) != m) {
      throw NumericalError("cylinder projector must have full row rank");
    }
  }

  [[nodiscard]] const Vec& offset() const { return offset_; }
  [[nodiscard]] const Mat& shape() const { return shape_; }
  [[nodiscard]] const Mat& projector() const { return projector_; }
  [[nodiscard]] Index dim() const { return projector_.cols(); }

 private:
  Vec offset_;
  Mat shape_;
  Mat projector_;
};

/// How the fusion parameter is chosen: golden-section search to tolerance
/// `value`, or a fixed lambda equal to `value`.
struct LambdaMode {
  enum class Kind { Optimal, Fixed };
  Kind kind = Kind::Optimal;
  double value = 1e-4;

  static LambdaMode optimal(double tol = 1e-4) { return {Kind::Optimal, tol}; }
  static LambdaMode fixed(double lambda) { return {Kind::Fixed, lambda}; }
};

inline double support(const Ellipsoid& e, const Vec& l) {
  linalg::require(l.size() == e.dim(), "support: direction dimension mismatch");
  return l.dot(e.center()) + linalg::safe_sqrt(l.dot(e.shape() * l), 1e-12 * (1.0 + l.squaredNorm()));
}

/// (x - m)' M^+ (x - m), or +inf when x - m leaves range(M) by more than
/// range_tol * max(1, sqrt(lambda_max)). Directions with eigenvalue below
/// 1e-10 * lambda_max count as outside the range.
inline double normalized_distance(const Ellipsoid& e, const Vec& x, double range_tol = 1e-9) {
  linalg::require(x.size() == e.dim(), "contains: point dimension mismatch");
  if (e.dim() == 0) return 0.0;
  const Vec d = x - e.center();
  Eigen::SelfAdjointEigenSolver<Mat> es(e.shape());
  const Vec& ev = es.eigenvalues();
  const double lmax = std::max(0.0, ev.maxCoeff());
  const double cutoff = 1e-10 * lmax;
  const Vec c = es.eigenvectors().transpose() * d;
  double q = 0.0;
  double off_range = 0.0;
  for (Index i = 0; i < c.size(); ++i) {
    if (ev(i) > cutoff && ev(i) > 0.0) {
      q += c(i) * c(i) / ev(i);
    } else {
      off_range += c(i) * c(i);
    }
  }
  if (std::sqrt(off_range) > range_tol * std::max(1.0, std::sqrt(lmax))) return std::numeric_limits<double>::infinity();
  return q;
}

/// Membership test. For a degenerate shape, x - m must lie in range(M)
/// (within tol) and the pseudo-inverse quadratic form must be <= 1 + tol.
inline bool contains(const Ellipsoid& e, const Vec& x, double tol = 1e-9) {
  return normalized_distance(e, x, tol) <= 1.0 + tol;
}

/// A * E(m, M) + b = E(Am + b, A M A').
inline Ellipsoid affine_map(const Mat& a, const Ellipsoid& e, const Vec& b) {
  linalg::require(a.cols() == e.dim(), "affine_map: A columns must equal ellipsoid dimension");
  linalg::require(b.size() == a.rows(), "affine_map: b rows must equal A rows");
  return {a * e.center() + b, a * e.shape() * a.transpose()};
}

inline Ellipsoid affine_map(const Mat& a, const Ellipsoid& e) {
  return affine_map(a, e, Vec::Zero(a.rows()));
}

/// Trace-optimal outer approximation of E1 + E2:
/// E(m1 + m2, (1 + 1/p) M1 + (1 + p) M2), p = sqrt(tr M1 / tr M2).
inline Ellipsoid minksum_outer(const Ellipsoid& e1, const Ellipsoid& e2) {
  linalg::require(e1.dim() == e2.dim(), "minksum_outer: dimension mismatch");
  const Vec center = e1.center() + e2.center();
  const double t1 = e1.trace();
  const double t2 = e2.trace();
  if (t2 <= 0.0) return {center, e1.shape()};
  if (t1 <= 0.0) return {center, e2.shape()};
  const double p = std::sqrt(t1 / t2);
  return {center, (1.0 + 1.0 / p) * e1.shape() + (1.0 + p) * e2.shape()};
}

namespace detail {

/// Quantities of the fusion formula that do not depend on lambda.
class FusionProblem {
 public:
  FusionProblem(const Ellipsoid& e, const EllipticalCylinder& c) : prior_(e), cyl_(c) {
    linalg::require(c.dim() == e.dim(), "fusion: ellipsoid/cylinder dimension mismatch");
    m1_inv_ = linalg::spd_inverse(e.shape());
    const Mat m2_inv = linalg::spd_inverse(c.shape());
    const Mat& cp = c.projector();
    ct_m2inv_c_ = cp.transpose() * m2_inv * cp;
    ct_m2inv_y_ = cp.transpose() * m2_inv * c.offset();
    m1inv_m1_ = m1_inv_ * e.center();
    innovation_ = c.offset() - cp * e.center();
    c_m1_ct_ = cp * e.shape() * cp.transpose();
  }

  struct Value {
    bool valid = false;  // Z and the innovation matrix were both invertible
    double z = 0.0;
    double trace = std::numeric_limits<double>::infinity();
  };

  [[nodiscard]] Value evaluate(double lambda) const {
    Value v;
    Eigen::LLT<Mat> zllt(lambda * m1_inv_ + (1.0 - lambda) * ct_m2inv_c_);
    if (zllt.info() != Eigen::Success) return v;
    Eigen::LLT<Mat> tllt(lambda * cyl_.shape() + (1.0 - lambda) * c_m1_ct_);
    if (tllt.info() != Eigen::Success) return v;
    v.z = 1.0 - lambda * (1.0 - lambda) * innovation_.dot(tllt.solve(innovation_));
    const Mat zinv = zllt.solve(Mat::Identity(prior_.dim(), prior_.dim()));
    v.trace = v.z * zinv.trace();
    v.valid = std::isfinite(v.trace);
    return v;
  }

  [[nodiscard]] Ellipsoid fuse(double lambda) const {
    if (lambda == 1.0) return prior_;
    const Mat zmat = lambda * m1_inv_ + (1.0 - lambda) * ct_m2inv_c_;
    Eigen::LLT<Mat> zllt(zmat);
    if (zllt.info() != Eigen::Success) throw NumericalError("fusion: Z is singular for this lambda");
    Eigen::LLT<Mat> tllt(lambda * cyl_.shape() + (1.0 - lambda) * c_m1_ct_);
    if (tllt.info() != Eigen::Success) throw NumericalError("fusion: innovation matrix is singular");
    const double z = 1.0 - lambda * (1.0 - lambda) * innovation_.dot(tllt.solve(innovation_));
    if (!(z > 0.0)) throw EmptyIntersection("fusion: z <= 0, ellipsoid and cylinder do not intersect");
    const Mat zinv = zllt.solve(Mat::Identity(prior_.dim(), prior_.dim()));
    Vec center = zllt.solve(lambda * m1inv_m1_ + (1.0 - lambda) * ct_m2inv_y_);
    return {std::move(center), z * zinv};
  }

  [[nodiscard]] const Ellipsoid& prior() const { return prior_; }

 private:
  const Ellipsoid& prior_;
  const EllipticalCylinder& cyl_;
  Mat m1_inv_;
  Mat ct_m2inv_c_;
  Vec ct_m2inv_y_;
  Vec m1inv_m1_;
  Vec innovation_;
  Mat c_m1_ct_;
};

}  // namespace detail

/// Fusion of E(m1, M1) with C(y, M2, C) for lambda in [0, 1]; lambda = 1
/// returns the ellipsoid unchanged. Requires M1 positive definite.
inline Ellipsoid fusion(const Ellipsoid& e, const EllipticalCylinder& c, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("fusion: lambda must be in [0, 1]");
  if (lambda == 1.0) return e;
  return detail::FusionProblem(e, c).fuse(lambda);
}

/// Golden-section search for the lambda minimizing tr(M) of the fusion.
/// Never returns something with larger trace than the prior (lambda = 1).
inline double optimal_fusion_lambda(const Ellipsoid& e, const EllipticalCylinder& c, double tol = 1e-4) {
  const detail::FusionProblem prob(e, c);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  auto objective = [&](double lambda) {
    const auto v = prob.evaluate(lambda);
    if (v.valid && !(v.z > 0.0)) {
      throw EmptyIntersection("fusion: z <= 0, ellipsoid and cylinder do not intersect");
    }
    return v.valid ? v.trace : std::numeric_limits<double>::infinity();
  };
  double a = 0.0, b = 1.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = objective(x1);
  double f2 = objective(x2);
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = objective(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = objective(x2);
    }
  }
  const double best = f1 <= f2 ? x1 : x2;
  const double best_trace = std::min(f1, f2);
  return best_trace < e.trace() ? best : 1.0;
}

inline Ellipsoid fusion_optimal(const Ellipsoid& e, const EllipticalCylinder& c, double tol = 1e-4) {
  return fusion(e, c, optimal_fusion_lambda(e, c, tol));
}

inline Ellipsoid fusion(const Ellipsoid& e, const EllipticalCylinder& c, const LambdaMode& mode) {
  return mode.kind == LambdaMode::Kind::Optimal ? fusion_optimal(e, c, mode.value)
                                                : fusion(e, c, mode.value);
}

/// Exact section E(m, M) ∩ { x : Cx = y }. Works for degenerate M as well:
/// with x = m + S s, |s| <= 1, S S' = M, the constraint (CS) s = y - Cm
/// leaves s = s0 + N t with s0 the minimum-norm solution and N an
/// orthonormal null basis of CS.
inline Ellipsoid hyperplane_fusion(const Ellipsoid& e, const Mat& c, const Vec& y, double tol = 1e-9) {
  linalg::require(c.cols() == e.dim(), "hyperplane_fusion: C columns must equal ellipsoid dimension");
  linalg::require(c.rows() == y.size(), "hyperplane_fusion: C rows must equal y size");
  const Index n = e.dim();
  const Mat s = linalg::psd_factor(e.shape());
  const Mat cs = c * s;
  const Vec r = y - c * e.center();
  const double scale = 1.0 + y.norm() + (c * e.center()).norm();

  Eigen::JacobiSVD<Mat> svd(cs, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec& sv = svd.singularValues();
  const double cutoff = 1e-10 * (sv.size() ? sv(0) : 0.0);
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff && sv(i) > 0.0) ++rank;
  }
  Vec s0 = Vec::Zero(n);
  if (rank > 0) {
    const Mat u = svd.matrixU().leftCols(rank);
    const Mat v = svd.matrixV().leftCols(rank);
    s0 = v * (u.transpose() * r).cwiseQuotient(sv.head(rank));
  }
  if ((cs * s0 - r).norm() > tol * scale) {
    throw EmptyIntersection("hyperplane_fusion: hyperplane misses the ellipsoid");
  }
  const double used = s0.squaredNorm();
  if (used > 1.0 + tol) throw EmptyIntersection("hyperplane_fusion: hyperplane misses the ellipsoid");
  const double rho = std::max(0.0, 1.0 - used);
  const Mat null_basis = svd.matrixV().rightCols(n - rank);
  const Mat sn = s * null_basis;
  return {e.center() + s * s0, rho * sn * sn.transpose()};
}

/// Outer approximation of the intersection of centred ellipsoids E(0, M_i):
/// start from the minimum-trace member and fuse the others one at a time.
inline Ellipsoid intersect_outer_centered(const std::vector<Mat>& shapes, double tol = 1e-4) {
  if (shapes.empty()) throw std::invalid_argument("intersect_outer_centered: no shapes");
  const Index n = shapes.front().rows();
  for (const auto& s : shapes) {
    linalg::require(s.rows() == n && s.cols() == n, "intersect_outer_centered: dimension mismatch");
  }
  std::size_t first = 0;
  for (std::size_t i = 1; i < shapes.size(); ++i) {
    if (shapes[i].trace() < shapes[first].trace()) first = i;
  }
  Ellipsoid acc = Ellipsoid::centered(shapes[first]);
  const Mat identity = Mat::Identity(n, n);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (i == first) continue;
    const EllipticalCylinder cyl(Vec::Zero(n), shapes[i], identity);
    acc = fusion_optimal(acc, cyl, tol);
  }
  return acc;
}

}  // namespace pstc
