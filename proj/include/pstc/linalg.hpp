#pragma once

// Small dense linear-algebra helpers shared by the set calculus, the
// reachability tables and the triggering bounds.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

namespace pstc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

/// Thrown when arguments have inconsistent dimensions.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical precondition (PSD, PD, rank, ...) fails.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace linalg {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline bool is_zero(const Mat& m) { return m.size() == 0 || m.cwiseAbs().maxCoeff() == 0.0; }

inline double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// Eigenvalues of a symmetric matrix, ascending.
inline Vec sym_eigenvalues(const Mat& m) {
  if (m.rows() == 0) return Vec();
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double sym_lambda_max(const Mat& m) {
  if (m.rows() == 0) return 0.0;
  return sym_eigenvalues(m).maxCoeff();
}

inline double sym_lambda_min(const Mat& m) {
  if (m.rows() == 0) return 0.0;
  return sym_eigenvalues(m).minCoeff();
}

/// A factor S with S*S^T = M for a symmetric PSD M (negative eigenvalues
/// from roundoff are clamped to zero).
inline Mat psd_factor(const Mat& m) {
  if (m.rows() == 0) return Mat(0, 0);
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
  Vec d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal();
}

/// Moore-Penrose pseudoinverse; singular values below rcond * sigma_max are
/// treated as zero.
inline Mat pinv(const Mat& a, double rcond = 1e-10) {
  if (a.size() == 0) return Mat::Zero(a.cols(), a.rows());
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double cutoff = rcond * (s.size() ? s(0) : 0.0);
  Vec inv = Vec::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Numerical rank with singular-value cutoff rtol * sigma_max.
inline Index rank(const Mat& a, double rtol = 1e-10) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(a);
  const Vec& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > rtol * s(0)) ++r;
  }
  return r;
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
inline Mat spd_inverse(const Mat& m) {
  Eigen::LLT<Mat> llt(symmetrize(m));
  if (llt.info() != Eigen::Success) throw NumericalError("matrix is not positive definite");
  return llt.solve(Mat::Identity(m.rows(), m.cols()));
}

inline bool is_positive_definite(const Mat& m) {
  if (m.rows() == 0) return true;
  Eigen::LLT<Mat> llt(symmetrize(m));
  return llt.info() == Eigen::Success && sym_lambda_min(m) > 0.0;
}

/// Largest eigenvalue of M*Q with M PSD and Q symmetric, through the
/// symmetric equivalent S^T Q S where S S^T = M.
inline double lambda_max_psd_product(const Mat& m_psd, const Mat& q_sym) {
  const Mat s = psd_factor(m_psd);
  return sym_lambda_max(s.transpose() * q_sym * s);
}

inline Mat expm(const Mat& a) {
  if (a.rows() == 0) return a;
  return a.exp();
}

inline Mat matrix_power(const Mat& a, int k) {
  Mat r = Mat::Identity(a.rows(), a.cols());
  for (int i = 0; i < k; ++i) r = r * a;
  return r;
}

inline Mat block_diag(const std::vector<Mat>& blocks) {
  Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  Mat out = Mat::Zero(rows, cols);
  Index r = 0, c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

/// sqrt of a value that should be non-negative; tiny negative roundoff
/// (>= -abs_tol) is clamped, anything below is an error.
inline double safe_sqrt(double v, double abs_tol = 1e-12) {
  if (v >= 0.0) return std::sqrt(v);
  if (v >= -abs_tol) return 0.0;
  throw NumericalError("negative argument under square root: " + std::to_string(v));
}

}  // namespace linalg
}  // namespace pstc
