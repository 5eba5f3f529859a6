#pragma once

/**
 * @file trigger.hpp
 * @brief Periodic event-triggering function, its kappa-indexed offline
 *        matrices, and the worst-case upper bound eta_bar used to choose the
 *        next sampling time.
 *
 * Vectors: p = [xp; xc; y] (available information at a sampling instant),
 * z = C_E p (held output/input) and z' = N_k p + [v'; 0] + [Cp d; 0] (the
 * output/input kappa periods ahead). The triggering function is the
 * quadratic form [z'; z]' Qbar [z'; z].
 */

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pstc/linalg.hpp"
#include "pstc/reach.hpp"
#include "pstc/sysmodel.hpp"

namespace pstc {

/// |z_new - z_held|^2 - sigma^2 |z_new|^2
inline double eta(const Vec& z_new, const Vec& z_held, double sigma) {
  linalg::require(z_new.size() == z_held.size(), "eta: length mismatch");
  return (z_new - z_held).squaredNorm() - sigma * sigma * z_new.squaredNorm();
}

/// [[(1 - sigma^2) I, -I], [-I, I]] for z of length nz.
inline Mat standard_qbar(Index nz, double sigma) {
  Mat q(2 * nz, 2 * nz);
  const Mat id = Mat::Identity(nz, nz);
  q << (1.0 - sigma * sigma) * id, -id, -id, id;
  return q;
}

// Worst-case bounds over x in E(0, M).

/// sup p' F x over x in E(0, M) = sqrt(p' F M F' p).
inline double bound_pFx(const Vec& p, const Mat& f, const Mat& m) {
  linalg::require(f.rows() == p.size() && f.cols() == m.rows(), "bound_pFx: dimension mismatch");
  const Vec fp = f.transpose() * p;
  const double v = fp.dot(m * fp);
  return linalg::safe_sqrt(v, 1e-12 * std::max(1.0, fp.squaredNorm() * linalg::max_abs(m)));
}

/// Upper bound of x' Q x over x in E(0, M): lambda_max(M Q), never below 0
/// since x = 0 is feasible.
inline double bound_xQx(const Mat& q, const Mat& m) {
  linalg::require(q.rows() == m.rows() && q.cols() == m.cols(), "bound_xQx: dimension mismatch");
  return std::max(0.0, linalg::lambda_max_psd_product(m, q));
}

/// Upper bound of x1' F x2 over x_i in E(0, M_i): sqrt(lambda_max(F M2 F' M1)).
inline double bound_x1Fx2(const Mat& f, const Mat& m1, const Mat& m2) {
  linalg::require(f.rows() == m1.rows() && f.cols() == m2.rows(), "bound_x1Fx2: dimension mismatch");
  const Mat s1 = linalg::psd_factor(m1);
  const Mat inner = f * m2 * f.transpose();
  const double v = linalg::sym_lambda_max(s1.transpose() * inner * s1);
  return linalg::safe_sqrt(v, 1e-12 * std::max(1.0, linalg::max_abs(inner) * linalg::max_abs(m1)));
}

struct TriggerTables {
  Index nx = 0, nc = 0, ny = 0, nu = 0;
  double sigma = 0.0;
  Mat qbar;  // partitioned per (z', z)
  Mat ce;
  Mat cw, cv;
  Mat qw, qv;
  Mat cv_qbar_cw;  // Cv' Qbar Cw
  double c_v = 0.0;
  // Per kappa, index kappa - 1.
  std::vector<Mat> n_k, q_k, f_w, f_v, r_w, r_v;
  std::vector<Mat> q_k_cols, q_k_nn, r_w_nn, r_v_nn;  // plant-state slices
  std::vector<double> c_vw;
  std::vector<double> w_qw;  // lambda_max(W(k) Qw)

  [[nodiscard]] int kappa_max() const { return static_cast<int>(q_k.size()); }
  [[nodiscard]] Index info_size() const { return nx + nc + ny; }
  [[nodiscard]] std::size_t slot(int kappa) const {
    if (kappa < 1 || kappa > kappa_max()) throw std::out_of_range("trigger tables: kappa out of range");
    return static_cast<std::size_t>(kappa - 1);
  }
};

/// Offline matrices for kappa = 1..kappa_max with a user-supplied symmetric Qbar.
inline TriggerTables build_trigger_tables(const PlantModel& plant, const ControllerModel& ctrl,
                                          const TransitionTables& trans, const DisturbanceTables& dist,
                                          const Mat& v, const Mat& qbar, int kappa_max) {
  TriggerTables t;
  t.nx = plant.nx();
  t.nc = ctrl.nc();
  t.ny = plant.ny();
  t.nu = plant.nu();
  const Index nz = t.ny + t.nu;
  const Index np = t.info_size();
  linalg::require(qbar.rows() == 2 * nz && qbar.cols() == 2 * nz, "trigger: Qbar must be 2(ny+nu) square");
  linalg::require(v.rows() == t.ny && v.cols() == t.ny, "trigger: V must be ny x ny");
  if (trans.kappa_max() < kappa_max || dist.kappa_max() < kappa_max) {
    throw std::invalid_argument("trigger: tables shorter than kappa_max");
  }
  t.qbar = linalg::symmetrize(qbar);

  t.ce = Mat::Zero(nz, np);
  t.ce.block(0, t.nx + t.nc, t.ny, t.ny) = Mat::Identity(t.ny, t.ny);
  t.ce.block(t.ny, t.nx, t.nu, t.nc) = ctrl.Cc;
  t.ce.block(t.ny, t.nx + t.nc, t.nu, t.ny) = ctrl.Dc;

  t.cw = Mat::Zero(2 * nz, t.nx);
  t.cw.topRows(t.ny) = plant.Cp;
  t.cv = Mat::Zero(2 * nz, t.ny);
  t.cv.topRows(t.ny) = Mat::Identity(t.ny, t.ny);
  t.qw = linalg::symmetrize(t.cw.transpose() * t.qbar * t.cw);
  t.qv = linalg::symmetrize(t.cv.transpose() * t.qbar * t.cv);
  t.cv_qbar_cw = t.cv.transpose() * t.qbar * t.cw;
  t.c_v = bound_xQx(t.qv, v);

  for (int k = 1; k <= kappa_max; ++k) {
    Mat nk = Mat::Zero(nz, np);
    const Mat cg = plant.Cp * trans.gamma_p(k);
    nk.block(0, 0, t.ny, t.nx) = plant.Cp * trans.phi_p(k);
    nk.block(0, t.nx, t.ny, t.nc) = cg * ctrl.Cc;
    nk.block(0, t.nx + t.nc, t.ny, t.ny) = cg * ctrl.Dc;
    nk.block(t.ny, t.nx, t.nu, t.nc) = ctrl.Cc * trans.phi_c(k);
    nk.block(t.ny, t.nx + t.nc, t.nu, t.ny) = ctrl.Cc * trans.gamma_c(k) + ctrl.Dc;

    Mat stacked(2 * nz, np);
    stacked << nk, t.ce;
    const Mat left = stacked.transpose() * t.qbar;
    const Mat qk = linalg::symmetrize(left * stacked);
    const Mat fw = left * t.cw;
    const Mat fv = left * t.cv;
    const Mat& wk = dist.at(k);
    const Mat rw = linalg::symmetrize(fw * wk * fw.transpose());
    const Mat rv = linalg::symmetrize(fv * v * fv.transpose());

    t.n_k.push_back(nk);
    t.q_k.push_back(qk);
    t.f_w.push_back(fw);
    t.f_v.push_back(fv);
    t.r_w.push_back(rw);
    t.r_v.push_back(rv);
    t.q_k_cols.push_back(qk.leftCols(t.nx));
    t.q_k_nn.push_back(qk.topLeftCorner(t.nx, t.nx));
    t.r_w_nn.push_back(rw.topLeftCorner(t.nx, t.nx));
    t.r_v_nn.push_back(rv.topLeftCorner(t.nx, t.nx));
    t.c_vw.push_back(bound_x1Fx2(t.cv_qbar_cw, v, wk));
    t.w_qw.push_back(bound_xQx(t.qw, wk));
  }
  return t;
}

inline TriggerTables build_trigger_tables(const PlantModel& plant, const ControllerModel& ctrl,
                                          const TransitionTables& trans, const DisturbanceTables& dist,
                                          const Mat& v, double sigma, int kappa_max) {
  return build_trigger_tables(plant, ctrl, trans, dist, v, standard_qbar(plant.ny() + plant.nu(), sigma),
                              kappa_max);
}

/// Evaluates eta_bar(kappa, p, X) for a fixed (p, X) across kappa. The
/// factor of X is computed once.
class EtaBarEvaluator {
 public:
  EtaBarEvaluator(const TriggerTables& tables, const Vec& p, const Mat& x)
      : tables_(tables), p_(p), x_(linalg::symmetrize(x)), sx_(linalg::psd_factor(x_)) {
    linalg::require(p.size() == tables.info_size(), "eta_bar: information vector has wrong length");
    linalg::require(x.rows() == tables.nx && x.cols() == tables.nx, "eta_bar: X must be nx x nx");
  }

  /// The ten-term upper bound on the triggering function kappa periods ahead.
  [[nodiscard]] double operator()(int kappa) const {
    const std::size_t i = tables_.slot(kappa);
    const double known = p_.dot(tables_.q_k[i] * p_);
    const double state_cross = 2.0 * bound_pFx(p_, tables_.q_k_cols[i], x_);
    const double state_quad = std::max(0.0, lmax_x(tables_.q_k_nn[i]));
    const double noise_lin = 2.0 * quad_sqrt(tables_.r_v[i]);
    const double noise_state = 2.0 * linalg::safe_sqrt(lmax_x(tables_.r_v_nn[i]), tiny(tables_.r_v_nn[i]));
    const double dist_lin = 2.0 * quad_sqrt(tables_.r_w[i]);
    const double dist_state = 2.0 * linalg::safe_sqrt(lmax_x(tables_.r_w_nn[i]), tiny(tables_.r_w_nn[i]));
    return known + state_cross + state_quad + noise_lin + noise_state + dist_lin + dist_state +
           2.0 * tables_.c_vw[i] + tables_.c_v + tables_.w_qw[i];
  }

 private:
  [[nodiscard]] double lmax_x(const Mat& q) const {
    return linalg::sym_lambda_max(sx_.transpose() * q * sx_);
  }
  [[nodiscard]] double quad_sqrt(const Mat& r) const {
    return linalg::safe_sqrt(p_.dot(r * p_), tiny(r) * std::max(1.0, p_.squaredNorm()));
  }
  [[nodiscard]] double tiny(const Mat& m) const {
    return 1e-12 * std::max(1.0, linalg::max_abs(m) * std::max(1.0, linalg::max_abs(x_)));
  }

  const TriggerTables& tables_;
  Vec p_;
  Mat x_;
  Mat sx_;
};

inline double eta_bar(int kappa, const Vec& p_info, const Mat& x, const TriggerTables& tables) {
  return EtaBarEvaluator(tables, p_info, x)(kappa);
}

struct KappaChoice {
  int kappa = 1;
  std::vector<double> scanned;  // eta_bar(1..kappa)
};

/// First kappa with eta_bar > epsilon^2, or kappa_max when none exceeds it.
inline KappaChoice kappa_star(const Vec& p_info, const Mat& x, const TriggerTables& tables, double epsilon,
                              int kappa_max) {
  if (kappa_max < 1 || kappa_max > tables.kappa_max()) throw std::out_of_range("kappa_star: bad kappa_max");
  const EtaBarEvaluator bound(tables, p_info, x);
  const double threshold = epsilon * epsilon;
  KappaChoice out;
  for (int k = 1; k <= kappa_max; ++k) {
    const double value = bound(k);
    out.scanned.push_back(value);
    out.kappa = k;
    if (value > threshold) break;
  }
  return out;
}

}  // namespace pstc
