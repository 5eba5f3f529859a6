#pragma once

/**
 * @file estimator.hpp
 * @brief Recursive guaranteed state estimation with ellipsoids.
 *
 * Prediction: E <- minksum(PhiP(k) E + GammaP(k) u, E(0, W(k))).
 * Correction: E <- fusion(E, C(y, V, Cp)), or the exact hyperplane section
 * when V = 0.
 *
 * When no bounded initial set is available the estimator first collects
 * kbar + 1 periodic samples (kbar is the observability index of
 * (PhiP(1), Cp)) and builds a bounded ellipsoid from the stacked output
 * cylinders.
 */

#include <optional>
#include <stdexcept>
#include <vector>

#include "pstc/linalg.hpp"
#include "pstc/reach.hpp"
#include "pstc/setcalc.hpp"
#include "pstc/sysmodel.hpp"

namespace pstc {

enum class EstimatorPhase { Initializing, Running };

struct EstimatorState {
  EstimatorPhase phase = EstimatorPhase::Initializing;
  std::optional<Ellipsoid> estimate;
  std::vector<Vec> outputs;  // y(0..k) while initializing
  std::vector<Vec> inputs;   // u held over [j, j+1), j = 0..k-1
  int model_violations = 0;  // empty-intersection fallbacks

  static EstimatorState initializing() { return {}; }
  static EstimatorState running(Ellipsoid e) {
    EstimatorState s;
    s.phase = EstimatorPhase::Running;
    s.estimate = std::move(e);
    return s;
  }

  [[nodiscard]] bool is_running() const { return phase == EstimatorPhase::Running; }
  [[nodiscard]] const Ellipsoid& current() const {
    if (!estimate) throw std::logic_error("estimator: no bounded estimate yet");
    return *estimate;
  }
};

/// Smallest k with rank [Cp; Cp Phi; ...; Cp Phi^k] = n.
inline int observability_index(const Mat& phi1, const Mat& cp, double rtol = 1e-8) {
  const Index n = phi1.rows();
  linalg::require(phi1.cols() == n && cp.cols() == n, "observability_index: dimension mismatch");
  Mat obs(0, n);
  Mat block = cp;
  for (Index k = 0; k < n; ++k) {
    Mat next(obs.rows() + cp.rows(), n);
    next << obs, block;
    obs = std::move(next);
    if (linalg::rank(obs, rtol) == n) return static_cast<int>(k);
    block = block * phi1;
  }
  throw NumericalError("observability_index: (PhiP(1), Cp) is not observable");
}

/// Offline matrices of the bounded initialization.
struct InitTables {
  int kbar = 0;
  Mat cp;
  Mat gamma1;
  std::vector<Mat> phi_inv_powers;  // PhiP(1)^-k, k = 0..kbar
  Mat obar;                         // rows Cp PhiP(1)^(k - kbar), k = 0..kbar
  Mat obar_pinv;
  std::vector<Mat> vtilde;          // output-space uncertainty per sample
  Mat vbar;                         // blockdiag((kbar + 1) vtilde(k))
  Mat shape;                        // obar_pinv vbar obar_pinv'
};

inline InitTables build_init_tables(const PlantModel& plant, const TransitionTables& trans,
                                    const DisturbanceTables& dist, const Mat& v) {
  const Mat& phi1 = trans.phi_p(1);
  const Index n = plant.nx(), ny = plant.ny();
  linalg::require(v.rows() == ny && v.cols() == ny, "init: V must be ny x ny");
  if (linalg::rank(phi1, 1e-12) != n) throw NumericalError("init: PhiP(1) is not invertible");
  InitTables t;
  t.kbar = observability_index(phi1, plant.Cp);
  if (t.kbar > dist.kappa_max()) throw std::invalid_argument("init: kappa_max is smaller than the observability index");
  t.cp = plant.Cp;
  t.gamma1 = trans.gamma_p(1);
  const Mat phi_inv = phi1.inverse();
  t.phi_inv_powers.push_back(Mat::Identity(n, n));
  for (int k = 1; k <= t.kbar; ++k) t.phi_inv_powers.push_back(phi_inv * t.phi_inv_powers.back());

  const int rows = t.kbar + 1;
  t.obar.resize(rows * ny, n);
  std::vector<Mat> blocks;
  for (int k = 0; k <= t.kbar; ++k) {
    const Mat ck = plant.Cp * t.phi_inv_powers[static_cast<std::size_t>(t.kbar - k)];
    t.obar.middleRows(k * ny, ny) = ck;
    const Ellipsoid dist_part = Ellipsoid::centered(ck * dist.at(t.kbar - k) * ck.transpose());
    t.vtilde.push_back(minksum_outer(Ellipsoid::centered(v), dist_part).shape());
    blocks.push_back(static_cast<double>(rows) * t.vtilde.back());
  }
  t.vbar = linalg::block_diag(blocks);
  if (linalg::rank(t.obar, 1e-10) != n) throw NumericalError("init: stacked observability matrix is rank deficient");
  t.obar_pinv = linalg::pinv(t.obar);
  t.shape = linalg::symmetrize(t.obar_pinv * t.vbar * t.obar_pinv.transpose());
  return t;
}

/// Outer ellipsoid of the intersection of cylinders C(y_i, M_i, C_i) through
/// the stacked pseudo-inverse with block weights M_i / mu_i (sum mu_i = 1).
inline Ellipsoid cylinder_intersection_outer(const std::vector<EllipticalCylinder>& cyls,
                                             const std::vector<double>& mu) {
  if (cyls.empty() || cyls.size() != mu.size()) {
    throw std::invalid_argument("cylinder_intersection_outer: need one weight per cylinder");
  }
  const Index n = cyls.front().dim();
  double total = 0.0;
  Index rows = 0;
  for (std::size_t i = 0; i < cyls.size(); ++i) {
    linalg::require(cyls[i].dim() == n, "cylinder_intersection_outer: dimension mismatch");
    if (!(mu[i] > 0.0)) throw std::invalid_argument("cylinder_intersection_outer: weights must be positive");
    total += mu[i];
    rows += cyls[i].offset().size();
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("cylinder_intersection_outer: weights must sum to 1");
  Mat cbar(rows, n);
  Vec ybar(rows);
  std::vector<Mat> blocks;
  Index r = 0;
  for (std::size_t i = 0; i < cyls.size(); ++i) {
    const Index m = cyls[i].offset().size();
    cbar.middleRows(r, m) = cyls[i].projector();
    ybar.segment(r, m) = cyls[i].offset();
    blocks.push_back(cyls[i].shape() / mu[i]);
    r += m;
  }
  if (linalg::rank(cbar, 1e-10) != n) throw NumericalError("cylinder_intersection_outer: stacked projector is rank deficient");
  const Mat cp = linalg::pinv(cbar);
  return {cp * ybar, cp * linalg::block_diag(blocks) * cp.transpose()};
}

/// Buffers one periodic sample. `u_prev` is the input held over the period
/// that just ended (ignored for the very first sample). On the (kbar+1)-th
/// sample the state switches to Running with a bounded estimate of the
/// current plant state.
inline EstimatorState init_ingest(EstimatorState state, const Vec& y, const Vec& u_prev,
                                  const InitTables& tables) {
  if (state.is_running()) throw std::logic_error("init_ingest: estimator already running");
  if (!state.outputs.empty()) state.inputs.push_back(u_prev);
  state.outputs.push_back(y);
  const int kbar = tables.kbar;
  if (static_cast<int>(state.outputs.size()) < kbar + 1) return state;

  const Index ny = tables.cp.rows();
  Vec psibar(static_cast<Index>(kbar + 1) * ny);
  for (int k = 0; k <= kbar; ++k) {
    Vec acc = Vec::Zero(tables.cp.cols());
    for (int j = k; j < kbar; ++j) {
      acc += tables.phi_inv_powers[static_cast<std::size_t>(j - k + 1)] * (tables.gamma1 * state.inputs[static_cast<std::size_t>(j)]);
    }
    psibar.segment(k * ny, ny) = state.outputs[static_cast<std::size_t>(k)] + tables.cp * acc;
  }
  EstimatorState out = EstimatorState::running({tables.obar_pinv * psibar, tables.shape});
  out.model_violations = state.model_violations;
  return out;
}

/// Measurement update with C(y, V, Cp). V = 0 uses the exact hyperplane
/// section. An empty intersection keeps the prior and counts a model
/// violation (the noise or disturbance left its assumed bound).
inline EstimatorState correct(EstimatorState state, const Vec& y, const Mat& v, const Mat& cp,
                              const LambdaMode& mode = LambdaMode::optimal()) {
  if (!state.is_running()) throw std::logic_error("correct: estimator is not running");
  const Ellipsoid& prior = state.current();
  try {
    if (linalg::is_zero(v)) {
      state.estimate = hyperplane_fusion(prior, cp, y);
    } else if (prior.is_nondegenerate()) {
      state.estimate = fusion(prior, EllipticalCylinder(y, v, cp), mode);
    }
  } catch (const EmptyIntersection&) {
    ++state.model_violations;
  }
  return state;
}

inline Ellipsoid predict_ellipsoid(const Ellipsoid& e, const Vec& u, int kappa, const TransitionTables& trans,
                                   const DisturbanceTables& dist) {
  return minksum_outer(affine_map(trans.phi_p(kappa), e, trans.gamma_p(kappa) * u),
                       Ellipsoid::centered(dist.at(kappa)));
}

inline EstimatorState predict(EstimatorState state, const Vec& u, int kappa, const TransitionTables& trans,
                              const DisturbanceTables& dist) {
  if (!state.is_running()) throw std::logic_error("predict: estimator is not running");
  if (kappa < 1) throw std::out_of_range("predict: kappa must be >= 1");
  state.estimate = predict_ellipsoid(state.current(), u, kappa, trans, dist);
  return state;
}

}  // namespace pstc
