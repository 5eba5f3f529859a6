#pragma once

// Plant / controller containers, exact zero-order-hold discretization and the
// kappa-indexed transition tables.

#include <stdexcept>
#include <string>
#include <vector>

#include "pstc/linalg.hpp"

namespace pstc {

/// Continuous plant  dx/dt = Ap x + Bp u + E w,  y = Cp x + v.
struct PlantModel {
  Mat Ap;
  Mat Bp;
  Mat Cp;
  Mat E;

  [[nodiscard]] Index nx() const { return Ap.rows(); }
  [[nodiscard]] Index nu() const { return Bp.cols(); }
  [[nodiscard]] Index ny() const { return Cp.rows(); }
  [[nodiscard]] Index nw() const { return E.cols(); }

  /// Throws DimensionError / NumericalError naming the failed invariant.
  void validate() const {
    const Index n = Ap.rows();
    linalg::require(n > 0 && Ap.cols() == n, "plant: Ap must be square and non-empty");
    linalg::require(Bp.rows() == n, "plant: Bp must have as many rows as Ap");
    linalg::require(Cp.cols() == n, "plant: Cp must have as many columns as Ap");
    linalg::require(E.rows() == n, "plant: E must have as many rows as Ap");
    Mat obs(Cp.rows() * n, n);
    Mat block = Cp;
    for (Index k = 0; k < n; ++k) {
      obs.middleRows(k * Cp.rows(), Cp.rows()) = block;
      block = block * Ap;
    }
    if (linalg::rank(obs, 1e-8) != n) throw NumericalError("plant: (Ap, Cp) is not observable");
  }
};

/// Discrete controller  xc(k+1) = Ac xc + Bc yhat,  u = Cc xc + Dc yhat,
/// running with period h.
struct ControllerModel {
  Mat Ac;
  Mat Bc;
  Mat Cc;
  Mat Dc;
  double h = 0.0;

  [[nodiscard]] Index nc() const { return Ac.rows(); }

  void validate(const PlantModel& plant) const {
    const Index n = Ac.rows();
    linalg::require(Ac.cols() == n, "controller: Ac must be square");
    linalg::require(Bc.rows() == n && Bc.cols() == plant.ny(), "controller: Bc must be nc x ny");
    linalg::require(Cc.rows() == plant.nu() && Cc.cols() == n, "controller: Cc must be nu x nc");
    linalg::require(Dc.rows() == plant.nu() && Dc.cols() == plant.ny(), "controller: Dc must be nu x ny");
    if (!(h > 0.0)) throw std::invalid_argument("controller: period h must be positive");
  }
};

struct TriggerConfig {
  double sigma = 0.0;
  double epsilon = 0.0;
  int kappa_max = 1;

  void validate() const {
    if (!(sigma >= 0.0 && sigma < 1.0)) throw std::invalid_argument("trigger: sigma must be in [0, 1)");
    if (!(epsilon >= 0.0)) throw std::invalid_argument("trigger: epsilon must be >= 0");
    if (kappa_max < 1) throw std::invalid_argument("trigger: kappa_max must be >= 1");
  }
};

struct Discretization {
  Mat Phi;     // exp(Ap dt)
  Mat Gamma;   // int_0^dt exp(Ap s) Bp ds
  Mat GammaW;  // int_0^dt exp(Ap s) E ds
};

/// Exact discretization over dt through the exponential of the augmented
/// matrix [[Ap, Bp, E], [0, 0, 0]].
inline Discretization discretize(const PlantModel& plant, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("discretize: step must be positive");
  const Index n = plant.nx(), m = plant.nu(), w = plant.nw();
  Mat aug = Mat::Zero(n + m + w, n + m + w);
  aug.topLeftCorner(n, n) = plant.Ap;
  aug.block(0, n, n, m) = plant.Bp;
  aug.block(0, n + m, n, w) = plant.E;
  const Mat ex = linalg::expm(aug * dt);
  return {ex.topLeftCorner(n, n), ex.block(0, n, n, m), ex.block(0, n + m, n, w)};
}

/// PhiP(1) = exp(Ap h), GammaP(1) = int_0^h exp(Ap s) Bp ds.
inline std::pair<Mat, Mat> discretize_one_step(const PlantModel& plant, double h) {
  auto d = discretize(plant, h);
  return {std::move(d.Phi), std::move(d.Gamma)};
}

/// Tables indexed by kappa in 0..kappa_max; entry 0 is (I, 0, I, 0).
class TransitionTables {
 public:
  TransitionTables() = default;
  TransitionTables(std::vector<Mat> phi_p, std::vector<Mat> gamma_p, std::vector<Mat> phi_c,
                   std::vector<Mat> gamma_c)
      : phi_p_(std::move(phi_p)), gamma_p_(std::move(gamma_p)), phi_c_(std::move(phi_c)),
        gamma_c_(std::move(gamma_c)) {}

  [[nodiscard]] int kappa_max() const { return static_cast<int>(phi_p_.size()) - 1; }
  [[nodiscard]] const Mat& phi_p(int kappa) const { return phi_p_.at(check(kappa)); }
  [[nodiscard]] const Mat& gamma_p(int kappa) const { return gamma_p_.at(check(kappa)); }
  [[nodiscard]] const Mat& phi_c(int kappa) const { return phi_c_.at(check(kappa)); }
  [[nodiscard]] const Mat& gamma_c(int kappa) const { return gamma_c_.at(check(kappa)); }

 private:
  [[nodiscard]] std::size_t check(int kappa) const {
    if (kappa < 0 || kappa > kappa_max()) throw std::out_of_range("transition tables: kappa out of range");
    return static_cast<std::size_t>(kappa);
  }

  std::vector<Mat> phi_p_, gamma_p_, phi_c_, gamma_c_;
};

/// PhiP(k) = PhiP(1)^k, GammaP(k) = sum_{j<k} PhiP(1)^j GammaP(1),
/// PhiC(k) = Ac^k,      GammaC(k) = sum_{j<k} Ac^j Bc.
inline TransitionTables build_transition_tables(const PlantModel& plant, const ControllerModel& ctrl,
                                                const TriggerConfig& cfg) {
  const auto [phi1, gamma1] = discretize_one_step(plant, ctrl.h);
  const Index n = plant.nx(), nc = ctrl.nc();
  const std::size_t count = static_cast<std::size_t>(cfg.kappa_max) + 1;
  std::vector<Mat> phi_p(count), gamma_p(count), phi_c(count), gamma_c(count);
  phi_p[0] = Mat::Identity(n, n);
  gamma_p[0] = Mat::Zero(n, plant.nu());
  phi_c[0] = Mat::Identity(nc, nc);
  gamma_c[0] = Mat::Zero(nc, plant.ny());
  for (std::size_t k = 1; k < count; ++k) {
    phi_p[k] = phi1 * phi_p[k - 1];
    gamma_p[k] = phi1 * gamma_p[k - 1] + gamma1;
    phi_c[k] = ctrl.Ac * phi_c[k - 1];
    gamma_c[k] = ctrl.Ac * gamma_c[k - 1] + ctrl.Bc;
  }
  return {std::move(phi_p), std::move(gamma_p), std::move(phi_c), std::move(gamma_c)};
}

}  // namespace pstc
