#pragma once

// A complete problem description and the bundle of offline tables built from it.

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include "pstc/estimator.hpp"
#include "pstc/linalg.hpp"
#include "pstc/reach.hpp"
#include "pstc/setcalc.hpp"
#include "pstc/sysmodel.hpp"
#include "pstc/trigger.hpp"

namespace pstc {

struct ProblemConfig {
  PlantModel plant;
  ControllerModel controller;
  TriggerConfig trigger;
  Mat wbar;                     // disturbance bound E(0, Wbar), nw x nw
  Mat v;                        // noise bound E(0, V), ny x ny
  std::optional<Mat> x0_shape;  // finite initial estimate E(0, X0); absent: bounded initialization
  ReachConfig reach;
  LambdaMode lambda_mode = LambdaMode::optimal();

  void validate() const {
    plant.validate();
    controller.validate(plant);
    trigger.validate();
    reach.validate(plant.nx());
    linalg::require(wbar.rows() == plant.nw() && wbar.cols() == plant.nw(), "problem: Wbar must be nw x nw");
    linalg::require(v.rows() == plant.ny() && v.cols() == plant.ny(), "problem: V must be ny x ny");
    if (linalg::sym_lambda_min(wbar) < -1e-12) throw NumericalError("problem: Wbar must be positive semidefinite");
    if (linalg::sym_lambda_min(v) < -1e-12) throw NumericalError("problem: V must be positive semidefinite");
    if (x0_shape) {
      linalg::require(x0_shape->rows() == plant.nx() && x0_shape->cols() == plant.nx(), "problem: X0 must be nx x nx");
      if (linalg::sym_lambda_min(*x0_shape) < -1e-12) throw NumericalError("problem: X0 must be positive semidefinite");
    }
    if (lambda_mode.kind == LambdaMode::Kind::Fixed && !(lambda_mode.value >= 0.0 && lambda_mode.value <= 1.0)) {
      throw std::invalid_argument("problem: fixed fusion lambda must be in [0, 1]");
    }
    if (lambda_mode.kind == LambdaMode::Kind::Optimal && !(lambda_mode.value > 0.0)) {
      throw std::invalid_argument("problem: fusion tolerance must be positive");
    }
  }
};

struct OfflineTimings {
  double transitions_ms = 0.0;
  double reach_ms = 0.0;
  double trigger_ms = 0.0;
  double init_ms = 0.0;
};

struct OfflineTables {
  TransitionTables transitions;
  DisturbanceTables disturbance;
  TriggerTables trigger;
  std::optional<InitTables> init;
};

inline OfflineTables build_offline_tables(const ProblemConfig& cfg, OfflineTimings* timings = nullptr) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };
  const int kmax = cfg.trigger.kappa_max;
  OfflineTables out;
  OfflineTimings local;

  auto t0 = clock::now();
  out.transitions = build_transition_tables(cfg.plant, cfg.controller, cfg.trigger);
  local.transitions_ms = ms_since(t0);

  t0 = clock::now();
  out.disturbance = build_disturbance_tables(cfg.plant, cfg.wbar, cfg.controller.h, kmax, cfg.reach);
  local.reach_ms = ms_since(t0);

  t0 = clock::now();
  out.trigger = build_trigger_tables(cfg.plant, cfg.controller, out.transitions, out.disturbance, cfg.v,
                                     cfg.trigger.sigma, kmax);
  local.trigger_ms = ms_since(t0);

  if (!cfg.x0_shape) {
    t0 = clock::now();
    out.init = build_init_tables(cfg.plant, out.transitions, out.disturbance, cfg.v);
    local.init_ms = ms_since(t0);
  }
  if (timings) *timings = local;
  return out;
}

}  // namespace pstc
