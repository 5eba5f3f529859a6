#pragma once

// Algorithm orchestration (pstc_step) and the closed-loop simulator: plant,
// controller, PSTC / PETC / periodic sampling, and the brute-force PETC
// reference used for the pathwise lower-bound check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pstc/estimator.hpp"
#include "pstc/linalg.hpp"
#include "pstc/problem.hpp"
#include "pstc/setcalc.hpp"
#include "pstc/sysmodel.hpp"
#include "pstc/trigger.hpp"

namespace pstc {

enum class LoopMode { PSTC, PETC, Periodic };

inline std::string to_string(LoopMode m) {
  switch (m) {
    case LoopMode::PSTC: return "pstc";
    case LoopMode::PETC: return "petc";
    case LoopMode::Periodic: return "periodic";
  }
  return "?";
}

inline LoopMode parse_mode(const std::string& s) {
  if (s == "pstc") return LoopMode::PSTC;
  if (s == "petc") return LoopMode::PETC;
  if (s == "periodic") return LoopMode::Periodic;
  throw std::invalid_argument("unknown mode '" + s + "' (expected pstc, petc or periodic)");
}

struct DisturbanceSpec {
  enum class Kind { Zero, Step, Random };
  Kind kind = Kind::Zero;
  Vec value;  // Step: w(t) = value while t <= until
  double until = std::numeric_limits<double>::infinity();
};

struct NoiseSpec {
  enum class Kind { Zero, Box, Inscribed };
  Kind kind = Kind::Zero;
  Vec amplitude;  // Box: per-coordinate half width
};

struct ScenarioConfig {
  Vec x0;
  Vec xc0;
  double duration = 10.0;
  int substeps = 16;
  DisturbanceSpec disturbance;
  NoiseSpec noise;
  std::uint64_t seed = 1;
  bool allow_model_violation = false;
  double containment_tol = 1e-6;
  double divergence_bound = 1e12;
  bool petc_reference = true;  // brute-force PETC time at each PSTC trigger
};

/// Common random numbers for one run: noise per period and disturbance per
/// substep, generated up front so every mode sees the same realization.
class ExogenousStreams {
 public:
  ExogenousStreams() = default;

  static ExogenousStreams generate(const ProblemConfig& cfg, const ScenarioConfig& sc, int periods) {
    const Index ny = cfg.plant.ny(), nw = cfg.plant.nw();
    ExogenousStreams s;
    s.substeps_ = sc.substeps;
    s.noise_.assign(static_cast<std::size_t>(periods), Vec::Zero(ny));
    s.dist_.assign(static_cast<std::size_t>(periods) * static_cast<std::size_t>(sc.substeps), Vec::Zero(nw));

    std::seed_seq noise_seq{static_cast<std::uint32_t>(sc.seed), static_cast<std::uint32_t>(sc.seed >> 32), 1u};
    std::seed_seq dist_seq{static_cast<std::uint32_t>(sc.seed), static_cast<std::uint32_t>(sc.seed >> 32), 2u};
    std::mt19937_64 noise_rng(noise_seq);
    std::mt19937_64 dist_rng(dist_seq);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    switch (sc.noise.kind) {
      case NoiseSpec::Kind::Zero: break;
      case NoiseSpec::Kind::Box:
        for (auto& v : s.noise_) {
          for (Index i = 0; i < ny; ++i) v(i) = sc.noise.amplitude(i) * unit(noise_rng);
        }
        break;
      case NoiseSpec::Kind::Inscribed: {
        const Mat root = linalg::psd_factor(cfg.v) / std::sqrt(static_cast<double>(ny));
        for (auto& v : s.noise_) {
          Vec u(ny);
          for (Index i = 0; i < ny; ++i) u(i) = unit(noise_rng);
          v = root * u;
        }
        break;
      }
    }

    const double h = cfg.controller.h;
    const double dt = h / sc.substeps;
    switch (sc.disturbance.kind) {
      case DisturbanceSpec::Kind::Zero: break;
      case DisturbanceSpec::Kind::Step:
        for (std::size_t i = 0; i < s.dist_.size(); ++i) {
          const double mid = (static_cast<double>(i) + 0.5) * dt;
          if (mid <= sc.disturbance.until) s.dist_[i] = sc.disturbance.value;
        }
        break;
      case DisturbanceSpec::Kind::Random: {
        const Mat root = linalg::psd_factor(cfg.wbar);
        std::normal_distribution<double> gauss;
        std::uniform_real_distribution<double> radius(0.0, 1.0);
        for (auto& w : s.dist_) {
          Vec d(nw);
          for (Index i = 0; i < nw; ++i) d(i) = gauss(dist_rng);
          const double r = std::pow(radius(dist_rng), 1.0 / static_cast<double>(nw));
          w = root * (r * d / std::max(d.norm(), 1e-300));
        }
        break;
      }
    }
    return s;
  }

  [[nodiscard]] int periods() const { return static_cast<int>(noise_.size()); }
  [[nodiscard]] int substeps() const { return substeps_; }
  [[nodiscard]] const Vec& noise(int k) const { return noise_.at(static_cast<std::size_t>(k)); }
  [[nodiscard]] const Vec& disturbance(int k, int s) const {
    return dist_.at(static_cast<std::size_t>(k) * static_cast<std::size_t>(substeps_) + static_cast<std::size_t>(s));
  }
  /// Disturbance samples of period k (substeps entries).
  [[nodiscard]] std::span<const Vec> period(int k, int count = 1) const {
    const std::size_t first = static_cast<std::size_t>(k) * static_cast<std::size_t>(substeps_);
    const std::size_t len = static_cast<std::size_t>(count) * static_cast<std::size_t>(substeps_);
    if (first + len > dist_.size()) throw std::out_of_range("streams: disturbance window out of range");
    return {dist_.data() + first, len};
  }

 private:
  int substeps_ = 1;
  std::vector<Vec> noise_;
  std::vector<Vec> dist_;
};

/// Throws unless the scenario respects the assumed bounds (or explicitly
/// allows a model violation).
inline void check_scenario(const ProblemConfig& cfg, const ScenarioConfig& sc) {
  const Index nx = cfg.plant.nx(), nc = cfg.controller.nc(), ny = cfg.plant.ny(), nw = cfg.plant.nw();
  linalg::require(sc.x0.size() == nx, "scenario: x0 must have plant order");
  linalg::require(sc.xc0.size() == nc, "scenario: xc0 must have controller order");
  if (!(sc.duration >= 0.0)) throw std::invalid_argument("scenario: duration must be >= 0");
  if (sc.substeps < 1) throw std::invalid_argument("scenario: substeps must be >= 1");
  if (sc.disturbance.kind == DisturbanceSpec::Kind::Step) {
    linalg::require(sc.disturbance.value.size() == nw, "scenario: disturbance value must have length nw");
  }
  if (sc.noise.kind == NoiseSpec::Kind::Box) {
    linalg::require(sc.noise.amplitude.size() == ny, "scenario: noise amplitude must have length ny");
    if ((sc.noise.amplitude.array() < 0.0).any()) throw std::invalid_argument("scenario: noise amplitude must be >= 0");
  }
  if (sc.allow_model_violation) return;

  if (sc.disturbance.kind == DisturbanceSpec::Kind::Step && !sc.disturbance.value.isZero(0.0)) {
    const Ellipsoid bound = Ellipsoid::centered(cfg.wbar);
    if (!contains(bound, sc.disturbance.value, 1e-12)) {
      throw std::invalid_argument("scenario: disturbance value lies outside E(0, Wbar)");
    }
  }
  if (sc.noise.kind == NoiseSpec::Kind::Box && !sc.noise.amplitude.isZero(0.0)) {
    // A box lies in the ellipsoid iff all its corners do.
    if (ny > 20) throw std::invalid_argument("scenario: box admissibility check limited to ny <= 20");
    const Ellipsoid bound = Ellipsoid::centered(cfg.v);
    for (std::uint32_t mask = 0; mask < (1u << ny); ++mask) {
      Vec corner = sc.noise.amplitude;
      for (Index i = 0; i < ny; ++i) {
        if (mask & (1u << i)) corner(i) = -corner(i);
      }
      if (!contains(bound, corner, 1e-12)) throw std::invalid_argument("scenario: noise box is not inside E(0, V)");
    }
  }
}

/// Ground truth over kappa periods with ns substeps each; w holds
/// kappa * ns piecewise-constant samples.
inline Vec simulate_plant_interval(const Discretization& sub, const Vec& x, const Vec& u, std::span<const Vec> w,
                                   int kappa, int ns) {
  if (kappa < 0 || ns < 1) throw std::invalid_argument("simulate_plant_interval: bad kappa or substeps");
  if (w.size() < static_cast<std::size_t>(kappa) * static_cast<std::size_t>(ns)) {
    throw std::invalid_argument("simulate_plant_interval: not enough disturbance samples");
  }
  const Vec bu = sub.Gamma * u;
  Vec out = x;
  for (std::size_t i = 0; i < static_cast<std::size_t>(kappa * ns); ++i) out = sub.Phi * out + bu + sub.GammaW * w[i];
  return out;
}

inline Vec simulate_plant_interval(const PlantModel& plant, const Vec& x, const Vec& u, std::span<const Vec> w,
                                   double h, int kappa, int ns) {
  return simulate_plant_interval(discretize(plant, h / ns), x, u, w, kappa, ns);
}

struct StepTimings {
  double fusion_ms = 0.0;
  double eta_ms = 0.0;
  double prediction_ms = 0.0;
};

struct PstcStepResult {
  Vec u;
  int kappa = 1;
  EstimatorState estimator;      // predicted kappa periods ahead
  std::optional<Ellipsoid> posterior;  // after the measurement update
  std::vector<double> scanned;
  StepTimings timings;
};

/// One trigger instant: input, correction, next sampling time, prediction.
inline PstcStepResult pstc_step(const Vec& xc, const Vec& y, EstimatorState est, const ProblemConfig& cfg,
                                const OfflineTables& tables) {
  if (!est.is_running()) throw std::logic_error("pstc_step: estimator is not running");
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };
  const auto& ctrl = cfg.controller;
  PstcStepResult r;
  r.u = ctrl.Cc * xc + ctrl.Dc * y;

  auto t0 = clock::now();
  est = correct(std::move(est), y, cfg.v, cfg.plant.Cp, cfg.lambda_mode);
  auto t1 = clock::now();
  r.timings.fusion_ms = ms(t0, t1);

  const Ellipsoid& post = est.current();
  Vec p(tables.trigger.info_size());
  p << post.center(), xc, y;
  const KappaChoice choice = kappa_star(p, post.shape(), tables.trigger, cfg.trigger.epsilon, cfg.trigger.kappa_max);
  auto t2 = clock::now();
  r.timings.eta_ms = ms(t1, t2);
  r.kappa = choice.kappa;
  r.scanned = choice.scanned;
  r.posterior = post;

  r.estimator = predict(std::move(est), r.u, r.kappa, tables.transitions, tables.disturbance);
  r.timings.prediction_ms = ms(t2, clock::now());
  return r;
}

/// Ground-truth snapshot at a sampling instant, taken after the held values
/// were refreshed and before the controller state advances.
struct LoopSnapshot {
  int k = 0;
  Vec xi;
  Vec xc;
  Vec y_held;
  Vec u_held;
};

/// First kappa in 1..kappa_max at which the true loop would violate the
/// PETC condition (strict eta > epsilon^2), or kappa_max.
inline int petc_reference_time(const LoopSnapshot& snap, const ProblemConfig& cfg, const Discretization& sub,
                               const ExogenousStreams& streams) {
  const auto& ctrl = cfg.controller;
  const Index ny = cfg.plant.ny(), nu = cfg.plant.nu();
  const double threshold = cfg.trigger.epsilon * cfg.trigger.epsilon;
  const int ns = streams.substeps();
  Vec zeta_held(ny + nu);
  zeta_held << snap.y_held, snap.u_held;
  Vec xi = snap.xi;
  Vec xc = snap.xc;
  Vec zeta(ny + nu);
  for (int kappa = 1; kappa <= cfg.trigger.kappa_max; ++kappa) {
    const int k = snap.k + kappa - 1;
    xc = ctrl.Ac * xc + ctrl.Bc * snap.y_held;
    xi = simulate_plant_interval(sub, xi, snap.u_held, streams.period(k), 1, ns);
    if (kappa == cfg.trigger.kappa_max) break;
    zeta << cfg.plant.Cp * xi + streams.noise(k + 1), ctrl.Cc * xc + ctrl.Dc * snap.y_held;
    if (eta(zeta, zeta_held, cfg.trigger.sigma) > threshold) return kappa;
  }
  return cfg.trigger.kappa_max;
}

struct PhaseStats {
  double min = std::numeric_limits<double>::infinity();
  double max = 0.0;
  double sum = 0.0;
  long count = 0;

  void add(double v) {
    min = std::min(min, v);
    max = std::max(max, v);
    sum += v;
    ++count;
  }
  [[nodiscard]] double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

struct TraceRow {
  int k = 0;
  double t = 0.0;
  Vec xi, xc, y, u, noise, w;
  bool trigger = false;
  int kappa = 0;           // gap to the next sampling instant (trigger rows)
  int kappa_petc = 0;      // brute-force PETC time from this instant (PSTC trigger rows)
  std::vector<double> scanned;
  bool has_estimate = false;
  Vec est_center;
  Mat est_shape;
  double est_trace = 0.0;
  int contained = -1;      // -1 not checked, 0 outside, 1 inside
  double margin = std::numeric_limits<double>::quiet_NaN();  // worst (x-m)'M^-1(x-m) - 1 checked here
};

struct SimTrace {
  LoopMode mode = LoopMode::PSTC;
  double h = 0.0;
  std::vector<TraceRow> rows;
  Vec final_state;
  double final_time = 0.0;
  bool diverged = false;
  int containment_violations = 0;
  int lower_bound_violations = 0;
  int model_violations = 0;
  double worst_containment = -1.0;  // max of (x-m)'M^-1(x-m) - 1 over all checks
  PhaseStats fusion, eta, prediction, cycle;

  [[nodiscard]] std::vector<int> trigger_indices() const {
    std::vector<int> out;
    for (const auto& r : rows) {
      if (r.trigger) out.push_back(r.k);
    }
    return out;
  }
  [[nodiscard]] int trigger_count() const { return static_cast<int>(trigger_indices().size()); }
};

namespace detail {

inline double containment_margin(const Ellipsoid& e, const Vec& x) {
  return normalized_distance(e, x) - 1.0;
}

}  // namespace detail

/// Steps the loop for the scenario duration. The estimator is only run in
/// PSTC mode; in PSTC mode every period is checked for containment of the
/// true state in the current estimate and every trigger is compared with
/// the brute-force PETC time on the same streams.
inline SimTrace run_closed_loop(const ProblemConfig& cfg, const OfflineTables& tables, const ScenarioConfig& sc,
                                LoopMode mode) {
  cfg.validate();
  check_scenario(cfg, sc);
  using clock = std::chrono::steady_clock;
  const auto& plant = cfg.plant;
  const auto& ctrl = cfg.controller;
  const double h = ctrl.h;
  const int kmax = cfg.trigger.kappa_max;
  const int periods = static_cast<int>(std::llround(sc.duration / h));
  const int ns = sc.substeps;
  const double threshold = cfg.trigger.epsilon * cfg.trigger.epsilon;

  // kmax periods of margin so the PETC reference can look ahead past the end.
  const ExogenousStreams streams = ExogenousStreams::generate(cfg, sc, periods + kmax + 1);
  const Discretization sub = discretize(plant, h / ns);

  SimTrace trace;
  trace.mode = mode;
  trace.h = h;
  Vec xi = sc.x0;
  Vec xc = sc.xc0;
  Vec y_held = Vec::Zero(plant.ny());
  Vec u_held = Vec::Zero(plant.nu());
  Vec zeta_held = Vec::Zero(plant.ny() + plant.nu());

  std::optional<EstimatorState> est;
  if (mode == LoopMode::PSTC) {
    if (cfg.x0_shape) {
      est = EstimatorState::running(Ellipsoid::centered(*cfg.x0_shape));
    } else {
      if (!tables.init) throw std::invalid_argument("run_closed_loop: initialization tables missing");
      est = EstimatorState::initializing();
    }
  }
  std::optional<Ellipsoid> posterior;  // at the last PSTC trigger
  int last_trigger = 0;
  int next_trigger = 0;
  std::size_t last_trigger_row = 0;

  auto check = [&](TraceRow& row, const Ellipsoid& e) {
    const double margin = detail::containment_margin(e, xi);
    trace.worst_containment = std::max(trace.worst_containment, margin);
    const bool inside = margin <= sc.containment_tol;
    if (!inside) ++trace.containment_violations;
    row.contained = (row.contained == 0 || !inside) ? 0 : 1;
    row.margin = std::isnan(row.margin) ? margin : std::max(row.margin, margin);
  };

  trace.rows.reserve(static_cast<std::size_t>(periods));
  for (int k = 0; k < periods; ++k) {
    TraceRow row;
    row.k = k;
    row.t = h * k;
    row.xi = xi;
    row.xc = xc;
    row.noise = streams.noise(k);
    row.w = streams.disturbance(k, 0);
    const Vec y = plant.Cp * xi + row.noise;
    row.y = y;

    bool trigger = false;
    switch (mode) {
      case LoopMode::Periodic: trigger = true; break;
      case LoopMode::PSTC: trigger = (k == next_trigger); break;
      case LoopMode::PETC: {
        if (k == 0 || k - last_trigger >= kmax) {
          trigger = true;
        } else {
          Vec zeta(plant.ny() + plant.nu());
          zeta << y, ctrl.Cc * xc + ctrl.Dc * y_held;
          trigger = eta(zeta, zeta_held, cfg.trigger.sigma) > threshold;
        }
        break;
      }
    }

    if (mode == LoopMode::PSTC && !trigger && posterior) {
      // Between triggers: prediction of the last posterior must hold the state.
      check(row, predict_ellipsoid(*posterior, u_held, k - last_trigger, tables.transitions, tables.disturbance));
    }

    Vec u = u_held;
    if (trigger) {
      if (mode == LoopMode::PSTC) {
        if (k > 0) trace.rows[last_trigger_row].kappa = k - last_trigger;
        int kappa = 1;
        const auto t_cycle = clock::now();
        if (!est->is_running()) {
          est = init_ingest(std::move(*est), y, u_held, *tables.init);
        }
        if (est->is_running()) {
          check(row, est->current());  // prior
          PstcStepResult r = pstc_step(xc, y, std::move(*est), cfg, tables);
          trace.fusion.add(r.timings.fusion_ms);
          trace.eta.add(r.timings.eta_ms);
          trace.prediction.add(r.timings.prediction_ms);
          trace.cycle.add(std::chrono::duration<double, std::milli>(clock::now() - t_cycle).count());
          u = r.u;
          kappa = r.kappa;
          row.scanned = std::move(r.scanned);
          posterior = r.posterior;
          check(row, *posterior);
          est = std::move(r.estimator);
          row.has_estimate = true;
          row.est_center = posterior->center();
          row.est_shape = posterior->shape();
          row.est_trace = posterior->trace();
        } else {
          u = ctrl.Cc * xc + ctrl.Dc * y;
        }
        trace.model_violations = est->model_violations;
        row.kappa = kappa;
        if (sc.petc_reference) {
          const LoopSnapshot snap{k, xi, xc, y, u};
          row.kappa_petc = petc_reference_time(snap, cfg, sub, streams);
          if (kappa > row.kappa_petc) ++trace.lower_bound_violations;
        }
        next_trigger = k + kappa;
      } else {
        if (k > 0) trace.rows[last_trigger_row].kappa = k - last_trigger;
        u = ctrl.Cc * xc + ctrl.Dc * y;
        row.kappa = 1;
      }
      y_held = y;
      u_held = u;
      zeta_held << y_held, u_held;
      last_trigger = k;
      last_trigger_row = trace.rows.size();
    }
    row.trigger = trigger;
    row.u = u_held;

    trace.rows.push_back(std::move(row));

    xc = ctrl.Ac * xc + ctrl.Bc * y_held;
    xi = simulate_plant_interval(sub, xi, u_held, streams.period(k), 1, ns);
    if (!xi.allFinite() || xi.norm() > sc.divergence_bound || !xc.allFinite()) {
      trace.diverged = true;
      trace.final_state = xi;
      trace.final_time = h * (k + 1);
      return trace;
    }
  }
  // Last gap in PETC/periodic runs is open-ended; record the elapsed part.
  if (mode != LoopMode::PSTC && !trace.rows.empty()) {
    trace.rows[last_trigger_row].kappa = std::max(1, periods - last_trigger);
  }
  trace.final_state = xi;
  trace.final_time = h * periods;
  return trace;
}

}  // namespace pstc
