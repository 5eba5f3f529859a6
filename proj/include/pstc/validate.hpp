#pragma once

// Monte Carlo invariant suites behind `pstc_cli validate`. Each check
// records a margin per sample (positive means the invariant is violated by
// that much) and keeps the worst sample for replay.

#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "pstc/closed_loop.hpp"
#include "pstc/problem.hpp"
#include "pstc/sampling.hpp"
#include "pstc/setcalc.hpp"

namespace pstc::validate {

using nlohmann::json;

inline json to_json(const Mat& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline json to_json(const Vec& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

struct CheckResult {
  explicit CheckResult(std::string n) : name(std::move(n)) {}

  std::string name;
  long samples = 0;
  long violations = 0;
  double worst_margin = -std::numeric_limits<double>::infinity();
  json worst_sample;
  json first_violation;

  /// `make_sample` is only called when the sample is reported.
  void record(double margin, const std::function<json()>& make_sample) {
    ++samples;
    const bool bad = margin > 0.0 || std::isnan(margin);
    if (bad) {
      if (violations == 0) first_violation = make_sample();
      ++violations;
    }
    if (margin > worst_margin || std::isnan(margin)) {
      worst_margin = std::isnan(margin) ? std::numeric_limits<double>::infinity() : margin;
      worst_sample = make_sample();
    }
  }
};

struct SuiteReport {
  std::string suite;
  std::uint64_t seed = 0;
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  [[nodiscard]] bool passed() const {
    for (const auto& c : checks) {
      if (c.violations > 0) return false;
    }
    return true;
  }

  [[nodiscard]] json to_json() const {
    json j;
    j["suite"] = suite;
    j["seed"] = seed;
    j["passed"] = passed();
    j["seconds"] = seconds;
    json cs = json::array();
    for (const auto& c : checks) {
      json e = {{"check", c.name}, {"samples", c.samples}, {"violations", c.violations}};
      e["worst_margin"] = std::isfinite(c.worst_margin) ? json(c.worst_margin) : json(nullptr);
      if (c.violations > 0) e["violating_sample"] = c.first_violation;
      cs.push_back(e);
    }
    j["checks"] = cs;
    return j;
  }
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline double rel_margin(double value, double bound, double tol) {
  return value - bound - tol * (1.0 + std::abs(bound));
}

}  // namespace detail

struct SetcalcOptions {
  int instances = 100;
  int samples = 1000;
  double tol = 1e-9;
};

/// Containment of sampled members for Minkowski sum, fusion, hyperplane
/// section and centred intersection, plus the support identity of affine maps.
inline SuiteReport setcalc_suite(std::uint64_t seed, const SetcalcOptions& opt = {}) {
  using namespace sampling;
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep;
  rep.suite = "setcalc";
  rep.seed = seed;
  CheckResult mink{"minksum_containment"}, fus{"fusion_containment"}, hyp{"hyperplane_containment"},
      inter{"intersection_containment"}, aff{"affine_support_identity"};
  std::uniform_int_distribution<int> dim(2, 4);
  for (int inst = 0; inst < opt.instances; ++inst) {
    Rng rng(seed * 1000003ull + static_cast<std::uint64_t>(inst));
    const Index n = dim(rng);
    auto sample_info = [&](const char* what, const Vec& x) {
      return json{{"check", what}, {"seed", seed}, {"instance", inst}, {"point", to_json(x)}};
    };

    const Ellipsoid e1(gaussian(rng, n), random_spd(rng, n));
    const Ellipsoid e2(gaussian(rng, n), random_spd(rng, n));
    const Ellipsoid sum = minksum_outer(e1, e2);
    for (int s = 0; s < opt.samples; ++s) {
      const Vec x = in_or_on(rng, e1) + in_or_on(rng, e2);
      mink.record(normalized_distance(sum, x) - 1.0 - opt.tol, [&] { return sample_info("minksum", x); });
    }

    // Fusion with a cylinder through a point of e1, so the intersection is non-empty.
    const Index m = std::uniform_int_distribution<Index>(1, n - 1)(rng);
    const Mat c = random_matrix(rng, m, n);
    const Mat v = random_spd(rng, m, 0.05, 2.0);
    const Vec y = c * in_ellipsoid(rng, e1) + linalg::psd_factor(v) * in_ball(rng, m) * 0.5;
    const EllipticalCylinder cyl(y, v, c);
    try {
      const Ellipsoid fused = fusion_optimal(e1, cyl);
      int accepted = 0;
      for (int s = 0; s < 50 * opt.samples && accepted < opt.samples; ++s) {
        const Vec x = in_or_on(rng, e1);
        const Vec r = c * x - y;
        if (r.dot(linalg::spd_inverse(v) * r) > 1.0) continue;
        ++accepted;
        fus.record(normalized_distance(fused, x) - 1.0 - opt.tol, [&] { return sample_info("fusion", x); });
      }
    } catch (const EmptyIntersection&) {
      fus.record(std::numeric_limits<double>::infinity(), [&] { return sample_info("fusion_empty", y); });
    }

    // Hyperplane section: exact members m + S s with C S s = y - C m.
    const Mat ch = random_matrix(rng, m, n);
    const Vec yh = ch * in_ellipsoid(rng, e2);
    const Ellipsoid sec = hyperplane_fusion(e2, ch, yh);
    {
      const Mat s_f = linalg::psd_factor(e2.shape());
      const Mat cs = ch * s_f;
      const Vec s0 = linalg::pinv(cs) * (yh - ch * e2.center());
      Eigen::FullPivLU<Mat> lu(cs);
      const Mat ns = lu.kernel();
      const Eigen::HouseholderQR<Mat> qr(ns);
      const Mat basis = Mat(qr.householderQ()).leftCols(ns.cols());
      const double rho = std::sqrt(std::max(0.0, 1.0 - s0.squaredNorm()));
      for (int s = 0; s < opt.samples; ++s) {
        const Vec t = (s % 2 ? on_sphere(rng, basis.cols()) : in_ball(rng, basis.cols())) * rho;
        const Vec x = e2.center() + s_f * (s0 + basis * t);
        hyp.record(normalized_distance(sec, x, 1e-7) - 1.0 - 1e-7, [&] { return sample_info("hyperplane", x); });
      }
    }

    // Centred intersection of three ellipsoids.
    const std::vector<Mat> shapes = {random_spd(rng, n), random_spd(rng, n), random_spd(rng, n)};
    const Ellipsoid outer = intersect_outer_centered(shapes);
    int accepted = 0;
    for (int s = 0; s < 50 * opt.samples && accepted < opt.samples; ++s) {
      const Vec x = in_or_on(rng, Ellipsoid::centered(shapes[static_cast<std::size_t>(s % 3)]));
      bool all = true;
      for (const auto& sh : shapes) all = all && contains(Ellipsoid::centered(sh), x, 0.0);
      if (!all) continue;
      ++accepted;
      inter.record(normalized_distance(outer, x) - 1.0 - opt.tol, [&] { return sample_info("intersection", x); });
    }

    // rho(l | A E + b) = l'b + rho(A' l | E).
    const Index rows = dim(rng);
    const Mat a = random_matrix(rng, rows, n);
    const Vec b = gaussian(rng, rows);
    const Ellipsoid mapped = affine_map(a, e1, b);
    for (int s = 0; s < opt.samples; ++s) {
      const Vec l = gaussian(rng, rows);
      const double lhs = support(mapped, l);
      const double rhs = l.dot(b) + support(e1, a.transpose() * l);
      aff.record(std::abs(lhs - rhs) - opt.tol * (1.0 + std::abs(rhs)), [&] { return sample_info("affine", l); });
    }
  }
  rep.checks = {mink, fus, hyp, inter, aff};
  rep.seconds = detail::seconds_since(t0);
  return rep;
}

struct ReachOptions {
  int realizations = 1000;
  int substeps = 16;
  double w_scale = 1.0;  // < 1 corrupts W(kappa); used as a soundness canary
  double tol = 1e-9;
};

/// Responses of admissible piecewise-constant disturbances (random,
/// constant on the boundary, and the bang-bang maximizer of a random
/// direction) checked against E(0, W(kappa)) at every kappa.
inline SuiteReport reach_suite(const ProblemConfig& cfg, const DisturbanceTables& dist, std::uint64_t seed,
                               const ReachOptions& opt = {}) {
  using namespace sampling;
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep;
  rep.suite = "reach";
  rep.seed = seed;
  CheckResult chk{"disturbance_reach_containment"};
  const auto& plant = cfg.plant;
  const Index n = plant.nx(), nw = plant.nw();
  const int kmax = dist.kappa_max();
  const int ns = opt.substeps;
  const double h = cfg.controller.h;
  const double dt = h / ns;
  const Discretization sub = discretize(plant, dt);
  const Mat wroot = linalg::psd_factor(cfg.wbar);
  std::vector<Ellipsoid> bounds;
  for (int k = 0; k <= kmax; ++k) bounds.push_back(Ellipsoid::centered(opt.w_scale * dist.at(k)));

  for (int r = 0; r < opt.realizations; ++r) {
    Rng rng(seed * 7919ull + static_cast<std::uint64_t>(r));
    const int pattern = r % 3;
    const int target = std::uniform_int_distribution<int>(1, kmax)(rng);
    const Vec l = on_sphere(rng, n);
    const Vec constant = wroot * on_sphere(rng, nw);
    Vec x = Vec::Zero(n);
    for (int k = 1; k <= kmax; ++k) {
      for (int s = 0; s < ns; ++s) {
        Vec w;
        if (pattern == 0) {
          w = wroot * in_ball(rng, nw);
        } else if (pattern == 1) {
          w = constant;
        } else {
          // Maximizes l' x(target h) when applied over [0, target h].
          const double tmid = (k - 1) * h + (s + 0.5) * dt;
          const double remaining = std::max(0.0, target * h - tmid);
          const Vec g = wroot * (plant.E.transpose() * (linalg::expm(plant.Ap.transpose() * remaining) * l));
          w = g.norm() > 0.0 ? Vec(wroot * (g / g.norm())) : Vec::Zero(nw);
        }
        x = sub.Phi * x + sub.GammaW * w;
      }
      const double q = normalized_distance(bounds[static_cast<std::size_t>(k)], x, 1e-7);
      chk.record(q - 1.0 - opt.tol, [&] {
        return json{{"seed", seed}, {"realization", r}, {"pattern", pattern}, {"kappa", k}, {"state", to_json(x)},
                    {"normalized_distance", std::isfinite(q) ? json(q) : json(nullptr)}};
      });
    }
  }
  rep.checks = {chk};
  rep.seconds = detail::seconds_since(t0);
  return rep;
}

struct EstimatorOptions {
  int runs = 20;
};

/// Closed-loop PSTC runs with varied seeds: estimate containment at every
/// period and the pathwise PETC lower bound at every trigger.
inline SuiteReport estimator_suite(const ProblemConfig& cfg, const OfflineTables& tables,
                                   const ScenarioConfig& scenario, std::uint64_t seed,
                                   const EstimatorOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep;
  rep.suite = "estimator";
  rep.seed = seed;
  CheckResult cont{"estimate_containment"}, lower{"petc_lower_bound"};
  for (int r = 0; r < opt.runs; ++r) {
    ScenarioConfig sc = scenario;
    sc.seed = seed + static_cast<std::uint64_t>(r);
    const SimTrace tr = run_closed_loop(cfg, tables, sc, LoopMode::PSTC);
    for (const auto& row : tr.rows) {
      if (row.contained >= 0) {
        cont.record(row.margin - scenario.containment_tol, [&] {
          return json{{"scenario_seed", sc.seed}, {"k", row.k}, {"state", to_json(row.xi)}};
        });
      }
      if (row.trigger && row.kappa_petc > 0) {
        lower.record(row.kappa - row.kappa_petc, [&] {
          return json{{"scenario_seed", sc.seed}, {"k", row.k}, {"kappa", row.kappa}, {"kappa_petc", row.kappa_petc}};
        });
      }
    }
  }
  rep.checks = {cont, lower};
  rep.seconds = detail::seconds_since(t0);
  return rep;
}

struct TriggerOptions {
  int samples = 10000;  // per kappa
  double tol = 1e-9;
};

/// eta_bar(kappa, p, X) >= eta(z', z) for sampled e in E(0, X), d in
/// E(0, W(kappa)) and v' in E(0, V). Information vectors and X come from a
/// short PSTC run of the configured scenario, plus random perturbations.
inline SuiteReport trigger_suite(const ProblemConfig& cfg, const OfflineTables& tables,
                                 const ScenarioConfig& scenario, std::uint64_t seed,
                                 const TriggerOptions& opt = {}) {
  using namespace sampling;
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep;
  rep.suite = "trigger";
  rep.seed = seed;
  CheckResult chk{"eta_bar_dominance"};
  const TriggerTables& tt = tables.trigger;
  const Index nx = tt.nx, np = tt.info_size();

  std::vector<std::pair<Vec, Mat>> infos;
  {
    ScenarioConfig sc = scenario;
    sc.seed = seed;
    sc.duration = std::min(sc.duration, 2.0);
    sc.petc_reference = false;
    const SimTrace tr = run_closed_loop(cfg, tables, sc, LoopMode::PSTC);
    // Reconstruct (p, X) at the first few estimator-backed triggers.
    for (const auto& row : tr.rows) {
      if (!row.has_estimate) continue;
      Vec p(np);
      p << row.est_center, row.xc, row.y;
      infos.emplace_back(p, Mat());
      if (infos.size() >= 8) break;
    }
  }
  Rng rng(seed);
  while (infos.size() < 16) {
    infos.emplace_back(gaussian(rng, np), Mat());
  }
  for (auto& [p, x] : infos) x = random_spd(rng, nx, 1e-4, 1.0);

  for (int k = 1; k <= tt.kappa_max(); ++k) {
    const std::size_t i = tt.slot(k);
    const Ellipsoid wk = Ellipsoid::centered(tables.disturbance.at(k));
    const Ellipsoid vk = Ellipsoid::centered(cfg.v);
    for (std::size_t j = 0; j < infos.size(); ++j) {
      const auto& [p, xs] = infos[j];
      const double bound = eta_bar(k, p, xs, tt);
      const Ellipsoid xe = Ellipsoid::centered(xs);
      const int per_info = std::max(1, opt.samples / static_cast<int>(infos.size()));
      for (int s = 0; s < per_info; ++s) {
        const Vec e = in_or_on(rng, xe);
        const Vec d = in_or_on(rng, wk);
        const Vec v = in_or_on(rng, vk);
        Vec pt = p;
        pt.head(nx) += e;
        Vec zz(2 * (tt.ny + tt.nu));
        zz << tt.n_k[i] * pt, tt.ce * pt;
        zz.head(tt.ny) += v + cfg.plant.Cp * d;
        const double value = zz.dot(tt.qbar * zz);
        chk.record(detail::rel_margin(value, bound, opt.tol), [&] {
          return json{{"seed", seed}, {"kappa", k}, {"info", j}, {"eta", value}, {"eta_bar", bound},
                      {"e", to_json(e)}, {"d", to_json(d)}, {"v", to_json(v)}};
        });
      }
    }
  }
  rep.checks = {chk};
  rep.seconds = detail::seconds_since(t0);
  return rep;
}

}  // namespace pstc::validate
