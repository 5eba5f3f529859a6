#pragma once

// SimTrace serialization.
//
// CSV: one row per base period, columns in this order
//   k, t, xi_1..xi_nx, xc_1..xc_nc, y_1..y_ny, u_1..u_nu, nu_1..nu_ny,
//   w_1..w_nw, trigger, kappa, kappa_petc, contained, est_trace,
//   est_c_1..est_c_nx, eta_bar_scanned
// `u` is the held input applied over the period, `w` the first disturbance
// substep of the period, `eta_bar_scanned` the bound values for kappa = 1..
// separated by ';'. Empty cells mean "not applicable".
//
// JSON summary: trigger count, kappa statistics, final norm, violation
// counters and per-phase timings (fusion / eta_bar / prediction).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "pstc/closed_loop.hpp"

namespace pstc {

inline std::vector<std::string> trace_columns(Index nx, Index nc, Index ny, Index nu, Index nw) {
  std::vector<std::string> cols = {"k", "t"};
  auto add = [&](const std::string& prefix, Index n) {
    for (Index i = 1; i <= n; ++i) cols.push_back(prefix + "_" + std::to_string(i));
  };
  add("xi", nx);
  add("xc", nc);
  add("y", ny);
  add("u", nu);
  add("nu", ny);
  add("w", nw);
  for (const char* c : {"trigger", "kappa", "kappa_petc", "contained", "est_trace"}) cols.emplace_back(c);
  add("est_c", nx);
  cols.emplace_back("eta_bar_scanned");
  return cols;
}

inline std::string trace_header(Index nx, Index nc, Index ny, Index nu, Index nw) {
  std::string out;
  for (const auto& c : trace_columns(nx, nc, ny, nu, nw)) out += (out.empty() ? "" : ",") + c;
  return out;
}

namespace trace_detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace trace_detail

inline void write_trace_csv(std::ostream& os, const SimTrace& tr, const ProblemConfig& cfg) {
  using trace_detail::num;
  const Index nx = cfg.plant.nx(), nc = cfg.controller.nc(), ny = cfg.plant.ny(), nu = cfg.plant.nu(),
              nw = cfg.plant.nw();
  os << trace_header(nx, nc, ny, nu, nw) << '\n';
  for (const auto& r : tr.rows) {
    os << r.k << ',' << num(r.t);
    for (const Vec* v : {&r.xi, &r.xc, &r.y, &r.u, &r.noise, &r.w}) {
      for (Index i = 0; i < v->size(); ++i) os << ',' << num((*v)(i));
    }
    os << ',' << (r.trigger ? 1 : 0);
    os << ',';
    if (r.trigger) os << r.kappa;
    os << ',';
    if (r.trigger && r.kappa_petc > 0) os << r.kappa_petc;
    os << ',';
    if (r.contained >= 0) os << r.contained;
    os << ',';
    if (r.has_estimate) os << num(r.est_trace);
    for (Index i = 0; i < nx; ++i) {
      os << ',';
      if (r.has_estimate) os << num(r.est_center(i));
    }
    os << ',';
    for (std::size_t i = 0; i < r.scanned.size(); ++i) os << (i ? ";" : "") << num(r.scanned[i]);
    os << '\n';
  }
}

struct KappaStats {
  int count = 0;
  double mean = 0.0;
  int min = 0;
  int max = 0;
  double median = 0.0;
};

/// Statistics of the recorded kappa over trigger rows with t in [t0, t1].
inline KappaStats kappa_stats(const SimTrace& tr, double t0, double t1) {
  std::vector<int> ks;
  for (const auto& r : tr.rows) {
    if (r.trigger && r.t >= t0 - 1e-12 && r.t <= t1 + 1e-12) ks.push_back(r.kappa);
  }
  KappaStats s;
  if (ks.empty()) return s;
  std::sort(ks.begin(), ks.end());
  s.count = static_cast<int>(ks.size());
  double sum = 0.0;
  for (int k : ks) sum += k;
  s.mean = sum / s.count;
  s.min = ks.front();
  s.max = ks.back();
  const std::size_t mid = ks.size() / 2;
  s.median = ks.size() % 2 ? ks[mid] : 0.5 * (ks[mid - 1] + ks[mid]);
  return s;
}

inline nlohmann::json phase_json(const PhaseStats& p) {
  if (p.count == 0) return {{"count", 0}};
  return {{"count", p.count}, {"min_ms", p.min}, {"mean_ms", p.mean()}, {"max_ms", p.max}};
}

inline nlohmann::json trace_summary(const SimTrace& tr) {
  nlohmann::json j;
  j["mode"] = to_string(tr.mode);
  j["periods"] = tr.rows.size();
  j["final_time"] = tr.final_time;
  j["diverged"] = tr.diverged;
  const KappaStats ks = kappa_stats(tr, 0.0, tr.final_time);
  j["trigger_count"] = ks.count;
  j["kappa_mean"] = ks.mean;
  j["kappa_min"] = ks.min;
  j["kappa_max"] = ks.max;
  const double n0 = tr.rows.empty() ? 0.0 : tr.rows.front().xi.norm();
  const double nf = tr.final_state.size() ? tr.final_state.norm() : 0.0;
  j["initial_norm"] = n0;
  j["final_norm"] = std::isfinite(nf) ? nf : -1.0;
  j["converged"] = !tr.diverged && n0 > 0.0 && nf < 0.01 * n0;
  if (tr.mode == LoopMode::PSTC) {
    j["containment_violations"] = tr.containment_violations;
    j["lower_bound_violations"] = tr.lower_bound_violations;
    j["model_violations"] = tr.model_violations;
    j["worst_containment_margin"] = tr.worst_containment;
    j["timing"] = {{"fusion", phase_json(tr.fusion)},
                   {"eta_bar", phase_json(tr.eta)},
                   {"prediction", phase_json(tr.prediction)},
                   {"cycle", phase_json(tr.cycle)}};
  }
  return j;
}

/// gnuplot script plotting |xi| and inter-event times from the CSV.
inline std::string plot_script(const std::string& csv_name, Index nx) {
  std::ostringstream os;
  const int first = 3;  // 1-based gnuplot column of xi_1
  os << "set datafile separator ','\n"
     << "set key autotitle columnhead\n"
     << "set multiplot layout 2,1\n"
     << "set ylabel '|xi|'\nset logscale y\n"
     << "plot '" << csv_name << "' using 2:(sqrt(";
  for (Index i = 0; i < nx; ++i) os << (i ? "+" : "") << "$" << first + i << "**2";
  os << ")) with lines title 'state norm'\n"
     << "unset logscale y\nset ylabel 'kappa'\nset xlabel 't'\n"
     << "plot '" << csv_name << "' using 2:(column('trigger')==1 ? column('kappa') : 1/0) with points pt 7 ps 0.4 title 'kappa',\\\n"
     << "     '' using 2:(column('trigger')==1 ? column('kappa_petc') : 1/0) with points pt 6 ps 0.4 title 'PETC time'\n"
     << "unset multiplot\n";
  return os.str();
}

}  // namespace pstc
