// Command-line front end: precompute | simulate | compare | validate.
//
// Exit codes: 0 success, 1 configuration / table error, 2 validation
// failure, 3 divergence of the simulated loop.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "pstc/pstc.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;

struct Common {
  std::string config;
  std::string tables;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::optional<double> duration;
};

std::string default_out_dir() {
  if (const char* env = std::getenv("PSTC_OUT_DIR"); env && *env) return env;
  return "pstc_out";
}

fs::path out_dir(const Common& c) {
  fs::path p = c.out.empty() ? fs::path(default_out_dir()) : fs::path(c.out);
  fs::create_directories(p);
  return p;
}

fs::path tables_path(const Common& c) {
  if (!c.tables.empty()) return c.tables;
  return out_dir(c) / (fs::path(c.config).stem().string() + ".tables");
}

pstc::ConfigFile load(const Common& c) {
  pstc::ConfigFile cfg = pstc::load_config(c.config);
  if (c.epsilon) cfg.problem.trigger.epsilon = *c.epsilon;
  if (c.seed) cfg.scenario.seed = *c.seed;
  if (c.duration) cfg.scenario.duration = *c.duration;
  cfg.problem.validate();
  pstc::check_scenario(cfg.problem, cfg.scenario);
  return cfg;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  os << s;
}

void print_timings(const pstc::OfflineTimings& t) {
  std::printf("offline computations: %.2f ms total\n",
              t.transitions_ms + t.reach_ms + t.trigger_ms + t.init_ms);
  std::printf("  reachability W(kappa) : %9.2f ms\n", t.reach_ms);
  std::printf("  transition matrices   : %9.2f ms\n", t.transitions_ms);
  std::printf("  trigger matrices      : %9.2f ms\n", t.trigger_ms);
  std::printf("  initialization        : %9.2f ms\n", t.init_ms);
}

/// Loads tables whose hash matches, or builds and caches them. With
/// `require_existing` a missing or stale file is an error.
pstc::OfflineTables obtain_tables(const pstc::ProblemConfig& cfg, const fs::path& path, bool require_existing,
                                  bool force = false) {
  const std::uint64_t hash = pstc::table_hash(cfg);
  if (!force) {
    if (const auto hdr = pstc::peek_table_header(path.string())) {
      if (hdr->config_hash == hash) {
        std::printf("tables: cache hit %s (hash %s)\n", path.c_str(), pstc::hash_hex(hash).c_str());
        return pstc::load_tables(path.string());
      }
      if (require_existing) {
        throw pstc::TableFileError("table file '" + path.string() + "' has hash " +
                                   pstc::hash_hex(hdr->config_hash) + ", config needs " + pstc::hash_hex(hash));
      }
    } else if (require_existing) {
      throw pstc::TableFileError("cannot read table file '" + path.string() + "'");
    }
  }
  pstc::OfflineTimings timings;
  pstc::OfflineTables t = pstc::build_offline_tables(cfg, &timings);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  pstc::save_tables(path.string(), t, hash, timings);
  std::printf("tables: wrote %s (%d kappa entries, hash %s)\n", path.c_str(), t.trigger.kappa_max(),
              pstc::hash_hex(hash).c_str());
  print_timings(timings);
  return t;
}

void write_trace(const fs::path& dir, const std::string& stem, const pstc::SimTrace& tr,
                 const pstc::ProblemConfig& cfg, bool plot, const json& extra = {}) {
  {
    std::ofstream os(dir / (stem + ".csv"));
    if (!os) throw std::runtime_error("cannot write trace CSV");
    pstc::write_trace_csv(os, tr, cfg);
  }
  json summary = pstc::trace_summary(tr);
  summary["epsilon"] = cfg.trigger.epsilon;
  for (const auto& [k, v] : extra.items()) summary[k] = v;
  write_text(dir / (stem + ".json"), summary.dump(2) + "\n");
  if (plot) write_text(dir / (stem + ".gp"), pstc::plot_script(stem + ".csv", cfg.plant.nx()));
}

void print_summary(const pstc::SimTrace& tr) {
  const json s = pstc::trace_summary(tr);
  std::printf("%s: %d triggers, mean kappa %.3f, final |xi| %.4g%s\n", pstc::to_string(tr.mode).c_str(),
              s["trigger_count"].get<int>(), s["kappa_mean"].get<double>(), s["final_norm"].get<double>(),
              tr.diverged ? " (DIVERGED)" : "");
  if (tr.mode == pstc::LoopMode::PSTC) {
    std::printf("  containment violations %d, lower-bound violations %d, model violations %d\n",
                tr.containment_violations, tr.lower_bound_violations, tr.model_violations);
    std::printf("  per trigger [ms]   min       mean      max\n");
    for (const auto& [name, st] : {std::pair<const char*, const pstc::PhaseStats*>{"fusion", &tr.fusion},
                                   {"eta_bar", &tr.eta},
                                   {"prediction", &tr.prediction},
                                   {"cycle", &tr.cycle}}) {
      if (st->count) std::printf("  %-12s %9.4f %9.4f %9.4f\n", name, st->min, st->mean(), st->max);
    }
  }
}

/// Fitted exponential decay rate of |xi| over the trace (least squares on log).
double decay_rate(const pstc::SimTrace& tr) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (const auto& r : tr.rows) {
    const double v = r.xi.norm();
    if (!(v > 0.0)) continue;
    sx += r.t;
    sy += std::log(v);
    sxx += r.t * r.t;
    sxy += r.t * std::log(v);
    ++n;
  }
  if (n < 2) return 0.0;
  return -(n * sxy - sx * sy) / (n * sxx - sx * sx);
}

int cmd_precompute(const Common& c, bool force) {
  const auto cfg = load(c);
  obtain_tables(cfg.problem, tables_path(c), false, force);
  return kExitOk;
}

int cmd_simulate(const Common& c, const std::string& mode_name, bool plot) {
  const auto cfg = load(c);
  const auto mode = pstc::parse_mode(mode_name);
  const auto tables = obtain_tables(cfg.problem, tables_path(c), !c.tables.empty());
  const auto tr = pstc::run_closed_loop(cfg.problem, tables, cfg.scenario, mode);
  const fs::path dir = out_dir(c);
  write_trace(dir, "trace_" + mode_name, tr, cfg.problem, plot);
  print_summary(tr);
  std::printf("wrote %s\n", (dir / ("trace_" + mode_name + ".csv")).c_str());
  return tr.diverged ? kExitDivergence : kExitOk;
}

int cmd_compare(const Common& c, bool plot) {
  const auto cfg = load(c);
  const auto tables = obtain_tables(cfg.problem, tables_path(c), !c.tables.empty());
  const auto pstc_tr = pstc::run_closed_loop(cfg.problem, tables, cfg.scenario, pstc::LoopMode::PSTC);
  const auto petc_tr = pstc::run_closed_loop(cfg.problem, tables, cfg.scenario, pstc::LoopMode::PETC);
  const fs::path dir = out_dir(c);
  write_trace(dir, "trace_pstc", pstc_tr, cfg.problem, plot);
  write_trace(dir, "trace_petc", petc_tr, cfg.problem, plot);
  const double rp = decay_rate(pstc_tr), re = decay_rate(petc_tr);
  json cmp;
  cmp["pstc"] = pstc::trace_summary(pstc_tr);
  cmp["petc"] = pstc::trace_summary(petc_tr);
  cmp["decay_rate"] = {{"pstc", rp}, {"petc", re}, {"ratio", re != 0.0 ? rp / re : 0.0}};
  cmp["lower_bound_violations"] = pstc_tr.lower_bound_violations;
  write_text(dir / "compare.json", cmp.dump(2) + "\n");
  print_summary(pstc_tr);
  print_summary(petc_tr);
  std::printf("decay rates: pstc %.4f, petc %.4f\n", rp, re);
  if (pstc_tr.diverged || petc_tr.diverged) return kExitDivergence;
  return pstc_tr.lower_bound_violations == 0 ? kExitOk : kExitValidation;
}

int cmd_validate(const Common& c, const std::string& suite, double w_scale, int budget) {
  const auto cfg = load(c);
  const std::uint64_t seed = c.seed.value_or(cfg.scenario.seed);
  const bool all = suite == "all";
  if (!all && suite != "setcalc" && suite != "reach" && suite != "estimator" && suite != "trigger") {
    throw pstc::ConfigError("unknown suite '" + suite + "'");
  }
  std::optional<pstc::OfflineTables> tables;
  if (all || suite != "setcalc") tables = obtain_tables(cfg.problem, tables_path(c), !c.tables.empty());

  std::vector<pstc::validate::SuiteReport> reports;
  if (all || suite == "setcalc") {
    pstc::validate::SetcalcOptions o;
    if (budget > 0) o.samples = budget;
    reports.push_back(pstc::validate::setcalc_suite(seed, o));
  }
  if (all || suite == "reach") {
    pstc::validate::ReachOptions o;
    o.w_scale = w_scale;
    if (budget > 0) o.realizations = budget;
    reports.push_back(pstc::validate::reach_suite(cfg.problem, tables->disturbance, seed, o));
  }
  if (all || suite == "estimator") {
    pstc::validate::EstimatorOptions o;
    if (budget > 0) o.runs = budget;
    reports.push_back(pstc::validate::estimator_suite(cfg.problem, *tables, cfg.scenario, seed, o));
  }
  if (all || suite == "trigger") {
    pstc::validate::TriggerOptions o;
    if (budget > 0) o.samples = budget;
    reports.push_back(pstc::validate::trigger_suite(cfg.problem, *tables, cfg.scenario, seed, o));
  }

  bool ok = true;
  json out = json::array();
  for (const auto& r : reports) {
    ok = ok && r.passed();
    out.push_back(r.to_json());
    std::printf("[%s] %s (%.2f s)\n", r.passed() ? "PASS" : "FAIL", r.suite.c_str(), r.seconds);
    for (const auto& ch : r.checks) {
      std::printf("    %-32s samples %8ld  violations %6ld  worst margin %.3e\n", ch.name.c_str(), ch.samples,
                  ch.violations, ch.worst_margin);
      if (ch.violations) std::printf("    violating sample: %s\n", ch.first_violation.dump().c_str());
    }
  }
  const fs::path report = out_dir(c) / ("validate_" + suite + ".json");
  write_text(report, out.dump(2) + "\n");
  std::printf("report: %s\n", report.c_str());
  return ok ? kExitOk : kExitValidation;
}

void add_common(CLI::App* sub, Common& c, bool with_epsilon = true) {
  sub->add_option("--config", c.config, "problem configuration file")->required()->check(CLI::ExistingFile);
  sub->add_option("--tables", c.tables, "offline table file (default: <out>/<config stem>.tables)");
  sub->add_option("--out", c.out, "output directory (default: $PSTC_OUT_DIR or ./pstc_out)");
  sub->add_option("--seed", c.seed, "override the scenario seed");
  sub->add_option("--duration", c.duration, "override the scenario duration")->check(CLI::NonNegativeNumber);
  if (with_epsilon) sub->add_option("--epsilon", c.epsilon, "override epsilon")->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preventive self-triggered control: offline tables, simulation and validation"};
  app.require_subcommand(1);
  Common common;

  bool force = false;
  auto* pre = app.add_subcommand("precompute", "build and cache the offline tables");
  add_common(pre, common, false);
  pre->add_flag("--force", force, "rebuild even when the cached tables match");

  std::string mode = "pstc";
  bool plot = false;
  auto* sim = app.add_subcommand("simulate", "run one closed-loop scenario");
  add_common(sim, common);
  sim->add_option("--mode", mode, "pstc | petc | periodic")->check(CLI::IsMember({"pstc", "petc", "periodic"}));
  sim->add_flag("--plot", plot, "also write a gnuplot script");

  auto* cmp = app.add_subcommand("compare", "PSTC against PETC on shared noise and disturbance");
  add_common(cmp, common);
  cmp->add_flag("--plot", plot, "also write gnuplot scripts");

  std::string suite = "all";
  double w_scale = 1.0;
  int budget = 0;
  auto* val = app.add_subcommand("validate", "Monte Carlo invariant suites");
  add_common(val, common);
  val->add_option("--suite", suite, "setcalc | reach | estimator | trigger | all")
      ->check(CLI::IsMember({"setcalc", "reach", "estimator", "trigger", "all"}));
  val->add_option("--w-scale", w_scale, "scale W(kappa) before checking (canary)")->check(CLI::PositiveNumber);
  val->add_option("--samples", budget, "override the per-suite sample budget")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (pre->parsed()) return cmd_precompute(common, force);
    if (sim->parsed()) return cmd_simulate(common, mode, plot);
    if (cmp->parsed()) return cmd_compare(common, plot);
    if (val->parsed()) return cmd_validate(common, suite, w_scale, budget);
  } catch (const pstc::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const pstc::TableFileError& e) {
    std::fprintf(stderr, "table error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
