#pragma once

// Text configuration: problem (models, bounds, trigger parameters) plus a
// default scenario. Grammar, one item per line:
//
//   # comment (also allowed after values)
//   key = value
//   [Name rows cols]          followed by `rows` lines of `cols` numbers
//
// Matrices are row-major. Vectors are written as [name n 1] blocks.
// Unknown keys and blocks are errors, as are duplicates.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pstc/closed_loop.hpp"
#include "pstc/problem.hpp"

namespace pstc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigFile {
  ProblemConfig problem;
  ScenarioConfig scenario;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string strip_comment(const std::string& s) {
  const auto pos = s.find('#');
  return pos == std::string::npos ? s : s.substr(0, pos);
}

inline double parse_number(const std::string& tok, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size() || tok.empty()) {
    throw ConfigError("line " + std::to_string(line) + ": '" + tok + "' is not a number");
  }
  return v;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct RawConfig {
  std::map<std::string, std::pair<std::string, int>> values;  // key -> (value, line)
  std::map<std::string, Mat> matrices;
};

inline RawConfig parse_raw(std::istream& in) {
  RawConfig raw;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated matrix header");
      std::istringstream hdr(s.substr(1, s.size() - 2));
      std::string name, extra;
      long rows = -1, cols = -1;
      if (!(hdr >> name >> rows >> cols) || (hdr >> extra) || rows < 0 || cols < 0) {
        throw ConfigError("line " + std::to_string(lineno) + ": matrix header must be [name rows cols]");
      }
      if (raw.matrices.count(name)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate matrix '" + name + "'");
      Mat m(rows, cols);
      for (long r = 0; r < rows; ++r) {
        std::string row_line;
        std::string row;
        do {
          if (!std::getline(in, row_line)) {
            throw ConfigError("matrix '" + name + "': expected " + std::to_string(rows) + " rows, file ended");
          }
          ++lineno;
          row = trim(strip_comment(row_line));
        } while (row.empty());
        std::istringstream rs(row);
        std::string tok;
        long c = 0;
        while (rs >> tok) {
          if (c >= cols) throw ConfigError("line " + std::to_string(lineno) + ": matrix '" + name + "' row has too many entries");
          m(r, c++) = parse_number(tok, lineno);
        }
        if (c != cols) throw ConfigError("line " + std::to_string(lineno) + ": matrix '" + name + "' row has too few entries");
      }
      raw.matrices.emplace(name, std::move(m));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    if (raw.values.count(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    raw.values.emplace(key, std::make_pair(value, lineno));
  }
  return raw;
}

class Reader {
 public:
  explicit Reader(RawConfig raw) : raw_(std::move(raw)) {}

  [[nodiscard]] bool has(const std::string& key) const { return raw_.values.count(key) > 0; }
  [[nodiscard]] bool has_matrix(const std::string& name) const { return raw_.matrices.count(name) > 0; }

  std::string str(const std::string& key) {
    const auto it = raw_.values.find(key);
    if (it == raw_.values.end()) throw ConfigError("missing key '" + key + "'");
    used_.insert(key);
    return it->second.first;
  }
  std::string str(const std::string& key, const std::string& fallback) { return has(key) ? str(key) : fallback; }

  double num(const std::string& key) {
    const std::string v = str(key);
    return parse_number(v, raw_.values.at(key).second);
  }
  double num(const std::string& key, double fallback) { return has(key) ? num(key) : fallback; }

  long integer(const std::string& key, long fallback) {
    if (!has(key)) return fallback;
    const double v = num(key);
    if (v != static_cast<double>(static_cast<long>(v))) throw ConfigError("key '" + key + "' must be an integer");
    return static_cast<long>(v);
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const std::string v = str(key);
    std::size_t used = 0;
    std::uint64_t out = 0;
    try {
      out = std::stoull(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.front() == '-') throw ConfigError("key '" + key + "' must be a non-negative integer");
    return out;
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string v = str(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "' must be true or false");
  }

  Mat matrix(const std::string& name) {
    const auto it = raw_.matrices.find(name);
    if (it == raw_.matrices.end()) throw ConfigError("missing matrix [" + name + "]");
    used_matrices_.insert(name);
    return it->second;
  }

  Vec vector(const std::string& name) {
    const Mat m = matrix(name);
    if (m.cols() != 1) throw ConfigError("matrix [" + name + "] must be a column vector (n 1)");
    return m.col(0);
  }

  void reject_unused() const {
    for (const auto& [k, v] : raw_.values) {
      if (!used_.count(k)) throw ConfigError("line " + std::to_string(v.second) + ": unknown key '" + k + "'");
    }
    for (const auto& [k, v] : raw_.matrices) {
      if (!used_matrices_.count(k)) throw ConfigError("unknown matrix [" + k + "]");
    }
  }

 private:
  RawConfig raw_;
  std::set<std::string> used_;
  std::set<std::string> used_matrices_;
};

inline void write_matrix(std::ostream& os, const std::string& name, const Mat& m) {
  os << '[' << name << ' ' << m.rows() << ' ' << m.cols() << "]\n";
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) os << (c ? " " : "") << fmt(m(r, c));
    os << '\n';
  }
}

inline void fnv1a(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
}

inline void hash_matrix(std::uint64_t& h, const Mat& m) {
  const std::int64_t dims[2] = {static_cast<std::int64_t>(m.rows()), static_cast<std::int64_t>(m.cols())};
  fnv1a(h, dims, sizeof dims);
  for (Index c = 0; c < m.cols(); ++c) {
    for (Index r = 0; r < m.rows(); ++r) {
      double v = m(r, c);
      if (v == 0.0) v = 0.0;  // fold -0
      fnv1a(h, &v, sizeof v);
    }
  }
}

}  // namespace config_detail

inline ConfigFile parse_config(std::istream& in) {
  using namespace config_detail;
  Reader r(parse_raw(in));
  ConfigFile out;
  ProblemConfig& p = out.problem;
  try {
    p.plant.Ap = r.matrix("Ap");
    p.plant.Bp = r.matrix("Bp");
    p.plant.Cp = r.matrix("Cp");
    p.plant.E = r.matrix("E");
    p.controller.Ac = r.matrix("Ac");
    p.controller.Bc = r.matrix("Bc");
    p.controller.Cc = r.matrix("Cc");
    p.controller.Dc = r.matrix("Dc");
    p.controller.h = r.num("h");
    p.trigger.sigma = r.num("sigma");
    p.trigger.epsilon = r.num("epsilon");
    p.trigger.kappa_max = static_cast<int>(r.integer("kappa_max", -1));
    if (!r.has("kappa_max")) throw ConfigError("missing key 'kappa_max'");
    p.wbar = r.matrix("Wbar");
    p.v = r.matrix("V");
    if (r.has_matrix("X0")) p.x0_shape = r.matrix("X0");
    if (r.has_matrix("L")) {
      const Mat l = r.matrix("L");
      for (Index c = 0; c < l.cols(); ++c) p.reach.directions.push_back(l.col(c));
    }
    p.reach.substeps = static_cast<int>(r.integer("reach_substeps", p.reach.substeps));
    p.reach.seed_regularization = r.num("reach_seed_regularization", p.reach.seed_regularization);

    const std::string lm = r.str("fusion_lambda", "optimal");
    if (lm == "optimal") {
      p.lambda_mode = LambdaMode::optimal(r.num("fusion_tolerance", 1e-4));
    } else {
      const double v = parse_number(lm, 0);
      p.lambda_mode = LambdaMode::fixed(v);
    }

    ScenarioConfig& s = out.scenario;
    s.x0 = r.has_matrix("x0") ? r.vector("x0") : Vec::Zero(p.plant.nx());
    s.xc0 = r.has_matrix("xc0") ? r.vector("xc0") : Vec::Zero(p.controller.nc());
    s.duration = r.num("duration", s.duration);
    s.substeps = static_cast<int>(r.integer("substeps", s.substeps));
    s.seed = r.u64("seed", s.seed);
    s.allow_model_violation = r.boolean("allow_model_violation", false);
    s.containment_tol = r.num("containment_tol", s.containment_tol);

    const std::string dist = r.str("disturbance", "zero");
    if (dist == "zero") {
      s.disturbance.kind = DisturbanceSpec::Kind::Zero;
    } else if (dist == "step") {
      s.disturbance.kind = DisturbanceSpec::Kind::Step;
      s.disturbance.value = r.vector("disturbance_value");
      s.disturbance.until = r.num("disturbance_until", s.disturbance.until);
    } else if (dist == "random") {
      s.disturbance.kind = DisturbanceSpec::Kind::Random;
    } else {
      throw ConfigError("disturbance must be zero, step or random");
    }
    const std::string noise = r.str("noise", "zero");
    if (noise == "zero") {
      s.noise.kind = NoiseSpec::Kind::Zero;
    } else if (noise == "box") {
      s.noise.kind = NoiseSpec::Kind::Box;
      s.noise.amplitude = r.vector("noise_amplitude");
    } else if (noise == "inscribed") {
      s.noise.kind = NoiseSpec::Kind::Inscribed;
    } else {
      throw ConfigError("noise must be zero, box or inscribed");
    }
    r.reject_unused();
    p.validate();
    check_scenario(p, s);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return out;
}

inline ConfigFile load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in);
}

inline std::string serialize_config(const ConfigFile& cfg) {
  using namespace config_detail;
  const ProblemConfig& p = cfg.problem;
  const ScenarioConfig& s = cfg.scenario;
  std::ostringstream os;
  os << "# plant\n";
  write_matrix(os, "Ap", p.plant.Ap);
  write_matrix(os, "Bp", p.plant.Bp);
  write_matrix(os, "Cp", p.plant.Cp);
  write_matrix(os, "E", p.plant.E);
  os << "\n# controller\n";
  write_matrix(os, "Ac", p.controller.Ac);
  write_matrix(os, "Bc", p.controller.Bc);
  write_matrix(os, "Cc", p.controller.Cc);
  write_matrix(os, "Dc", p.controller.Dc);
  os << "h = " << fmt(p.controller.h) << '\n';
  os << "\n# triggering\n";
  os << "sigma = " << fmt(p.trigger.sigma) << '\n';
  os << "epsilon = " << fmt(p.trigger.epsilon) << '\n';
  os << "kappa_max = " << p.trigger.kappa_max << '\n';
  os << "\n# bounds\n";
  write_matrix(os, "Wbar", p.wbar);
  write_matrix(os, "V", p.v);
  if (p.x0_shape) write_matrix(os, "X0", *p.x0_shape);
  os << "\n# estimator\n";
  if (!p.reach.directions.empty()) {
    Mat l(p.plant.nx(), static_cast<Index>(p.reach.directions.size()));
    for (std::size_t i = 0; i < p.reach.directions.size(); ++i) l.col(static_cast<Index>(i)) = p.reach.directions[i];
    write_matrix(os, "L", l);
  }
  os << "reach_substeps = " << p.reach.substeps << '\n';
  os << "reach_seed_regularization = " << fmt(p.reach.seed_regularization) << '\n';
  if (p.lambda_mode.kind == LambdaMode::Kind::Optimal) {
    os << "fusion_lambda = optimal\n";
    os << "fusion_tolerance = " << fmt(p.lambda_mode.value) << '\n';
  } else {
    os << "fusion_lambda = " << fmt(p.lambda_mode.value) << '\n';
  }
  os << "\n# scenario\n";
  write_matrix(os, "x0", s.x0);
  write_matrix(os, "xc0", s.xc0);
  os << "duration = " << fmt(s.duration) << '\n';
  os << "substeps = " << s.substeps << '\n';
  os << "seed = " << s.seed << '\n';
  os << "allow_model_violation = " << (s.allow_model_violation ? "true" : "false") << '\n';
  os << "containment_tol = " << fmt(s.containment_tol) << '\n';
  switch (s.disturbance.kind) {
    case DisturbanceSpec::Kind::Zero: os << "disturbance = zero\n"; break;
    case DisturbanceSpec::Kind::Random: os << "disturbance = random\n"; break;
    case DisturbanceSpec::Kind::Step:
      os << "disturbance = step\n";
      os << "disturbance_until = " << fmt(s.disturbance.until) << '\n';
      write_matrix(os, "disturbance_value", s.disturbance.value);
      break;
  }
  switch (s.noise.kind) {
    case NoiseSpec::Kind::Zero: os << "noise = zero\n"; break;
    case NoiseSpec::Kind::Inscribed: os << "noise = inscribed\n"; break;
    case NoiseSpec::Kind::Box:
      os << "noise = box\n";
      write_matrix(os, "noise_amplitude", s.noise.amplitude);
      break;
  }
  return os.str();
}

/// FNV-1a over everything the offline tables depend on. Epsilon, the fusion
/// mode and the scenario are excluded: they do not enter the tables.
inline std::uint64_t table_hash(const ProblemConfig& p) {
  using namespace config_detail;
  std::uint64_t h = 1469598103934665603ull;
  const char tag[] = "pstc-tables";
  fnv1a(h, tag, sizeof tag);
  for (const Mat* m : {&p.plant.Ap, &p.plant.Bp, &p.plant.Cp, &p.plant.E, &p.controller.Ac, &p.controller.Bc,
                       &p.controller.Cc, &p.controller.Dc, &p.wbar, &p.v}) {
    hash_matrix(h, *m);
  }
  const double scalars[] = {p.controller.h, p.trigger.sigma, p.reach.seed_regularization};
  fnv1a(h, scalars, sizeof scalars);
  const std::int64_t ints[] = {p.trigger.kappa_max, p.reach.substeps, p.x0_shape ? 1 : 0,
                               static_cast<std::int64_t>(p.reach.directions.size())};
  fnv1a(h, ints, sizeof ints);
  for (const auto& l : p.reach.directions) hash_matrix(h, l);
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pstc
