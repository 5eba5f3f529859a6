#pragma once

// Versioned binary table file plus a JSON sidecar (<path>.json) with
// metadata and the config hash. Layout (little-endian host order):
//
//   "PSTCTAB\0"  u32 version  u64 config_hash  i32 kappa_max
//   transitions: 4 matrix lists   disturbance: 1 matrix list
//   trigger tables                u8 has_init [init tables]
//
// A matrix is i64 rows, i64 cols, rows*cols doubles (column-major); a list is
// u64 count followed by matrices.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "pstc/config.hpp"
#include "pstc/problem.hpp"

namespace pstc {

class TableFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kTableVersion = 1;

namespace table_detail {

inline constexpr std::array<char, 8> kMagic = {'P', 'S', 'T', 'C', 'T', 'A', 'B', '\0'};

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <class T>
  void pod(const T& v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void mat(const Mat& m) {
    pod(static_cast<std::int64_t>(m.rows()));
    pod(static_cast<std::int64_t>(m.cols()));
    os_.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  }
  void mats(const std::vector<Mat>& v) {
    pod(static_cast<std::uint64_t>(v.size()));
    for (const auto& m : v) mat(m);
  }
  void doubles(const std::vector<double>& v) {
    pod(static_cast<std::uint64_t>(v.size()));
    os_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(sizeof(double) * v.size()));
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  template <class T>
  T pod() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is_) throw TableFileError("table file truncated");
    return v;
  }
  Mat mat() {
    const auto rows = pod<std::int64_t>();
    const auto cols = pod<std::int64_t>();
    if (rows < 0 || cols < 0 || rows > (1 << 20) || cols > (1 << 20)) throw TableFileError("table file corrupt (matrix size)");
    Mat m(rows, cols);
    is_.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!is_) throw TableFileError("table file truncated");
    return m;
  }
  std::vector<Mat> mats() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 20)) throw TableFileError("table file corrupt (list size)");
    std::vector<Mat> v;
    v.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) v.push_back(mat());
    return v;
  }
  std::vector<double> doubles() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 24)) throw TableFileError("table file corrupt (list size)");
    std::vector<double> v(n);
    is_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(double) * n));
    if (!is_) throw TableFileError("table file truncated");
    return v;
  }

 private:
  std::istream& is_;
};

inline std::vector<Mat> transition_list(const TransitionTables& t, int which) {
  std::vector<Mat> out;
  for (int k = 0; k <= t.kappa_max(); ++k) {
    switch (which) {
      case 0: out.push_back(t.phi_p(k)); break;
      case 1: out.push_back(t.gamma_p(k)); break;
      case 2: out.push_back(t.phi_c(k)); break;
      default: out.push_back(t.gamma_c(k)); break;
    }
  }
  return out;
}

}  // namespace table_detail

struct TableHeader {
  std::uint32_t version = 0;
  std::uint64_t config_hash = 0;
  int kappa_max = 0;
};

inline void write_tables(std::ostream& os, const OfflineTables& t, std::uint64_t hash) {
  using namespace table_detail;
  Writer w(os);
  os.write(kMagic.data(), kMagic.size());
  w.pod(kTableVersion);
  w.pod(hash);
  w.pod(static_cast<std::int32_t>(t.transitions.kappa_max()));
  for (int i = 0; i < 4; ++i) w.mats(transition_list(t.transitions, i));
  w.mats(t.disturbance.W);

  const TriggerTables& g = t.trigger;
  for (Index d : {g.nx, g.nc, g.ny, g.nu}) w.pod(static_cast<std::int64_t>(d));
  w.pod(g.sigma);
  w.pod(g.c_v);
  for (const Mat* m : {&g.qbar, &g.ce, &g.cw, &g.cv, &g.qw, &g.qv, &g.cv_qbar_cw}) w.mat(*m);
  for (const auto* v : {&g.n_k, &g.q_k, &g.f_w, &g.f_v, &g.r_w, &g.r_v, &g.q_k_cols, &g.q_k_nn, &g.r_w_nn, &g.r_v_nn}) {
    w.mats(*v);
  }
  w.doubles(g.c_vw);
  w.doubles(g.w_qw);

  w.pod(static_cast<std::uint8_t>(t.init ? 1 : 0));
  if (t.init) {
    const InitTables& in = *t.init;
    w.pod(static_cast<std::int32_t>(in.kbar));
    for (const Mat* m : {&in.cp, &in.gamma1, &in.obar, &in.obar_pinv, &in.vbar, &in.shape}) w.mat(*m);
    w.mats(in.phi_inv_powers);
    w.mats(in.vtilde);
  }
  if (!os) throw TableFileError("failed writing table file");
}

inline OfflineTables read_tables(std::istream& is, TableHeader* header = nullptr) {
  using namespace table_detail;
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw TableFileError("not a table file (bad magic)");
  Reader r(is);
  TableHeader hdr;
  hdr.version = r.pod<std::uint32_t>();
  if (hdr.version != kTableVersion) {
    throw TableFileError("unsupported table file version " + std::to_string(hdr.version));
  }
  hdr.config_hash = r.pod<std::uint64_t>();
  hdr.kappa_max = r.pod<std::int32_t>();

  OfflineTables t;
  auto phi_p = r.mats();
  auto gamma_p = r.mats();
  auto phi_c = r.mats();
  auto gamma_c = r.mats();
  t.transitions = TransitionTables(std::move(phi_p), std::move(gamma_p), std::move(phi_c), std::move(gamma_c));
  t.disturbance.W = r.mats();

  TriggerTables& g = t.trigger;
  for (Index* d : {&g.nx, &g.nc, &g.ny, &g.nu}) *d = static_cast<Index>(r.pod<std::int64_t>());
  g.sigma = r.pod<double>();
  g.c_v = r.pod<double>();
  for (Mat* m : {&g.qbar, &g.ce, &g.cw, &g.cv, &g.qw, &g.qv, &g.cv_qbar_cw}) *m = r.mat();
  for (auto* v : {&g.n_k, &g.q_k, &g.f_w, &g.f_v, &g.r_w, &g.r_v, &g.q_k_cols, &g.q_k_nn, &g.r_w_nn, &g.r_v_nn}) {
    *v = r.mats();
  }
  g.c_vw = r.doubles();
  g.w_qw = r.doubles();

  if (r.pod<std::uint8_t>()) {
    InitTables in;
    in.kbar = r.pod<std::int32_t>();
    for (Mat* m : {&in.cp, &in.gamma1, &in.obar, &in.obar_pinv, &in.vbar, &in.shape}) *m = r.mat();
    in.phi_inv_powers = r.mats();
    in.vtilde = r.mats();
    t.init = std::move(in);
  }
  if (t.transitions.kappa_max() != hdr.kappa_max || t.disturbance.kappa_max() != hdr.kappa_max ||
      g.kappa_max() != hdr.kappa_max) {
    throw TableFileError("table file corrupt (inconsistent kappa ranges)");
  }
  if (header) *header = hdr;
  return t;
}

inline nlohmann::json table_metadata(const OfflineTables& t, std::uint64_t hash, const OfflineTimings& timings) {
  nlohmann::json j;
  j["format"] = "pstc-tables";
  j["version"] = kTableVersion;
  j["config_hash"] = hash_hex(hash);
  j["kappa_max"] = t.transitions.kappa_max();
  j["dims"] = {{"nx", t.trigger.nx}, {"nc", t.trigger.nc}, {"ny", t.trigger.ny}, {"nu", t.trigger.nu}};
  j["sigma"] = t.trigger.sigma;
  j["has_init"] = t.init.has_value();
  if (t.init) j["observability_index"] = t.init->kbar;
  nlohmann::json w = nlohmann::json::array();
  for (int k = 1; k <= t.disturbance.kappa_max(); ++k) w.push_back(t.disturbance.at(k).trace());
  j["W_trace"] = w;
  j["timings_ms"] = {{"transitions", timings.transitions_ms},
                     {"reach", timings.reach_ms},
                     {"trigger", timings.trigger_ms},
                     {"init", timings.init_ms},
                     {"total", timings.transitions_ms + timings.reach_ms + timings.trigger_ms + timings.init_ms}};
  return j;
}

inline void save_tables(const std::string& path, const OfflineTables& t, std::uint64_t hash,
                        const OfflineTimings& timings = {}) {
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw TableFileError("cannot write table file '" + path + "'");
    write_tables(os, t, hash);
  }
  std::ofstream js(path + ".json");
  if (!js) throw TableFileError("cannot write table sidecar '" + path + ".json'");
  js << table_metadata(t, hash, timings).dump(2) << '\n';
}

inline OfflineTables load_tables(const std::string& path, TableHeader* header = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw TableFileError("cannot open table file '" + path + "'");
  return read_tables(is, header);
}

/// Reads only the header; returns nullopt when the file is missing or unreadable.
inline std::optional<TableHeader> peek_table_header(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != table_detail::kMagic) return std::nullopt;
  try {
    table_detail::Reader r(is);
    TableHeader h;
    h.version = r.pod<std::uint32_t>();
    h.config_hash = r.pod<std::uint64_t>();
    h.kappa_max = r.pod<std::int32_t>();
    return h;
  } catch (const TableFileError&) {
    return std::nullopt;
  }
}

}  // namespace pstc
