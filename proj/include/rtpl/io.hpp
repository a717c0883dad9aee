#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rtpl/control.hpp"
#include "rtpl/dynamics.hpp"
#include "rtpl/rbf_network.hpp"
#include "rtpl/simulation.hpp"
#include "rtpl/smrls.hpp"

namespace rtpl {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kTraceHeader =
    "t,x1,x2,xd1,xd2,e1,e2,u,w_norm,p_true,p_hat,p_err,k_e,p_lmin,p_lmax";

namespace detail {

inline void put(std::ostream& os, double v) {
  if (!std::isnan(v)) os << v;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw FormatError(where + ": not a number '" + s + "'");
  }
  if (used != s.size()) throw FormatError(where + ": trailing characters in '" + s + "'");
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trace CSV

inline void write_trace_csv(std::ostream& os, const Trace& trace) {
  os << kTraceHeader << '\n' << std::setprecision(17);
  for (const auto& r : trace.rows) {
    os << r.t << ',' << r.x[0] << ',' << r.x[1] << ',' << r.xd[0] << ',' << r.xd[1] << ',' << r.e[0] << ','
       << r.e[1] << ',' << r.u << ',' << r.w_norm << ',' << r.p_true << ',' << r.p_hat << ',' << r.p_err() << ',';
    detail::put(os, r.k_e);
    os << ',';
    detail::put(os, r.p_lmin);
    os << ',';
    detail::put(os, r.p_lmax);
    os << '\n';
  }
}

/// Reads a trace CSV back. Normalized inputs are not part of the schema and
/// come back as NaN.
inline Trace read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("trace: empty file");
  if (line != kTraceHeader) throw FormatError("trace: unexpected header '" + line + "'");
  Trace trace;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    const std::string where = "trace line " + std::to_string(lineno);
    if (f.size() != 15) throw FormatError(where + ": expected 15 fields, got " + std::to_string(f.size()));
    double v[15];
    for (std::size_t i = 0; i < 15; ++i) v[i] = detail::parse_double(f[i], where);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    TraceRow r{v[0], {v[1], v[2]}, {v[3], v[4]}, {nan, nan}, {v[5], v[6]}, v[7], v[8], v[9], v[10]};
    r.k_e = v[12];
    r.p_lmin = v[13];
    r.p_lmax = v[14];
    trace.rows.push_back(r);
  }
  if (trace.rows.size() >= 2) trace.dt = trace.rows[1].t - trace.rows[0].t;
  return trace;
}

inline void write_weights_csv(std::ostream& os, const WeightHistory& h) {
  os << 't';
  const auto n = h.weights.empty() ? 0 : h.weights.front().size();
  for (Eigen::Index i = 0; i < n; ++i) os << ",w" << i;
  os << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < h.times.size(); ++k) {
    os << h.times[k];
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << h.weights[k][i];
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Knowledge snapshot
//
// Line-oriented text. Keys come first, then a `weights N` block with one
// value per line, then a `records M` block with lines
// `<partition> <target> <phi_0> ... <phi_{N-1}>`.

struct SnapshotFile {
  KnowledgeSnapshot knowledge;
  LatticeSpec lattice;
  double width = 0.3;
  Normalization normalization;
  double p0 = 100.0;
  PartitionGrid grid;

  RbfNetwork network() const {
    RbfNetwork net = build_lattice(lattice, width);
    net.set_weights(knowledge.weights);
    return net;
  }
};

namespace detail {

template <class T>
void put_list(std::ostream& os, const char* key, const std::vector<T>& v) {
  os << key;
  for (const auto& x : v) os << ' ' << x;
  os << '\n';
}

template <class T>
std::vector<T> get_list(std::istringstream& ss) {
  std::vector<T> out;
  T x;
  while (ss >> x) out.push_back(x);
  return out;
}

}  // namespace detail

inline void write_snapshot(std::ostream& os, const SnapshotFile& s) {
  os << "# rtpl knowledge snapshot\n" << std::setprecision(17);
  os << "format 1\n";
  os << "method " << s.knowledge.method << '\n';
  os << "learned_for " << s.knowledge.learned_for << '\n';
  detail::put_list(os, "lattice_lower", s.lattice.lower);
  detail::put_list(os, "lattice_upper", s.lattice.upper);
  detail::put_list(os, "lattice_counts", s.lattice.counts);
  os << "width " << s.width << '\n';
  detail::put_list(os, "normalization", s.normalization.scale);
  os << "p0 " << s.p0 << '\n';
  detail::put_list(os, "grid_lower", s.grid.lower);
  detail::put_list(os, "grid_upper", s.grid.upper);
  detail::put_list(os, "grid_counts", s.grid.counts);
  os << "weights " << s.knowledge.weights.size() << '\n';
  for (Eigen::Index i = 0; i < s.knowledge.weights.size(); ++i) os << s.knowledge.weights[i] << '\n';
  os << "records " << s.knowledge.memory.size() << '\n';
  for (const auto& [index, rec] : s.knowledge.memory) {
    os << index << ' ' << rec.target;
    for (Eigen::Index i = 0; i < rec.phi.size(); ++i) os << ' ' << rec.phi[i];
    os << '\n';
  }
}

inline SnapshotFile read_snapshot(std::istream& is) {
  SnapshotFile s;
  std::string line;
  bool saw_format = false;
  bool saw_weights = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "format") {
      int v = 0;
      ss >> v;
      if (v != 1) throw FormatError("snapshot: unsupported format version");
      saw_format = true;
    } else if (key == "method") {
      ss >> s.knowledge.method;
    } else if (key == "learned_for") {
      ss >> s.knowledge.learned_for;
    } else if (key == "lattice_lower") {
      s.lattice.lower = detail::get_list<double>(ss);
    } else if (key == "lattice_upper") {
      s.lattice.upper = detail::get_list<double>(ss);
    } else if (key == "lattice_counts") {
      s.lattice.counts = detail::get_list<std::size_t>(ss);
    } else if (key == "width") {
      ss >> s.width;
    } else if (key == "normalization") {
      s.normalization.scale = detail::get_list<double>(ss);
    } else if (key == "p0") {
      ss >> s.p0;
    } else if (key == "grid_lower") {
      s.grid.lower = detail::get_list<double>(ss);
    } else if (key == "grid_upper") {
      s.grid.upper = detail::get_list<double>(ss);
    } else if (key == "grid_counts") {
      s.grid.counts = detail::get_list<std::size_t>(ss);
    } else if (key == "weights") {
      std::size_t n = 0;
      if (!(ss >> n)) throw FormatError("snapshot: weights count missing");
      s.knowledge.weights.resize(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        if (!(is >> s.knowledge.weights[static_cast<Eigen::Index>(i)]))
          throw FormatError("snapshot: truncated weights block");
      }
      saw_weights = true;
    } else if (key == "records") {
      std::size_t m = 0;
      if (!(ss >> m)) throw FormatError("snapshot: records count missing");
      const auto n = s.knowledge.weights.size();
      for (std::size_t j = 0; j < m; ++j) {
        std::size_t index = 0;
        PartitionRecord rec{true, Eigen::VectorXd(n), 0.0};
        if (!(is >> index >> rec.target)) throw FormatError("snapshot: truncated records block");
        for (Eigen::Index i = 0; i < n; ++i)
          if (!(is >> rec.phi[i])) throw FormatError("snapshot: truncated record regressor");
        s.knowledge.memory.emplace_back(index, std::move(rec));
      }
    } else {
      throw FormatError("snapshot: unknown key '" + key + "'");
    }
  }
  if (!saw_format || !saw_weights) throw FormatError("snapshot: missing format or weights");
  s.lattice.validate();
  if (static_cast<std::size_t>(s.knowledge.weights.size()) != s.lattice.total())
    throw FormatError("snapshot: weight count does not match lattice");
  return s;
}

inline void save_snapshot(const std::string& path, const SnapshotFile& s) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_snapshot(os, s);
}

inline SnapshotFile load_snapshot(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_snapshot(is);
}

}  // namespace rtpl
