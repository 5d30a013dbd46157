#ifndef SMADMM_TRACE_HPP
#define SMADMM_TRACE_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"

namespace smadmm {

/// Bits of TraceRow::invariant_flags.
enum InvariantFlag : unsigned {
  kDualIdentityViolated = 1u,
  kFeasibilityIdentityViolated = 2u,
  kNonFinite = 4u,
};

/// One iteration. Diagnostics not evaluated at this k are NaN.
struct TraceRow {
  Index k = 0;
  double rho = 0.0;
  double eta = 0.0;
  double a = 0.0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double aug_lagrangian = std::numeric_limits<double>::quiet_NaN();
  double kkt_residual2 = std::numeric_limits<double>::quiet_NaN();
  double feasibility2 = std::numeric_limits<double>::quiet_NaN();
  double dual_residual2 = std::numeric_limits<double>::quiet_NaN();
  double prox_residual2 = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t oracle_queries = 0;
  unsigned invariant_flags = 0;

  bool has_kkt() const { return std::isfinite(kkt_residual2); }
};

struct Trace {
  std::string algorithm = "smadmm";
  std::vector<TraceRow> rows;
  std::optional<Index> aborted_at;
  std::string abort_reason;

  /// Smallest recorded KKT residual and its k.
  std::optional<std::pair<Index, double>> best_kkt() const {
    std::optional<std::pair<Index, double>> best;
    for (const auto& r : rows) {
      if (!r.has_kkt()) continue;
      if (!best || r.kkt_residual2 < best->second) best = std::make_pair(r.k, r.kkt_residual2);
    }
    return best;
  }
};

inline const char* trace_csv_header() {
  return "algorithm,k,rho,eta,a,objective,aug_lagrangian,kkt_residual2,feasibility2,"
         "dual_residual2,prox_residual2,oracle_queries,invariant_flags";
}

namespace detail {

inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

}  // namespace detail

inline void write_trace_csv(std::ostream& os, const Trace& t) {
  os << trace_csv_header() << '\n';
  for (const auto& r : t.rows) {
    os << t.algorithm << ',' << r.k << ',' << detail::fmt17(r.rho) << ',' << detail::fmt17(r.eta)
       << ',' << detail::fmt17(r.a) << ',' << detail::fmt17(r.objective) << ','
       << detail::fmt17(r.aug_lagrangian) << ',' << detail::fmt17(r.kkt_residual2) << ','
       << detail::fmt17(r.feasibility2) << ',' << detail::fmt17(r.dual_residual2) << ','
       << detail::fmt17(r.prox_residual2) << ',' << r.oracle_queries << ',' << r.invariant_flags
       << '\n';
  }
}

/// Inverse of write_trace_csv. Errors name the offending line.
inline Trace read_trace_csv(std::istream& is) {
  Trace t;
  std::string line;
  if (!std::getline(is, line) || line != trace_csv_header()) {
    throw std::invalid_argument("trace: missing or unexpected header");
  }
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 13) {
      throw std::invalid_argument("trace line " + std::to_string(lineno) + ": expected 13 fields");
    }
    try {
      TraceRow r;
      t.algorithm = f[0];
      r.k = std::stoll(f[1]);
      r.rho = detail::parse_double(f[2]);
      r.eta = detail::parse_double(f[3]);
      r.a = detail::parse_double(f[4]);
      r.objective = detail::parse_double(f[5]);
      r.aug_lagrangian = detail::parse_double(f[6]);
      r.kkt_residual2 = detail::parse_double(f[7]);
      r.feasibility2 = detail::parse_double(f[8]);
      r.dual_residual2 = detail::parse_double(f[9]);
      r.prox_residual2 = detail::parse_double(f[10]);
      r.oracle_queries = std::stoull(f[11]);
      r.invariant_flags = static_cast<unsigned>(std::stoul(f[12]));
      t.rows.push_back(r);
    } catch (const std::exception& e) {
      throw std::invalid_argument("trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return t;
}

}  // namespace smadmm

#endif  // SMADMM_TRACE_HPP
