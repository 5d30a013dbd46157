#ifndef SMADMM_SCHEDULES_HPP
#define SMADMM_SCHEDULES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "common.hpp"
#include "oracle.hpp"

namespace smadmm {

/// Problem-dependent inputs to the theory schedules.
struct ProblemConstants {
  double L = 0.0;
  double sigma_A = 0.0;
  double phi_min = 1.0;
  double phi_max = 1.0;
  double sigma_min_H = 1.0;
  double sigma_max_H = 1.0;
  double normA = 1.0;
  double normB = 1.0;
};

struct ScheduleConstants {
  double L = 0.0;
  double sigma_A = 0.0;
  double phi_min = 1.0;
  double phi_max = 1.0;
  double sigma_min_H = 1.0;
  double sigma_max_H = 1.0;
  double normA = 1.0;
  double normB = 1.0;
  double tau = 0.0;
  double c_a = 1.0;
  double c_rho = 1.0;
  double c_eta = 1.0;
  double c_nu = 1.0;
  double c_gamma = 0.0;
};

struct IterationParams {
  double rho = 1.0;
  double eta = 1.0;
  double a = 1.0;  ///< momentum a_{k+1} used for the estimator update after step k
  double nu = 0.0;
  double gamma = 0.0;

  bool operator==(const IterationParams&) const = default;
};

enum class Regime { constant, dynamic };

inline double tau_constant(double sigma_A, double phi_min, double phi_max) {
  return phi_min * phi_min * sigma_A / (40.0 * phi_max * phi_max) + sigma_A / 2.0;
}

namespace detail {

inline void require_spectra(const ProblemConstants& p) {
  if (!(p.sigma_A > 0.0)) {
    throw ScheduleError("schedule: sigma_A = " + std::to_string(p.sigma_A) +
                        " (constraint map A is rank deficient); theory schedules need sigma_A > 0");
  }
  if (!(p.phi_min > 0.0 && p.phi_max >= p.phi_min)) {
    throw ScheduleError("schedule: Q must be positive definite (phi_min > 0, phi_min <= phi_max)");
  }
  if (!(p.sigma_min_H > 0.0 && p.sigma_max_H >= p.sigma_min_H)) {
    throw ScheduleError("schedule: H must be positive definite");
  }
  if (!(p.normA > 0.0 && p.normB > 0.0) || p.L < 0.0) {
    throw ScheduleError("schedule: operator norms must be positive and L nonnegative");
  }
}

inline ScheduleConstants copy_problem(const ProblemConstants& p) {
  ScheduleConstants c;
  c.L = p.L;
  c.sigma_A = p.sigma_A;
  c.phi_min = p.phi_min;
  c.phi_max = p.phi_max;
  c.sigma_min_H = p.sigma_min_H;
  c.sigma_max_H = p.sigma_max_H;
  c.normA = p.normA;
  c.normB = p.normB;
  return c;
}

inline double required_c_a_constant(const ScheduleConstants& c, double tau) {
  double L2 = c.L * c.L;
  return std::max(((1.0 + 2.0 * L2) / 2.0 + 20.0 * L2 / c.sigma_A) * 2.0 / tau, 1.0);
}

inline double rho_term_smooth(const ScheduleConstants& c, double tau) {
  return (20.0 * c.L * c.L + 2.0 * c.sigma_A * c.L) / (c.sigma_A * tau);
}

inline double rho_term_metric(const ScheduleConstants& c, double tau) {
  return tau * c.sigma_max_H * c.sigma_max_H /
         (4.0 * c.normA * c.normA * c.normB * c.normB * c.sigma_min_H);
}

inline double dyn_rho_bound(const ScheduleConstants& c) {
  return 8.0 * c.L / c.sigma_A + 160.0 * c.L * c.L / (c.sigma_A * c.sigma_A) +
         c.normA * c.normB / (c.sigma_max_H * c.sigma_max_H);
}

inline double dyn_a_bound(const ScheduleConstants& c) {
  double den = 3.0 * c.c_gamma * c.sigma_A * c.c_rho;
  return (3.0 * c.c_nu * c.c_rho + 60.0 + 2.0 * c.c_gamma * c.sigma_A * c.c_rho) / den;
}

inline double dyn_eta_bound(const ScheduleConstants& c) {
  return c.sigma_A * c.c_rho / (std::sqrt(160.0) * c.phi_max);
}

inline double dyn_gamma_bound(const ScheduleConstants& c) {
  if (c.L == 0.0) return std::numeric_limits<double>::infinity();
  return c.sigma_A * c.c_rho / (16.0 * c.L * c.L);
}

}  // namespace detail

/// Constants of the constant-parameter regime: tau, c_a, c_rho (including the
/// H-metric term), and nu = c_a / rho.
inline ScheduleConstants constant_regime_constants(const ProblemConstants& p) {
  detail::require_spectra(p);
  ScheduleConstants c = detail::copy_problem(p);
  c.tau = tau_constant(c.sigma_A, c.phi_min, c.phi_max);
  c.c_a = detail::required_c_a_constant(c, c.tau);
  c.c_rho = std::max({detail::rho_term_smooth(c, c.tau), detail::rho_term_metric(c, c.tau), 1.0});
  c.c_nu = c.c_a;
  c.c_gamma = 0.0;
  c.c_eta = c.phi_min * c.sigma_A / (20.0 * c.phi_max * c.phi_max);
  return c;
}

/// Constants of the dynamic regime, each set to its bound.
inline ScheduleConstants dynamic_regime_constants(const ProblemConstants& p) {
  detail::require_spectra(p);
  ScheduleConstants c = detail::copy_problem(p);
  c.tau = tau_constant(c.sigma_A, c.phi_min, c.phi_max);
  c.c_rho = std::max(detail::dyn_rho_bound(c), 1.0);
  c.c_nu = 1.0 / (4.0 * c.sigma_A);
  c.c_gamma = c.L > 0.0 ? detail::dyn_gamma_bound(c) : c.sigma_A * c.c_rho;
  c.c_a = detail::dyn_a_bound(c);
  c.c_eta = detail::dyn_eta_bound(c);
  return c;
}

struct ConstantScheduleResult {
  IterationParams params;
  Index m = 1;
};

/// rho = c_rho K^{1/3}, a = min(c_a^2/rho^2, 1), eta = phi_min rho sigma_A / (20 phi_max^2),
/// m = ceil(rho).
inline ConstantScheduleResult constant_schedule(const ScheduleConstants& c, Index K) {
  if (K < 1) throw ScheduleError("constant_schedule: horizon K must be >= 1");
  if (!(c.sigma_A > 0.0)) {
    throw ScheduleError("constant_schedule: sigma_A = 0 (rank-deficient A); schedule rejected");
  }
  if (!(c.phi_min > 0.0 && c.phi_max > 0.0)) {
    throw ScheduleError("constant_schedule: Q must be positive definite");
  }
  ConstantScheduleResult out;
  double rho = c.c_rho * std::cbrt(static_cast<double>(K));
  out.params.rho = rho;
  out.params.a = std::min(c.c_a * c.c_a / (rho * rho), 1.0);
  out.params.eta = c.phi_min * rho * c.sigma_A / (20.0 * c.phi_max * c.phi_max);
  out.params.nu = c.c_nu / rho;
  out.params.gamma = c.c_gamma;
  out.m = static_cast<Index>(std::ceil(rho));
  return out;
}

/// rho_k = c_rho k^{1/3}, eta_k = c_eta k^{1/3}, a_{k+1} = min(c_a k^{-2/3}, 1),
/// nu_k = c_nu / rho_k, gamma_{k+1} = c_gamma k^{1/3}. Schedules are 1-indexed.
inline IterationParams dynamic_schedule(const ScheduleConstants& c, Index k) {
  if (k < 1) throw ScheduleError("dynamic_schedule: iteration index k must be >= 1");
  double kr = std::cbrt(static_cast<double>(k));
  IterationParams p;
  p.rho = c.c_rho * kr;
  p.eta = c.c_eta * kr;
  double raw_a = c.c_a / (kr * kr);
  if (!(raw_a > 0.0)) throw ScheduleError("dynamic_schedule: momentum must be positive");
  p.a = std::min(raw_a, 1.0);
  p.nu = c.c_nu / p.rho;
  p.gamma = c.c_gamma * kr;
  return p;
}

struct ConstantCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  std::string relation;  ///< ">=", "<=" or "=="
  bool passed = false;
};

struct ValidationReport {
  std::vector<ConstantCheck> checks;
  std::vector<std::string> warnings;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
  const ConstantCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

/// Re-derives every bound from the stored problem quantities and reports each
/// inequality separately.
inline ValidationReport validate_constants(const ScheduleConstants& c, Regime regime) {
  ValidationReport r;
  constexpr double rel = 1e-12;
  auto ge = [&](std::string name, double lhs, double rhs) {
    r.checks.push_back({std::move(name), lhs, rhs, ">=", lhs >= rhs - rel * std::abs(rhs)});
  };
  auto le = [&](std::string name, double lhs, double rhs) {
    r.checks.push_back({std::move(name), lhs, rhs, "<=", lhs <= rhs + rel * std::abs(rhs)});
  };

  ge("sigma_A > 0", c.sigma_A, std::numeric_limits<double>::min());
  ge("phi_min > 0", c.phi_min, std::numeric_limits<double>::min());
  le("phi_min <= phi_max", c.phi_min, c.phi_max);
  ge("sigma_min_H > 0", c.sigma_min_H, std::numeric_limits<double>::min());
  le("sigma_min_H <= sigma_max_H", c.sigma_min_H, c.sigma_max_H);
  if (!r.all_passed()) return r;

  double tau = tau_constant(c.sigma_A, c.phi_min, c.phi_max);
  r.checks.push_back({"tau", c.tau, tau, "==", std::abs(c.tau - tau) <= 1e-12 * std::abs(tau)});

  if (regime == Regime::constant) {
    ge("c_a", c.c_a, detail::required_c_a_constant(c, tau));
    ge("c_rho smooth term", c.c_rho, detail::rho_term_smooth(c, tau));
    ge("c_rho metric term", c.c_rho, detail::rho_term_metric(c, tau));
    ge("c_rho >= 1", c.c_rho, 1.0);
  } else {
    ge("c_rho", c.c_rho, detail::dyn_rho_bound(c));
    ge("c_nu", c.c_nu, 1.0 / (4.0 * c.sigma_A));
    le("c_gamma", c.c_gamma, detail::dyn_gamma_bound(c));
    ge("c_gamma > 0", c.c_gamma, std::numeric_limits<double>::min());
    ge("c_a", c.c_a, detail::dyn_a_bound(c));
    le("c_eta", c.c_eta, detail::dyn_eta_bound(c));
    if (c.c_eta <= 1.0) {
      r.warnings.push_back("c_eta <= 1: the dynamic-regime descent argument assumes eta_k > 1");
    }
  }
  return r;
}

/// Power-law rule value = clamp(coef * k^power, lo, hi).
struct PowerRule {
  double coef = 1.0;
  double power = 0.0;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();

  double at(Index k) const {
    double v = coef * std::pow(static_cast<double>(k), power);
    return std::clamp(v, lo, hi);
  }
};

/// User-supplied (rho, eta, a) rules bypassing the theory constants.
struct PracticalSchedule {
  PowerRule rho{1.0, 0.0};
  PowerRule eta{1.0, 0.0};
  PowerRule a{1.0, 0.0, 0.0, 1.0};
  Index m = 1;
  double c_nu = 0.0;
  double c_gamma = 0.0;
};

/// Per-iteration parameter source consumed by the solvers.
class Schedule {
 public:
  static Schedule constant(const ScheduleConstants& c, Index K) {
    Schedule s;
    auto res = constant_schedule(c, K);
    s.rule_ = Fixed{res.params};
    s.m_ = res.m;
    s.regime_ = "constant";
    return s;
  }
  static Schedule dynamic(const ScheduleConstants& c, Index m = 1) {
    Schedule s;
    s.rule_ = c;
    s.m_ = m;
    s.regime_ = "dynamic";
    return s;
  }
  static Schedule practical(const PracticalSchedule& p) {
    detail::require(p.m >= 1, "practical schedule: m must be >= 1");
    detail::require(p.a.hi <= 1.0, "practical schedule: momentum cap must be <= 1");
    Schedule s;
    s.rule_ = p;
    s.m_ = p.m;
    s.regime_ = "practical";
    return s;
  }
  /// Fixed (rho, eta, a) for every iteration.
  static Schedule fixed(double rho, double eta, double a, Index m = 1) {
    Schedule s;
    IterationParams p;
    p.rho = rho;
    p.eta = eta;
    p.a = a;
    s.rule_ = Fixed{p};
    s.m_ = m;
    s.regime_ = "fixed";
    return s;
  }

  /// Parameters for 1-indexed iteration k.
  IterationParams at(Index k) const {
    if (k < 1) throw ScheduleError("Schedule::at: iteration index must be >= 1");
    return std::visit(
        [&](const auto& r) -> IterationParams {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, Fixed>) {
            return r.p;
          } else if constexpr (std::is_same_v<T, ScheduleConstants>) {
            return dynamic_schedule(r, k);
          } else {
            IterationParams p;
            p.rho = r.rho.at(k);
            p.eta = r.eta.at(k);
            p.a = r.a.at(k);
            if (!(p.a > 0.0)) throw ScheduleError("practical schedule: momentum must be positive");
            p.nu = p.rho > 0.0 ? r.c_nu / p.rho : 0.0;
            p.gamma = r.c_gamma * std::cbrt(static_cast<double>(k));
            return p;
          }
        },
        rule_);
  }

  Index init_samples() const { return m_; }
  const std::string& regime() const { return regime_; }

  bool rho_is_constant() const {
    if (std::holds_alternative<Fixed>(rule_)) return true;
    if (auto* p = std::get_if<PracticalSchedule>(&rule_)) return p->rho.power == 0.0;
    return false;
  }

 private:
  struct Fixed {
    IterationParams p;
  };
  std::variant<Fixed, ScheduleConstants, PracticalSchedule> rule_ = Fixed{};
  Index m_ = 1;
  std::string regime_ = "fixed";
};

/// Smoothness estimate for a black-box gradient: max secant ratio over random
/// pairs around `center`, times a safety factor.
template <class GradientFn>
double estimate_lipschitz(GradientFn&& grad, const Vector& center, double radius = 1.0,
                          int pairs = 100, double safety = 1.5, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  double best = 0.0;
  const Index n = center.size();
  for (int t = 0; t < pairs; ++t) {
    Vector u(n), w(n);
    for (Index i = 0; i < n; ++i) {
      u[i] = center[i] + radius * nd(rng);
      w[i] = center[i] + radius * nd(rng);
    }
    double dx = (u - w).norm();
    if (dx == 0.0) continue;
    best = std::max(best, (grad(u) - grad(w)).norm() / dx);
  }
  return safety * best;
}

/// Uses the deterministic reference gradient when the oracle has one, otherwise a
/// large-batch mean from the diagnostic stream.
inline double estimate_lipschitz(StochasticOracle& oracle, const Vector& center,
                                 double radius = 1.0, int pairs = 100, double safety = 1.5,
                                 Index batch = 1000) {
  if (oracle.kind() != OracleKind::streaming_gaussian) {
    return estimate_lipschitz([&](const Vector& x) { return oracle.reference_gradient(x); },
                              center, radius, pairs, safety);
  }
  return estimate_lipschitz([&](const Vector& x) { return oracle.diagnostic_gradient(x, batch); },
                            center, radius, pairs, safety);
}

}  // namespace smadmm

#endif  // SMADMM_SCHEDULES_HPP
