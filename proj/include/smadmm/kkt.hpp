#ifndef SMADMM_KKT_HPP
#define SMADMM_KKT_HPP

#include <cmath>
#include <optional>
#include <vector>

#include "common.hpp"
#include "oracle.hpp"
#include "problem.hpp"

namespace smadmm {

/// Source of grad F(x) in stationarity reporting. surrogate_v uses the solver's
/// own estimate v and is therefore only an estimate of the stationarity measure.
enum class GradMode { exact, surrogate_v, large_batch };

struct GradRequest {
  GradMode mode = GradMode::large_batch;
  Index samples = 1000;
};

/// Squared distance of 0 from the Lagrangian subdifferential, split into
///   dual2 = ||A^T lambda - grad F(x)||^2
///   prox2 = dist^2(B^T lambda, dh(y))   (missing when h has no routine)
///   feas2 = ||A x + B y - c||^2
struct KKTResidual {
  double dual2 = 0.0;
  std::optional<double> prox2;
  double feas2 = 0.0;
  double total2 = 0.0;

  bool complete() const { return prox2.has_value(); }
};

/// total2 sums the available components.
inline KKTResidual kkt_residual(const Problem& p, const Vector& x, const Vector& y,
                                const Vector& lambda, const Vector& grad) {
  KKTResidual r;
  r.dual2 = (p.A().adjoint_apply(lambda) - grad).squaredNorm();
  r.prox2 = p.h().subgrad_dist2(p.B().adjoint_apply(lambda), y);
  r.feas2 = p.residual(x, y).squaredNorm();
  r.total2 = r.dual2 + r.prox2.value_or(0.0) + r.feas2;
  return r;
}

inline Vector diagnostic_gradient(const SolverState& s, StochasticOracle& oracle, GradRequest req) {
  switch (req.mode) {
    case GradMode::exact:
      return oracle.reference_gradient(s.x);
    case GradMode::surrogate_v:
      return s.v;
    case GradMode::large_batch:
      break;
  }
  return oracle.diagnostic_gradient(s.x, req.samples);
}

inline KKTResidual kkt_residual(const SolverState& s, const Problem& p, StochasticOracle& oracle,
                                GradRequest req) {
  return kkt_residual(p, s.x, s.y, s.lambda, diagnostic_gradient(s, oracle, req));
}

/// dist(w, d(tau ||.||_1)(y)) as a Euclidean norm.
inline double l1_subgrad_dist(const Vector& w, const Vector& y, double tau) {
  detail::require(tau >= 0.0, "l1_subgrad_dist: tau must be nonnegative");
  detail::require_dim(w.size(), y.size(), "l1_subgrad_dist");
  double s = 0.0;
  for (Index i = 0; i < w.size(); ++i) {
    double d = ProximableFunction::l1_coordinate_distance(w[i], y[i], tau);
    s += d * d;
  }
  return std::sqrt(s);
}

/// Bounds on the stationarity terms at iterate k from the step k-1 -> k:
///   ||A^T lambda_k - grad F(x_k)||^2 <= 3||v_{k-1} - grad F(x_{k-1})||^2
///                                       + 3(L^2 + eta_{k-1}^2 phi_max^2)||dx||^2
///   dist^2(B^T lambda_k, dh(y_k)) <= 2 rho_{k-1}^2 ||B||^2 ||A||^2 ||dx||^2
///                                    + 2 sigma_max(H)^2 ||dy||^2
///   ||A x_k + B y_k - c||^2 = ||lambda_k - lambda_{k-1}||^2 / rho_{k-1}^2
struct Lemma45Report {
  Index k = 0;
  double dual_lhs = 0.0, dual_rhs = 0.0;
  std::optional<double> prox_lhs;
  double prox_rhs = 0.0;
  double feas_lhs = 0.0, feas_rhs = 0.0;

  double dual_margin() const { return dual_rhs - dual_lhs; }
  double prox_margin() const { return prox_lhs ? prox_rhs - *prox_lhs : 0.0; }
  bool holds(double slack) const {
    return dual_margin() >= -slack && prox_margin() >= -slack &&
           std::abs(feas_lhs - feas_rhs) <= slack + 1e-12 * std::max(feas_lhs, feas_rhs);
  }
};

/// `curr` carries the parameters and metric extremes of the step that produced it.
inline Lemma45Report lemma45_bounds_check(const Problem& p, const SolverState& prev,
                                          const Vector& grad_prev, const SolverState& curr,
                                          const Vector& grad_curr, double L) {
  Lemma45Report r;
  r.k = curr.k;
  double dx2 = (curr.x - prev.x).squaredNorm();
  double dy2 = (curr.y - prev.y).squaredNorm();
  double eta = curr.params.eta, rho = curr.params.rho;

  r.dual_lhs = (p.A().adjoint_apply(curr.lambda) - grad_curr).squaredNorm();
  r.dual_rhs = 3.0 * (prev.v - grad_prev).squaredNorm() +
               3.0 * (L * L + eta * eta * curr.phi_max_Q * curr.phi_max_Q) * dx2;

  r.prox_lhs = p.h().subgrad_dist2(p.B().adjoint_apply(curr.lambda), curr.y);
  r.prox_rhs = 2.0 * rho * rho * p.gram_max_B() * p.gram_max_A() * dx2 +
               2.0 * curr.sigma_max_H * curr.sigma_max_H * dy2;

  r.feas_lhs = p.residual(curr.x, curr.y).squaredNorm();
  r.feas_rhs = (curr.lambda - prev.lambda).squaredNorm() / (rho * rho);
  return r;
}

/// Runs the check over consecutive pairs of a recorded window.
template <class GradFn>
std::vector<Lemma45Report> lemma45_bounds_check(const Problem& p,
                                                const std::vector<SolverState>& window,
                                                GradFn&& exact_grad, double L) {
  std::vector<Lemma45Report> out;
  if (window.size() < 2) return out;
  Vector g_prev = exact_grad(window.front().x);
  for (std::size_t i = 1; i < window.size(); ++i) {
    Vector g_curr = exact_grad(window[i].x);
    out.push_back(lemma45_bounds_check(p, window[i - 1], g_prev, window[i], g_curr, L));
    g_prev = std::move(g_curr);
  }
  return out;
}

/// One-step augmented Lagrangian descent:
///   L_{rho'}(k+1) <= L_rho(k) + (1/rho + (rho' - rho)/(2 rho^2))||dlambda||^2
///                   + (nu/2)||eps_k||^2 - sigma_min(H)||dy||^2
///                   - (eta phi_min + sigma_A rho/2 - L/2 - 1/(2 nu))||dx||^2
/// with rho, eta, sigma_min(H), phi_min taken from the step k -> k+1.
struct DescentReport {
  Index k = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin() const { return rhs - lhs; }
};

inline DescentReport descent_check(const Problem& p, const SolverState& prev,
                                   const Vector& grad_prev, const SolverState& curr, double L,
                                   double sigma_A, double nu, double rho_next) {
  DescentReport r;
  r.k = curr.k;
  double rho = curr.params.rho, eta = curr.params.eta;
  r.lhs = p.augmented_lagrangian(curr.x, curr.y, curr.lambda, rho_next);
  double dl2 = (curr.lambda - prev.lambda).squaredNorm();
  double coef_x = eta * curr.phi_min_Q + sigma_A * rho / 2.0 - L / 2.0 - 1.0 / (2.0 * nu);
  r.rhs = p.augmented_lagrangian(prev.x, prev.y, prev.lambda, rho) +
          (1.0 / rho + (rho_next - rho) / (2.0 * rho * rho)) * dl2 +
          0.5 * nu * (grad_prev - prev.v).squaredNorm() -
          curr.sigma_min_H * (curr.y - prev.y).squaredNorm() -
          coef_x * (curr.x - prev.x).squaredNorm();
  return r;
}

}  // namespace smadmm

#endif  // SMADMM_KKT_HPP
