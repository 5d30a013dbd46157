#ifndef SMADMM_SOLVER_HPP
#define SMADMM_SOLVER_HPP

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "estimator.hpp"
#include "kkt.hpp"
#include "oracle.hpp"
#include "problem.hpp"
#include "schedules.hpp"
#include "trace.hpp"

namespace smadmm {

enum class XUpdateMode { linearized, exact };

/// argmin_y L_rho(x, y, lambda) + (1/2)||y - y_k||_H^2 as a prox of h.
inline Vector y_update(const Problem& p, const Vector& x, const Vector& y, const Vector& lambda,
                       double rho, const MetricValues& H) {
  if (p.H().kind == HMetric::Kind::scaled_identity) {
    double b = p.B().identity_scale();
    double s = H.r;
    double denom = rho * b * b + s;
    Vector anchor = (s * y + b * lambda - rho * b * (p.A().apply(x) - p.c())) / denom;
    return p.h().prox(anchor, denom);
  }
  Vector g = p.B().adjoint_apply(rho * p.residual(x, y) - lambda);
  return p.h().prox(y - g / H.r, H.r);
}

/// Rejects (rho, eta) for which Q = I - (rho/eta) A^T A is not positive definite.
inline void check_linearized_q(const Problem& p, double rho, double eta) {
  if (!(eta > rho * p.gram_max_A())) {
    throw ScheduleError("linearized x-update needs eta > rho * lambda_max(A^T A) so that "
                        "Q = I - (rho/eta) A^T A is positive definite; got eta = " +
                        std::to_string(eta) + ", rho * lambda_max(A^T A) = " +
                        std::to_string(rho * p.gram_max_A()) +
                        " (use the exact x-update with an explicit Q)");
  }
}

/// x_k - (1/eta)(v + rho A^T(A x_k + B y_{k+1} - c - lambda/rho)).
inline Vector x_update_linearized(const Problem& p, const Vector& x, const Vector& y_new,
                                  const Vector& lambda, const Vector& v, double rho, double eta) {
  Vector r = p.residual(x, y_new) - lambda / rho;
  return x - (v + rho * p.A().adjoint_apply(r)) / eta;
}

/// Solves (eta Q + rho A^T A) x = eta Q x_k - v - rho A^T(B y - c - lambda/rho).
/// The Cholesky factor is reused while (eta, rho) stay fixed.
class ExactXSolver {
 public:
  ExactXSolver(const Problem& p, Matrix Q) : Q_(std::move(Q)) {
    detail::require(Q_.rows() == p.n() && Q_.cols() == p.n(), "exact x-update: Q must be n x n");
    detail::require((Q_ - Q_.transpose()).norm() <= 1e-12 * std::max(1.0, Q_.norm()),
                    "exact x-update: Q must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(Q_, Eigen::EigenvaluesOnly);
    phi_min_ = es.eigenvalues().minCoeff();
    phi_max_ = es.eigenvalues().maxCoeff();
    if (!(phi_min_ > 0.0)) {
      throw NumericalError("exact x-update: Q is not positive definite (lambda_min = " +
                           std::to_string(phi_min_) + ")");
    }
    Matrix Ad = p.A().to_dense();
    AtA_ = Ad.transpose() * Ad;
  }

  Vector solve(const Problem& p, const Vector& x, const Vector& y_new, const Vector& lambda,
               const Vector& v, double rho, double eta) {
    if (rho != rho_ || eta != eta_) {
      sys_ = eta * Q_ + rho * AtA_;
      llt_.compute(sys_);
      if (llt_.info() != Eigen::Success) {
        throw NumericalError("exact x-update: eta Q + rho A^T A is singular");
      }
      rho_ = rho;
      eta_ = eta;
    }
    Vector rhs = eta * (Q_ * x) - v -
                 rho * p.A().adjoint_apply(p.B().apply(y_new) - p.c() - lambda / rho);
    Vector out = llt_.solve(rhs);
    double res = (sys_ * out - rhs).norm();
    double scale = std::max(rhs.norm(), sys_.norm() * out.norm());
    if (!(res <= 1e-10 * std::max(scale, std::numeric_limits<double>::min()))) {
      throw NumericalError("exact x-update: normal-equation residual " + std::to_string(res) +
                           " exceeds tolerance");
    }
    return out;
  }

  const Matrix& Q() const { return Q_; }
  double phi_min() const { return phi_min_; }
  double phi_max() const { return phi_max_; }

 private:
  Matrix Q_;
  Matrix AtA_;
  Matrix sys_;
  Eigen::LLT<Matrix> llt_;
  double rho_ = std::numeric_limits<double>::quiet_NaN();
  double eta_ = std::numeric_limits<double>::quiet_NaN();
  double phi_min_ = 1.0;
  double phi_max_ = 1.0;
};

inline Vector x_update_exact(const Problem& p, const Vector& x, const Vector& y_new,
                             const Vector& lambda, const Vector& v, double rho, double eta,
                             const Matrix& Q) {
  ExactXSolver s(p, Q);
  return s.solve(p, x, y_new, lambda, v, rho, eta);
}

/// lambda - rho (A x + B y - c).
inline Vector lambda_update(const Problem& p, const Vector& x_new, const Vector& y_new,
                            const Vector& lambda, double rho) {
  return lambda - rho * p.residual(x_new, y_new);
}

struct RunOptions {
  XUpdateMode x_update = XUpdateMode::linearized;
  std::optional<Matrix> Q;  ///< exact mode only; identity when absent
  GradRequest grad{};
  Index diagnostic_interval = 1;  ///< 0 disables; k = 1 and the last row are always diagnosed
  bool check_invariants = true;
  double dual_tolerance = 1e-8;
  double feasibility_tolerance = 1e-12;
  std::uint64_t max_queries = 0;  ///< stop once the SFO count reaches this; 0 = no budget
  Index batch = 1;                ///< samples per estimator step
  bool record_iterates = false;
  std::function<void(const SolverState&, const TraceRow&)> observer;
  std::optional<Vector> x0, y0, lambda0;
  std::string algorithm;  ///< overrides the estimator name in the trace
  /// Replaces y_update; receives the current state and rho_k.
  std::function<Vector(const SolverState&, double)> y_step;
  /// Replaces kkt_residual; receives the new state and the diagnostic gradient at x.
  std::function<KKTResidual(const SolverState&, const Vector&)> kkt;
};

struct RunResult {
  SolverState state;
  Trace trace;
  std::optional<Index> best_k;
  double best_kkt = std::numeric_limits<double>::quiet_NaN();
  std::optional<SolverState> best_state;
  std::uint64_t total_queries = 0;
  std::uint64_t diagnostic_queries = 0;
  double wall_time_s = 0.0;
  std::vector<SolverState> iterates;  ///< k = 0..K when record_iterates is set
  double max_dual_identity_error = 0.0;
  double max_feasibility_identity_error = 0.0;

  bool aborted() const { return trace.aborted_at.has_value(); }
};

/// Gradient estimator used by run_admm:
///   start(oracle, x0)                         -> v_0
///   advance(oracle, x_old, x_new, v_old, params, k) -> v at x_new
///   name()
template <class E>
concept GradientEstimator = requires(E e, StochasticOracle& o, const Vector& x,
                                     const IterationParams& p, Index k) {
  { e.start(o, x) } -> std::convertible_to<Vector>;
  { e.advance(o, x, x, x, p, k) } -> std::convertible_to<Vector>;
  { e.name() } -> std::convertible_to<std::string>;
};

/// Momentum estimator driven by the schedule's a_{k+1}.
class StormEstimator {
 public:
  StormEstimator(Index m, Index batch = 1) : m_(m), batch_(batch) {}
  Vector start(StochasticOracle& o, const Vector& x0) {
    est_ = MomentumEstimator::init(o, x0, m_);
    return est_.v();
  }
  Vector advance(StochasticOracle& o, const Vector&, const Vector& x_new, const Vector&,
                 const IterationParams& p, Index) {
    est_.update(o, x_new, p.a, batch_);
    return est_.v();
  }
  std::string name() const { return "smadmm"; }

 private:
  Index m_;
  Index batch_;
  MomentumEstimator est_;
};

namespace detail {

inline double dual_identity_error(const Problem& p, const Vector& x_old, const Vector& x_new,
                                  const Vector& lambda_new, const Vector& v, double rho, double eta,
                                  const ExactXSolver* exact) {
  Vector dx = x_old - x_new;
  Vector etaQdx = exact ? Vector(eta * (exact->Q() * dx))
                        : Vector(eta * dx - rho * p.A().gram_apply(dx));
  Vector err = p.A().adjoint_apply(lambda_new) - v + etaQdx;
  return err.norm() / (1.0 + v.norm());
}

/// | ||r_new|| - ||dlambda||/rho | relative to ||r_new|| + (||lambda|| + ||lambda_new||)/rho,
/// the scale at which the subtraction lambda_new - lambda is rounded.
inline double feasibility_identity_error(const Problem& p, const Vector& x_new,
                                         const Vector& y_new, const Vector& lambda,
                                         const Vector& lambda_new, double rho) {
  double rn = p.residual(x_new, y_new).norm();
  double dl = (lambda_new - lambda).norm() / rho;
  double scale = rn + (lambda.norm() + lambda_new.norm()) / rho;
  return scale > 0.0 ? std::abs(rn - dl) / scale : 0.0;
}

}  // namespace detail

/// Shared y/x/lambda loop; `est` supplies the gradient estimates.
///
/// Iteration k = 1..K uses params = schedule.at(k) for its y/x/lambda steps and
/// params.a for the estimator update that follows. Trace row k holds the state
/// after iteration k.
template <GradientEstimator Estimator>
RunResult run_admm(const Problem& p, StochasticOracle& oracle, const Schedule& schedule, Index K,
                   const RunOptions& opt, Estimator est) {
  if (K < 1) throw std::invalid_argument("run: horizon K must be >= 1");
  detail::require(opt.batch >= 1, "run: batch must be >= 1");
  detail::require_dim(oracle.dim(), p.n(), "run: oracle dimension");
  auto t0 = std::chrono::steady_clock::now();

  RunResult res;
  res.trace.algorithm = opt.algorithm.empty() ? est.name() : opt.algorithm;

  std::optional<ExactXSolver> exact;
  if (opt.x_update == XUpdateMode::exact) {
    exact.emplace(p, opt.Q ? *opt.Q : Matrix(Matrix::Identity(p.n(), p.n())));
  }

  SolverState s;
  s.x = opt.x0 ? *opt.x0 : Vector(Vector::Zero(p.n()));
  s.y = opt.y0 ? *opt.y0 : Vector(Vector::Zero(p.d()));
  s.lambda = opt.lambda0 ? *opt.lambda0 : Vector(Vector::Zero(p.p()));
  detail::require_dim(s.x.size(), p.n(), "run: x0");
  detail::require_dim(s.y.size(), p.d(), "run: y0");
  detail::require_dim(s.lambda.size(), p.p(), "run: lambda0");
  s.v = est.start(oracle, s.x);
  s.k = 0;
  if (opt.record_iterates) res.iterates.push_back(s);

  const std::uint64_t diag0 = oracle.diagnostic_query_count();
  double rho_prev = std::numeric_limits<double>::quiet_NaN();
  double eta_prev = std::numeric_limits<double>::quiet_NaN();
  MetricValues H;

  for (Index k = 1; k <= K; ++k) {
    IterationParams prm = schedule.at(k);
    if (prm.rho != rho_prev || prm.eta != eta_prev) {
      detail::require(prm.rho > 0.0 && prm.eta > 0.0, "run: rho and eta must be positive");
      H = p.metric(prm.rho);
      if (!exact) {
        check_linearized_q(p, prm.rho, prm.eta);
        s.phi_min_Q = 1.0 - prm.rho / prm.eta * p.gram_max_A();
        s.phi_max_Q = 1.0 - prm.rho / prm.eta * p.gram_min_A();
      } else {
        s.phi_min_Q = exact->phi_min();
        s.phi_max_Q = exact->phi_max();
      }
      rho_prev = prm.rho;
      eta_prev = prm.eta;
    }

    Vector y_new = opt.y_step ? opt.y_step(s, prm.rho) : y_update(p, s.x, s.y, s.lambda, prm.rho, H);
    Vector x_new = exact ? exact->solve(p, s.x, y_new, s.lambda, s.v, prm.rho, prm.eta)
                         : x_update_linearized(p, s.x, y_new, s.lambda, s.v, prm.rho, prm.eta);
    Vector lambda_new = lambda_update(p, x_new, y_new, s.lambda, prm.rho);

    TraceRow row;
    row.k = k;
    row.rho = prm.rho;
    row.eta = prm.eta;
    row.a = prm.a;

    if (opt.check_invariants) {
      double de = detail::dual_identity_error(p, s.x, x_new, lambda_new, s.v, prm.rho, prm.eta,
                                              exact ? &*exact : nullptr);
      double fe = detail::feasibility_identity_error(p, x_new, y_new, s.lambda, lambda_new, prm.rho);
      res.max_dual_identity_error = std::max(res.max_dual_identity_error, de);
      res.max_feasibility_identity_error = std::max(res.max_feasibility_identity_error, fe);
      if (!(de <= opt.dual_tolerance)) row.invariant_flags |= kDualIdentityViolated;
      if (!(fe <= opt.feasibility_tolerance)) row.invariant_flags |= kFeasibilityIdentityViolated;
    }

    bool finite = x_new.allFinite() && y_new.allFinite() && lambda_new.allFinite();
    Vector v_new;
    if (finite) {
      v_new = est.advance(oracle, s.x, x_new, s.v, prm, k);
      finite = v_new.allFinite();
    }
    row.oracle_queries = oracle.query_count();
    if (!finite) {
      row.invariant_flags |= kNonFinite;
      res.trace.rows.push_back(row);
      res.trace.aborted_at = k;
      res.trace.abort_reason = "non-finite iterate at k = " + std::to_string(k);
      break;
    }

    s.x = std::move(x_new);
    s.y = std::move(y_new);
    s.lambda = std::move(lambda_new);
    s.v = std::move(v_new);
    s.k = k;
    s.params = prm;
    s.sigma_min_H = H.sigma_min;
    s.sigma_max_H = H.sigma_max;

    bool budget_hit = opt.max_queries > 0 && oracle.query_count() >= opt.max_queries;
    bool last = k == K || budget_hit;
    bool diag = opt.diagnostic_interval > 0 &&
                (k == 1 || last || k % opt.diagnostic_interval == 0);
    if (diag) {
      Vector g = diagnostic_gradient(s, oracle, opt.grad);
      KKTResidual r = opt.kkt ? opt.kkt(s, g) : kkt_residual(p, s.x, s.y, s.lambda, g);
      row.objective = p.objective(s.x, s.y);
      row.aug_lagrangian = p.augmented_lagrangian(s.x, s.y, s.lambda, prm.rho);
      row.dual_residual2 = r.dual2;
      row.feasibility2 = r.feas2;
      if (r.prox2) row.prox_residual2 = *r.prox2;
      row.kkt_residual2 = r.total2;
      if (!res.best_k || r.total2 < res.best_kkt) {
        res.best_k = k;
        res.best_kkt = r.total2;
        res.best_state = s;
      }
    }
    res.trace.rows.push_back(row);
    if (opt.record_iterates) res.iterates.push_back(s);
    if (opt.observer) opt.observer(s, row);
    if (budget_hit) break;
  }

  res.state = std::move(s);
  res.total_queries = oracle.query_count();
  res.diagnostic_queries = oracle.diagnostic_query_count() - diag0;
  res.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

/// SMADMM with the momentum estimator; v_0 uses schedule.init_samples() samples.
inline RunResult run(const Problem& p, StochasticOracle& oracle, const Schedule& schedule, Index K,
                     const RunOptions& opt = {}) {
  return run_admm(p, oracle, schedule, K, opt, StormEstimator(schedule.init_samples(), opt.batch));
}

inline RunResult run(const Problem& p, const Schedule& schedule, Index K, std::uint64_t seed,
                     const RunOptions& opt = {}) {
  StochasticOracle oracle = p.make_oracle(seed);
  return run(p, oracle, schedule, K, opt);
}

}  // namespace smadmm

#endif  // SMADMM_SOLVER_HPP
