#ifndef SMADMM_PROBLEM_HPP
#define SMADMM_PROBLEM_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "common.hpp"
#include "linops.hpp"
#include "oracle.hpp"
#include "prox.hpp"
#include "schedules.hpp"

namespace smadmm {

/// Proximal metric H of the y-subproblem.
///
/// linearized: H = r I - rho B^T B with r = rho (1 + margin) ||B^T B|| re-derived
///             every iteration, or a fixed r (which must exceed rho ||B^T B||).
/// scaled_identity: H = s I; requires B = b I so the subproblem stays a prox.
struct HMetric {
  enum class Kind { linearized, scaled_identity };
  Kind kind = Kind::linearized;
  double margin = 0.05;
  std::optional<double> fixed_r;
  double scale = 1.0;

  static HMetric linearized(double margin = 0.05) {
    HMetric h;
    h.margin = margin;
    return h;
  }
  static HMetric linearized_fixed(double r) {
    HMetric h;
    h.fixed_r = r;
    return h;
  }
  static HMetric scaled_identity(double s) {
    HMetric h;
    h.kind = Kind::scaled_identity;
    h.scale = s;
    return h;
  }
};

/// Extreme eigenvalues of H at a given rho, plus r for the linearized form.
struct MetricValues {
  double r = 0.0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
};

/// How the problem's stochastic oracle is built from its loss.
struct OracleModel {
  OracleKind kind = OracleKind::deterministic;
  double sigma = 0.0;
  NoiseCoupling coupling = NoiseCoupling::shared;
};

/// min E[f(x, xi)] + h(y)  s.t.  A x + B y = c.
class Problem {
 public:
  Problem(std::shared_ptr<const SmoothLoss> loss, OracleModel model, ProximableFunction h,
          LinearMap A, LinearMap B, Vector c, HMetric H = HMetric::linearized())
      : loss_(std::move(loss)),
        model_(model),
        h_(std::move(h)),
        A_(std::move(A)),
        B_(std::move(B)),
        c_(std::move(c)),
        H_(H) {
    detail::require(loss_ != nullptr, "Problem: null loss");
    detail::require_dim(A_.cols(), loss_->dim(), "Problem: cols(A) vs dim(F)");
    detail::require_dim(B_.rows(), A_.rows(), "Problem: rows(B) vs rows(A)");
    detail::require_dim(c_.size(), A_.rows(), "Problem: length(c) vs rows(A)");
    if (model_.kind == OracleKind::finite_sum) {
      detail::require(dynamic_cast<const FiniteSumLoss*>(loss_.get()) != nullptr,
                      "Problem: finite_sum oracle needs a FiniteSumLoss");
    }
    if (H_.kind == HMetric::Kind::scaled_identity) {
      detail::require(H_.scale > 0.0, "Problem: H = sI requires s > 0");
      detail::require(B_.is_identity_like() && B_.identity_scale() != 0.0,
                      "Problem: H = sI requires B = bI with b != 0");
    } else {
      detail::require(H_.fixed_r.has_value() || H_.margin > 0.0,
                      "Problem: linearized H requires a positive margin");
    }
    gram_max_A_ = gram_max_eigenvalue(A_).value;
    gram_max_B_ = gram_max_eigenvalue(B_).value;
    if (A_.rows() >= A_.cols()) gram_min_A_ = std::max(0.0, gram_min_eigenvalue(A_).value);
    if (B_.rows() >= B_.cols()) {
      gram_min_B_ = std::max(0.0, gram_min_eigenvalue(B_).value);
    } else {
      gram_min_B_ = 0.0;
    }
  }

  Index n() const { return A_.cols(); }
  Index d() const { return B_.cols(); }
  Index p() const { return A_.rows(); }

  const SmoothLoss& loss() const { return *loss_; }
  std::shared_ptr<const SmoothLoss> loss_ptr() const { return loss_; }
  const OracleModel& oracle_model() const { return model_; }
  const ProximableFunction& h() const { return h_; }
  const LinearMap& A() const { return A_; }
  const LinearMap& B() const { return B_; }
  const Vector& c() const { return c_; }
  const HMetric& H() const { return H_; }

  /// ||A^T A||, ||B^T B|| and the smallest eigenvalues of A^T A and B^T B.
  double gram_max_A() const { return gram_max_A_; }
  double gram_min_A() const { return gram_min_A_; }
  double gram_max_B() const { return gram_max_B_; }
  double gram_min_B() const { return gram_min_B_; }
  double normA() const { return std::sqrt(gram_max_A_); }
  double normB() const { return std::sqrt(gram_max_B_); }

  StochasticOracle make_oracle(std::uint64_t seed) const {
    switch (model_.kind) {
      case OracleKind::finite_sum:
        return StochasticOracle::finite_sum(
            std::dynamic_pointer_cast<const FiniteSumLoss>(loss_), seed);
      case OracleKind::streaming_gaussian:
        return StochasticOracle::gaussian(loss_, model_.sigma, seed, model_.coupling);
      case OracleKind::deterministic:
        break;
    }
    return StochasticOracle::deterministic(loss_);
  }

  MetricValues metric(double rho) const {
    MetricValues m;
    if (H_.kind == HMetric::Kind::scaled_identity) {
      m.r = H_.scale;
      m.sigma_min = m.sigma_max = H_.scale;
      return m;
    }
    m.r = H_.fixed_r ? *H_.fixed_r : rho * (1.0 + H_.margin) * gram_max_B_;
    if (!(m.r > rho * gram_max_B_)) {
      throw ScheduleError("H = rI - rho B^T B is not positive definite: r = " + std::to_string(m.r) +
                          " <= rho ||B^T B|| = " + std::to_string(rho * gram_max_B_));
    }
    m.sigma_min = m.r - rho * gram_max_B_;
    m.sigma_max = m.r - rho * gram_min_B_;
    return m;
  }

  /// Objective reported in traces; defaults to F(x) + h(y).
  double objective(const Vector& x, const Vector& y) const {
    if (objective_) return objective_(x, y);
    return loss_->value(x) + h_.value(y);
  }
  void set_objective(std::function<double(const Vector&, const Vector&)> f) {
    objective_ = std::move(f);
  }

  /// Residual A x + B y - c.
  Vector residual(const Vector& x, const Vector& y) const { return A_.apply(x) + B_.apply(y) - c_; }

  /// L_rho(x, y, lambda) = F(x) + h(y) - <lambda, r> + (rho/2)||r||^2.
  double augmented_lagrangian(const Vector& x, const Vector& y, const Vector& lambda,
                              double rho) const {
    Vector r = residual(x, y);
    return loss_->value(x) + h_.value(y) - lambda.dot(r) + 0.5 * rho * r.squaredNorm();
  }

  bool is_consensus() const {
    return A_.kind() == LinearMap::Kind::identity &&
           B_.kind() == LinearMap::Kind::negated_identity && c_.isZero(0.0);
  }

  std::string name = "problem";

 private:
  std::shared_ptr<const SmoothLoss> loss_;
  OracleModel model_;
  ProximableFunction h_;
  LinearMap A_;
  LinearMap B_;
  Vector c_;
  HMetric H_;
  std::function<double(const Vector&, const Vector&)> objective_;
  double gram_max_A_ = 0.0;
  double gram_min_A_ = 0.0;
  double gram_max_B_ = 0.0;
  double gram_min_B_ = 0.0;
};

/// Iterate (x_k, y_k, lambda_k), the estimate v_k, and the parameters and
/// metric extremes of the step that produced the iterate.
struct SolverState {
  Vector x;
  Vector y;
  Vector lambda;
  Vector v;
  Index k = 0;
  IterationParams params;
  double phi_min_Q = 1.0;
  double phi_max_Q = 1.0;
  double sigma_min_H = 0.0;
  double sigma_max_H = 0.0;
};

}  // namespace smadmm

#endif  // SMADMM_PROBLEM_HPP
