#ifndef SMADMM_ESTIMATOR_HPP
#define SMADMM_ESTIMATOR_HPP

#include <utility>

#include "common.hpp"
#include "oracle.hpp"

namespace smadmm {

namespace detail {

/// v_new = g_new + (1 - a)(v_old - g_old), with g_new, g_old on a shared sample.
/// No range check on `a`; SPIDER-style recursion uses a = 0.
inline Vector recursive_step(StochasticOracle& oracle, const Vector& v_old, const Vector& x_old,
                             const Vector& x_new, double a, Index batch) {
  if (a == 1.0) return oracle.sample_gradient(x_new, batch);
  auto [g_new, g_old] = oracle.sample_pair(x_new, x_old, batch);
  return g_new + (1.0 - a) * (v_old - g_old);
}

}  // namespace detail

/// Momentum (STORM-type) gradient estimator
///   v_k = grad f(x_k, xi_k) + (1 - a_k)(v_{k-1} - grad f(x_{k-1}, xi_k)).
///
/// With a == 1 the old-point gradient has zero weight and is not queried, so the
/// update is sample-for-sample a plain stochastic gradient.
class MomentumEstimator {
 public:
  /// v_0 = mean of m stochastic gradients at x0.
  static MomentumEstimator init(StochasticOracle& oracle, const Vector& x0, Index m) {
    detail::require(m >= 1, "MomentumEstimator::init: m must be >= 1");
    MomentumEstimator est;
    est.v_ = oracle.sample_gradient(x0, m);
    est.x_prev_ = x0;
    return est;
  }

  void update(StochasticOracle& oracle, const Vector& x_new, double a, Index batch = 1) {
    if (!(a > 0.0 && a <= 1.0)) {
      throw std::invalid_argument("MomentumEstimator::update: a must lie in (0, 1], got " +
                                  std::to_string(a));
    }
    detail::require_dim(x_new.size(), v_.size(), "MomentumEstimator::update");
    v_ = detail::recursive_step(oracle, v_, x_prev_, x_new, a, batch);
    x_prev_ = x_new;
    a_next_ = a;
  }

  /// eps = grad F(x_prev) - v. Test harness only; the solver never sees grad F.
  Vector error_vector(const Vector& exact_grad) const {
    detail::require_dim(exact_grad.size(), v_.size(), "MomentumEstimator::error_vector");
    return exact_grad - v_;
  }

  const Vector& v() const { return v_; }
  const Vector& x_prev() const { return x_prev_; }
  double a_next() const { return a_next_; }

 private:
  Vector v_;
  Vector x_prev_;
  double a_next_ = 1.0;
};

}  // namespace smadmm

#endif  // SMADMM_ESTIMATOR_HPP
