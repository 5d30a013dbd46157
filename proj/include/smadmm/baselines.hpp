#ifndef SMADMM_BASELINES_HPP
#define SMADMM_BASELINES_HPP

#include <string>
#include <utility>

#include "common.hpp"
#include "estimator.hpp"
#include "oracle.hpp"
#include "solver.hpp"

namespace smadmm {

/// One fresh stochastic gradient (SADMM).
inline Vector plain_update(StochasticOracle& oracle, const Vector& x, Index batch = 1) {
  return oracle.sample_gradient(x, batch);
}

/// grad f(x, xi) - grad f(x_snap, xi) + mu_snap on a shared sample.
inline Vector svrg_update(StochasticOracle& oracle, const Vector& x, const Vector& x_snap,
                          const Vector& mu_snap, Index batch = 1) {
  auto [g, g_snap] = oracle.sample_pair(x, x_snap, batch);
  return g - g_snap + mu_snap;
}

/// v_old + grad f(x_new, xi) - grad f(x_old, xi), the a = 0 recursion.
inline Vector spider_update(StochasticOracle& oracle, const Vector& x_new, const Vector& x_old,
                            const Vector& v_old, Index batch = 1) {
  return detail::recursive_step(oracle, v_old, x_old, x_new, 0.0, batch);
}

class PlainEstimator {
 public:
  PlainEstimator(Index m, Index batch = 1) : m_(m), batch_(batch) {}
  Vector start(StochasticOracle& o, const Vector& x0) { return o.sample_gradient(x0, m_); }
  Vector advance(StochasticOracle& o, const Vector&, const Vector& x_new, const Vector&,
                 const IterationParams&, Index) {
    return plain_update(o, x_new, batch_);
  }
  std::string name() const { return "sadmm"; }

 private:
  Index m_;
  Index batch_;
};

/// Snapshot refreshed at x_new whenever k % epoch_length == 0 (N queries); the
/// iterate after a refresh uses v = mu exactly.
class SvrgEstimator {
 public:
  SvrgEstimator(const StochasticOracle& o, Index epoch_length, Index batch = 1,
                double extrapolation = 0.0)
      : q_(epoch_length), batch_(batch), w_(extrapolation) {
    detail::require(o.kind() != OracleKind::streaming_gaussian,
                    "svrg: streaming oracle has no finite-sum structure for snapshot gradients");
    detail::require(q_ >= 1, "svrg: epoch length must be >= 1");
    detail::require(w_ >= 0.0 && w_ < 1.0, "asvrg: extrapolation weight must lie in [0, 1)");
  }
  Vector start(StochasticOracle& o, const Vector& x0) {
    snap_ = x0;
    mu_ = o.full_gradient(x0);
    return mu_;
  }
  Vector advance(StochasticOracle& o, const Vector& x_old, const Vector& x_new, const Vector&,
                 const IterationParams&, Index k) {
    if (k % q_ == 0) {
      snap_ = x_new;
      mu_ = o.full_gradient(x_new);
      return mu_;
    }
    if (w_ == 0.0) return svrg_update(o, x_new, snap_, mu_, batch_);
    Vector z = x_new + w_ * (x_new - x_old);
    return svrg_update(o, z, snap_, mu_, batch_);
  }
  std::string name() const { return w_ == 0.0 ? "svrg" : "asvrg"; }
  const Vector& snapshot() const { return snap_; }

 private:
  Index q_;
  Index batch_;
  double w_;
  Vector snap_;
  Vector mu_;
};

/// v_0 and every epoch refresh use `epoch_batch` samples. At k % q == 0 (k > 0)
/// the estimate at x_old is re-drawn before the recursive step, so each epoch of
/// q iterations costs epoch_batch + 2q queries.
class SpiderEstimator {
 public:
  SpiderEstimator(Index epoch_length, Index epoch_batch, Index batch = 1)
      : q_(epoch_length), big_(epoch_batch), batch_(batch) {
    detail::require(q_ >= 1 && big_ >= 1, "spider: epoch length and batch must be >= 1");
  }
  Vector start(StochasticOracle& o, const Vector& x0) { return o.sample_gradient(x0, big_); }
  Vector advance(StochasticOracle& o, const Vector& x_old, const Vector& x_new, const Vector& v_old,
                 const IterationParams&, Index k) {
    if (k > 1 && (k - 1) % q_ == 0) {
      Vector anchor = o.sample_gradient(x_old, big_);
      return spider_update(o, x_new, x_old, anchor, batch_);
    }
    return spider_update(o, x_new, x_old, v_old, batch_);
  }
  std::string name() const { return "spider"; }

 private:
  Index q_;
  Index big_;
  Index batch_;
};

enum class BaselineKind { sadmm, svrg, spider, asvrg };

struct BaselineConfig {
  BaselineKind kind = BaselineKind::sadmm;
  Index epoch_length = 100;
  Index epoch_batch = 100;
  double extrapolation = 0.5;  ///< asvrg only
};

inline std::string baseline_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::sadmm:
      return "sadmm";
    case BaselineKind::svrg:
      return "svrg";
    case BaselineKind::spider:
      return "spider";
    case BaselineKind::asvrg:
      return "asvrg";
  }
  return "?";
}

inline RunResult run_baseline(const Problem& p, StochasticOracle& oracle, const Schedule& schedule,
                              Index K, const BaselineConfig& cfg, const RunOptions& opt = {}) {
  switch (cfg.kind) {
    case BaselineKind::sadmm:
      return run_admm(p, oracle, schedule, K, opt,
                      PlainEstimator(schedule.init_samples(), opt.batch));
    case BaselineKind::svrg:
      return run_admm(p, oracle, schedule, K, opt,
                      SvrgEstimator(oracle, cfg.epoch_length, opt.batch, 0.0));
    case BaselineKind::asvrg:
      return run_admm(p, oracle, schedule, K, opt,
                      SvrgEstimator(oracle, cfg.epoch_length, opt.batch, cfg.extrapolation));
    case BaselineKind::spider:
      return run_admm(p, oracle, schedule, K, opt,
                      SpiderEstimator(cfg.epoch_length, cfg.epoch_batch, opt.batch));
  }
  throw std::invalid_argument("run_baseline: unknown kind");
}

}  // namespace smadmm

#endif  // SMADMM_BASELINES_HPP
