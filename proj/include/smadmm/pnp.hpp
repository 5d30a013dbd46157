#ifndef SMADMM_PNP_HPP
#define SMADMM_PNP_HPP

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "kkt.hpp"
#include "oracle.hpp"
#include "problem.hpp"
#include "prox.hpp"
#include "schedules.hpp"
#include "solver.hpp"

namespace smadmm {

/// Denoiser D plugged in place of the y-prox.
///
/// gradient_step: D = I - grad g with grad g Lipschitz (constant L_g < 1).
/// prox_reference: D(z) = prox_{h/scale}(z).
/// custom: any map; no potential is available.
class Denoiser {
 public:
  enum class Kind { gradient_step, prox_reference, custom };

  static Denoiser gradient_step(std::function<double(const Vector&)> g,
                                std::function<Vector(const Vector&)> grad_g, double L_g) {
    detail::require(static_cast<bool>(g) && static_cast<bool>(grad_g),
                    "gradient_step: g and grad g are required");
    detail::require(L_g >= 0.0 && L_g < 1.0, "gradient_step: need 0 <= L_g < 1");
    Denoiser d;
    d.kind_ = Kind::gradient_step;
    d.g_ = std::move(g);
    d.grad_g_ = std::move(grad_g);
    d.L_g_ = L_g;
    return d;
  }

  /// g(x) = (1/2) x^T M x with symmetric PSD M, ||M|| < 1.
  static Denoiser quadratic(Matrix M) {
    detail::require(M.rows() == M.cols(), "quadratic denoiser: M must be square");
    detail::require((M - M.transpose()).norm() <= 1e-12 * std::max(1.0, M.norm()),
                    "quadratic denoiser: M must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
    double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    detail::require(lo >= -1e-12, "quadratic denoiser: M must be positive semidefinite");
    auto shared = std::make_shared<const Matrix>(std::move(M));
    Denoiser d = gradient_step([shared](const Vector& x) { return 0.5 * x.dot(*shared * x); },
                               [shared](const Vector& x) -> Vector { return *shared * x; },
                               std::max(hi, 0.0));
    d.M_ = shared;
    return d;
  }

  static Denoiser prox_reference(ProximableFunction h, double scale) {
    detail::require(scale > 0.0, "prox_reference: scale must be positive");
    Denoiser d;
    d.kind_ = Kind::prox_reference;
    d.h_ = std::make_shared<const ProximableFunction>(std::move(h));
    d.scale_ = scale;
    return d;
  }

  static Denoiser custom(std::function<Vector(const Vector&)> apply) {
    detail::require(static_cast<bool>(apply), "custom denoiser: apply is required");
    Denoiser d;
    d.kind_ = Kind::custom;
    d.apply_ = std::move(apply);
    return d;
  }

  Kind kind() const { return kind_; }
  double lipschitz_g() const { return L_g_; }
  const Matrix* quadratic_matrix() const { return M_.get(); }

  Vector apply(const Vector& z) const {
    switch (kind_) {
      case Kind::gradient_step:
        return z - grad_g_(z);
      case Kind::prox_reference:
        return h_->prox(z, scale_);
      case Kind::custom:
        break;
    }
    return apply_(z);
  }

  double g(const Vector& x) const {
    require_gs("g");
    return g_(x);
  }
  Vector grad_g(const Vector& x) const {
    require_gs("grad_g");
    return grad_g_(x);
  }

  /// D^{-1}(x) by the fixed point u <- x + grad g(u); nullopt if it does not converge.
  std::optional<Vector> inverse(const Vector& x, int max_iterations = 500,
                                double tolerance = 1e-10) const {
    require_gs("inverse");
    Vector u = x;
    for (int it = 0; it < max_iterations; ++it) {
      Vector next = x + grad_g_(u);
      double step = (next - u).norm();
      u = std::move(next);
      if (!u.allFinite()) return std::nullopt;
      if (step <= tolerance * std::max(1.0, u.norm())) return u;
    }
    return std::nullopt;
  }

  /// Max secant ratio of grad g over random pairs around `center`.
  double estimate_lipschitz(const Vector& center, double radius = 1.0, int pairs = 200,
                            std::uint64_t seed = 11) const {
    require_gs("estimate_lipschitz");
    return smadmm::estimate_lipschitz(grad_g_, center, radius, pairs, 1.0, seed);
  }

  /// Empty unless the sampled Lipschitz estimate of grad g comes close to 1.
  std::vector<std::string> contraction_warnings(const Vector& center, double radius = 1.0) const {
    std::vector<std::string> w;
    if (kind_ != Kind::gradient_step) return w;
    double est = estimate_lipschitz(center, radius);
    if (est >= 0.95) {
      w.push_back("denoiser: sampled Lipschitz constant of grad g is " + std::to_string(est) +
                  ", close to or above 1; the fixed-point inverse may fail");
    }
    return w;
  }

 private:
  void require_gs(const char* what) const {
    if (kind_ != Kind::gradient_step) {
      throw std::invalid_argument(std::string("denoiser: ") + what +
                                  " needs a gradient-step denoiser");
    }
  }

  Kind kind_ = Kind::custom;
  std::function<double(const Vector&)> g_;
  std::function<Vector(const Vector&)> grad_g_;
  std::function<Vector(const Vector&)> apply_;
  std::shared_ptr<const ProximableFunction> h_;
  std::shared_ptr<const Matrix> M_;
  double scale_ = 1.0;
  double L_g_ = 0.0;
};

inline Vector denoise(const Denoiser& d, const Vector& z) { return d.apply(z); }

/// phi(x) = g(D^{-1}(x)) - (1/2)||D^{-1}(x) - x||^2 on the image of D, so that
/// D = prox_phi. grad phi(x) = D^{-1}(x) - x.
class WeaklyConvexPotential {
 public:
  explicit WeaklyConvexPotential(Denoiser d) : d_(std::move(d)) {
    detail::require(d_.kind() == Denoiser::Kind::gradient_step,
                    "potential: needs a gradient-step denoiser");
  }

  /// nullopt when the inverse does not converge (x treated as outside the image).
  std::optional<double> value(const Vector& x) const {
    auto u = d_.inverse(x);
    if (!u) return std::nullopt;
    return d_.g(*u) - 0.5 * (*u - x).squaredNorm();
  }
  std::optional<Vector> gradient(const Vector& x) const {
    auto u = d_.inverse(x);
    if (!u) return std::nullopt;
    return Vector(*u - x);
  }
  double weak_convexity_modulus() const { return d_.lipschitz_g() / (d_.lipschitz_g() + 1.0); }
  double gradient_lipschitz_bound() const { return d_.lipschitz_g() / (1.0 - d_.lipschitz_g()); }
  const Denoiser& denoiser() const { return d_; }

 private:
  Denoiser d_;
};

struct ProxCheckOptions {
  double radius = 1e-3;
  int samples = 2000;
  int grid = 41;  ///< per-axis grid points for dim <= 2
  std::uint64_t seed = 5;
};

/// u = D(z) against a local search of (1/2)||u' - z||^2 + phi(u').
struct ProxCheckReport {
  bool inverse_converged = true;
  double objective_at_u = std::numeric_limits<double>::quiet_NaN();
  double best_nearby = std::numeric_limits<double>::quiet_NaN();
  double gap = std::numeric_limits<double>::quiet_NaN();  ///< max(obj(u) - best, 0)
  double stationarity = std::numeric_limits<double>::quiet_NaN();  ///< ||u - z + grad phi(u)||
};

inline ProxCheckReport verify_prox_property(const Denoiser& d, const Vector& z,
                                            const WeaklyConvexPotential& phi,
                                            const ProxCheckOptions& opt = {}) {
  ProxCheckReport rep;
  Vector u = d.apply(z);
  auto obj = [&](const Vector& w) -> std::optional<double> {
    auto f = phi.value(w);
    if (!f) return std::nullopt;
    return 0.5 * (w - z).squaredNorm() + *f;
  };
  auto ou = obj(u);
  auto gu = phi.gradient(u);
  if (!ou || !gu) {
    rep.inverse_converged = false;
    return rep;
  }
  rep.objective_at_u = *ou;
  rep.stationarity = (u - z + *gu).norm();
  double best = *ou;
  auto consider = [&](const Vector& w) {
    if (auto o = obj(w)) best = std::min(best, *o);
  };
  const Index n = u.size();
  if (n <= 2) {
    for (int i = 0; i < opt.grid; ++i) {
      double ti = -opt.radius + 2.0 * opt.radius * i / (opt.grid - 1);
      if (n == 1) {
        consider(u + Vector::Constant(1, ti));
        continue;
      }
      for (int j = 0; j < opt.grid; ++j) {
        double tj = -opt.radius + 2.0 * opt.radius * j / (opt.grid - 1);
        Vector w = u;
        w[0] += ti;
        w[1] += tj;
        consider(w);
      }
    }
  }
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> nd;
  for (int s = 0; s < opt.samples; ++s) {
    Vector dir(n);
    for (Index i = 0; i < n; ++i) dir[i] = nd(rng);
    double scale = opt.radius * std::pow(10.0, -3.0 * (s % 4) / 3.0);
    consider(u + scale * dir / dir.norm());
  }
  rep.best_nearby = best;
  rep.gap = std::max(*ou - best, 0.0);
  return rep;
}

/// Anchor of the denoiser step.
/// algorithm2: y = D(x - lambda/rho).
/// averaged:   y = D(((r - rho) y + rho (x - lambda/rho)) / r), r > rho.
enum class PnPAnchor { algorithm2, averaged };

struct PnPOptions {
  RunOptions run;
  PnPAnchor anchor = PnPAnchor::algorithm2;
  double r = 0.0;  ///< averaged anchor only
};

/// Stationarity of min F(x) + w phi(y) s.t. x - y = 0 (w = rho for algorithm2,
/// w = r for the averaged anchor):
///   dual2 = ||lambda - grad F(x)||^2, prox2 = ||lambda + w grad phi(y)||^2, feas2 = ||x - y||^2.
inline KKTResidual pnp_kkt_residual(const Vector& x, const Vector& y, const Vector& lambda,
                                    const Vector& grad, const WeaklyConvexPotential* phi,
                                    double weight) {
  KKTResidual r;
  r.dual2 = (lambda - grad).squaredNorm();
  r.feas2 = (x - y).squaredNorm();
  if (phi) {
    if (auto gp = phi->gradient(y)) r.prox2 = (lambda + weight * *gp).squaredNorm();
  }
  r.total2 = r.dual2 + r.prox2.value_or(0.0) + r.feas2;
  return r;
}

/// PnP-SMADMM on a consensus problem (A = I, B = -I, c = 0) with constant rho.
/// The trace reports the KKT residual of F + w phi when the denoiser has a potential.
inline RunResult pnp_run(const Problem& p, StochasticOracle& oracle, const Denoiser& d,
                         const Schedule& schedule, Index K, const PnPOptions& opt = {}) {
  if (!p.is_consensus()) {
    throw std::invalid_argument(
        "pnp_run: needs the consensus form A = I, B = -I, c = 0; use run() for general problems");
  }
  if (!schedule.rho_is_constant()) {
    throw ScheduleError("pnp_run: the penalty rho must be constant");
  }
  const double rho = schedule.at(1).rho;
  double weight = rho;
  HMetric H = HMetric::linearized();
  if (opt.anchor == PnPAnchor::averaged) {
    if (!(opt.r > rho)) {
      throw ScheduleError("pnp_run: averaged anchor needs r > rho so that H = (r - rho) I is PD");
    }
    weight = opt.r;
    H = HMetric::linearized_fixed(opt.r);
  }

  std::shared_ptr<const WeaklyConvexPotential> phi;
  if (d.kind() == Denoiser::Kind::gradient_step) phi = std::make_shared<WeaklyConvexPotential>(d);

  // h = w phi with prox_{h/w} = D.
  auto value = [phi, weight](const Vector& y) {
    if (!phi) return std::numeric_limits<double>::quiet_NaN();
    auto v = phi->value(y);
    return v ? weight * *v : std::numeric_limits<double>::infinity();
  };
  auto prox = [d](const Vector& z, double) { return d.apply(z); };
  Problem q(p.loss_ptr(), p.oracle_model(), ProximableFunction::custom(value, prox), p.A(), p.B(),
            p.c(), H);
  q.name = p.name;

  RunOptions ro = opt.run;
  if (ro.algorithm.empty()) ro.algorithm = "pnp_smadmm";
  if (opt.anchor == PnPAnchor::algorithm2) {
    ro.y_step = [d](const SolverState& s, double r) -> Vector {
      return d.apply(s.x - s.lambda / r);
    };
  }
  ro.kkt = [phi, weight](const SolverState& s, const Vector& g) {
    return pnp_kkt_residual(s.x, s.y, s.lambda, g, phi.get(), weight);
  };
  return run(q, oracle, schedule, K, ro);
}

}  // namespace smadmm

#endif  // SMADMM_PNP_HPP
