#ifndef SMADMM_ORACLE_HPP
#define SMADMM_ORACLE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <utility>

#include "common.hpp"

namespace smadmm {

/// Smooth part F of the objective, used as the deterministic reference.
class SmoothLoss {
 public:
  virtual ~SmoothLoss() = default;
  virtual Index dim() const = 0;
  virtual double value(const Vector& x) const = 0;
  virtual Vector gradient(const Vector& x) const = 0;
  /// Smoothness constant of f(., xi) when known analytically.
  virtual std::optional<double> lipschitz() const { return std::nullopt; }
};

/// F(x) = (1/N) sum_i f_i(x).
class FiniteSumLoss : public SmoothLoss {
 public:
  virtual Index size() const = 0;
  virtual double component_value(Index i, const Vector& x) const = 0;
  /// out += weight * grad f_i(x)
  virtual void add_component_gradient(Index i, const Vector& x, double weight,
                                      Vector& out) const = 0;

  double value(const Vector& x) const override {
    double s = 0.0;
    for (Index i = 0; i < size(); ++i) s += component_value(i, x);
    return s / static_cast<double>(size());
  }
  Vector gradient(const Vector& x) const override {
    Vector g = Vector::Zero(dim());
    double w = 1.0 / static_cast<double>(size());
    for (Index i = 0; i < size(); ++i) add_component_gradient(i, x, w, g);
    return g;
  }
};

/// F(x) = 1/2 x^T M x - b^T x.
class QuadraticLoss final : public SmoothLoss {
 public:
  QuadraticLoss(Matrix m, Vector b) : m_(std::move(m)), b_(std::move(b)) {
    detail::require(m_.rows() == m_.cols(), "QuadraticLoss: M must be square");
    detail::require_dim(b_.size(), m_.rows(), "QuadraticLoss: b");
    lip_ = Eigen::SelfAdjointEigenSolver<Matrix>(m_, Eigen::EigenvaluesOnly)
               .eigenvalues()
               .cwiseAbs()
               .maxCoeff();
  }
  Index dim() const override { return m_.rows(); }
  double value(const Vector& x) const override { return 0.5 * x.dot(m_ * x) - b_.dot(x); }
  Vector gradient(const Vector& x) const override { return m_ * x - b_; }
  std::optional<double> lipschitz() const override { return lip_; }

  const Matrix& hessian() const { return m_; }
  const Vector& linear_term() const { return b_; }

 private:
  Matrix m_;
  Vector b_;
  double lip_ = 0.0;
};

/// f_i(x) = 1/2 (a_i^T x - b_i)^2 + (ridge/2)||x||^2.
class LeastSquaresSum final : public FiniteSumLoss {
 public:
  LeastSquaresSum(Matrix a, Vector b, double ridge = 0.0)
      : a_(std::move(a)), b_(std::move(b)), ridge_(ridge) {
    detail::require_dim(b_.size(), a_.rows(), "LeastSquaresSum: b");
    detail::require(a_.rows() > 0, "LeastSquaresSum: empty dataset");
    lip_ = a_.rowwise().squaredNorm().maxCoeff() + ridge_;
  }
  Index dim() const override { return a_.cols(); }
  Index size() const override { return a_.rows(); }
  double component_value(Index i, const Vector& x) const override {
    double r = a_.row(i).dot(x) - b_[i];
    return 0.5 * r * r + 0.5 * ridge_ * x.squaredNorm();
  }
  void add_component_gradient(Index i, const Vector& x, double w, Vector& out) const override {
    double r = a_.row(i).dot(x) - b_[i];
    out += (w * r) * a_.row(i).transpose() + (w * ridge_) * x;
  }
  Vector gradient(const Vector& x) const override {
    return a_.transpose() * (a_ * x - b_) / static_cast<double>(size()) + ridge_ * x;
  }
  std::optional<double> lipschitz() const override { return lip_; }

  const Matrix& design() const { return a_; }
  const Vector& targets() const { return b_; }
  double ridge() const { return ridge_; }

 private:
  Matrix a_;
  Vector b_;
  double ridge_;
  double lip_ = 0.0;
};

enum class OracleKind { finite_sum, streaming_gaussian, deterministic };

/// How the Gaussian model draws noise inside sample_pair.
enum class NoiseCoupling { shared, independent };

/// Stochastic first-order oracle with SFO accounting.
///
/// One query is one gradient of f(., xi) at one point. Diagnostic gradients
/// use a separate random stream and a separate counter so that reporting never
/// perturbs or inflates the algorithm's own sample path.
class StochasticOracle {
 public:
  static StochasticOracle deterministic(std::shared_ptr<const SmoothLoss> loss) {
    return StochasticOracle(OracleKind::deterministic, std::move(loss), nullptr, 0.0, 0);
  }

  /// grad f(x, xi) = grad F(x) + xi, xi ~ N(0, sigma^2/n I), so E||xi||^2 = sigma^2.
  static StochasticOracle gaussian(std::shared_ptr<const SmoothLoss> loss, double sigma,
                                   std::uint64_t seed,
                                   NoiseCoupling coupling = NoiseCoupling::shared) {
    detail::require(sigma >= 0.0, "gaussian oracle: sigma must be nonnegative");
    StochasticOracle o(OracleKind::streaming_gaussian, std::move(loss), nullptr, sigma, seed);
    o.coupling_ = coupling;
    return o;
  }

  /// xi is a uniformly drawn component index.
  static StochasticOracle finite_sum(std::shared_ptr<const FiniteSumLoss> loss,
                                     std::uint64_t seed) {
    detail::require(loss != nullptr, "finite_sum oracle: null loss");
    detail::require(loss->size() > 0, "finite_sum oracle: empty dataset");
    auto fs = loss;
    return StochasticOracle(OracleKind::finite_sum, std::move(loss), std::move(fs), 0.0, seed);
  }

  OracleKind kind() const { return kind_; }
  Index dim() const { return loss_->dim(); }
  double sigma() const { return sigma_; }
  std::uint64_t seed() const { return seed_; }
  NoiseCoupling coupling() const { return coupling_; }
  const SmoothLoss& loss() const { return *loss_; }
  const FiniteSumLoss* finite_sum_loss() const { return finite_sum_.get(); }
  Index num_components() const { return finite_sum_ ? finite_sum_->size() : 0; }

  /// Bound delta with ||grad f(x, xi)||^2 <= delta^2, if supplied. Metadata only.
  std::optional<double> gradient_bound() const { return delta_; }
  void set_gradient_bound(double delta) { delta_ = delta; }

  std::uint64_t query_count() const { return queries_; }
  std::uint64_t diagnostic_query_count() const { return diagnostic_queries_; }

  /// Mean of `batch` i.i.d. stochastic gradients at x.
  Vector sample_gradient(const Vector& x, Index batch = 1) {
    check_point(x);
    detail::require(batch >= 1, "sample_gradient: batch must be >= 1");
    Vector g = Vector::Zero(dim());
    if (kind_ == OracleKind::finite_sum) {
      double w = 1.0 / static_cast<double>(batch);
      for (Index b = 0; b < batch; ++b) finite_sum_->add_component_gradient(draw_index(rng_), x, w, g);
    } else {
      g = loss_->gradient(x);
      if (kind_ == OracleKind::streaming_gaussian) {
        Vector noise = Vector::Zero(dim());
        for (Index b = 0; b < batch; ++b) noise += draw_noise(rng_);
        g += noise / static_cast<double>(batch);
      }
    }
    queries_ += static_cast<std::uint64_t>(batch);
    return g;
  }

  /// Gradients at x_new and x_old evaluated on the same samples.
  std::pair<Vector, Vector> sample_pair(const Vector& x_new, const Vector& x_old, Index batch = 1) {
    check_point(x_new);
    check_point(x_old);
    detail::require(batch >= 1, "sample_pair: batch must be >= 1");
    Vector g_new = Vector::Zero(dim());
    Vector g_old = Vector::Zero(dim());
    if (kind_ == OracleKind::finite_sum) {
      double w = 1.0 / static_cast<double>(batch);
      for (Index b = 0; b < batch; ++b) {
        Index i = draw_index(rng_);
        finite_sum_->add_component_gradient(i, x_new, w, g_new);
        finite_sum_->add_component_gradient(i, x_old, w, g_old);
      }
    } else {
      g_new = loss_->gradient(x_new);
      g_old = loss_->gradient(x_old);
      if (kind_ == OracleKind::streaming_gaussian) {
        Vector n_new = Vector::Zero(dim());
        Vector n_old = Vector::Zero(dim());
        for (Index b = 0; b < batch; ++b) {
          Vector z = draw_noise(rng_);
          n_new += z;
          if (coupling_ == NoiseCoupling::shared) {
            n_old += z;
          } else {
            n_old += draw_noise(rng_);
          }
        }
        g_new += n_new / static_cast<double>(batch);
        g_old += n_old / static_cast<double>(batch);
      }
    }
    queries_ += 2 * static_cast<std::uint64_t>(batch);
    return {std::move(g_new), std::move(g_old)};
  }

  /// Full gradient for finite-sum (N queries) or deterministic (1 query) oracles.
  Vector full_gradient(const Vector& x) {
    check_point(x);
    if (kind_ == OracleKind::streaming_gaussian) {
      throw std::invalid_argument("full_gradient: streaming oracle has no finite-sum structure");
    }
    queries_ += kind_ == OracleKind::finite_sum ? static_cast<std::uint64_t>(num_components()) : 1;
    return loss_->gradient(x);
  }

  /// Exact grad F(x). Not an SFO query; for diagnostics and test harnesses.
  Vector reference_gradient(const Vector& x) const {
    check_point(x);
    return loss_->gradient(x);
  }
  double reference_value(const Vector& x) const { return loss_->value(x); }

  /// Mean of M stochastic gradients from the diagnostic stream.
  Vector diagnostic_gradient(const Vector& x, Index samples) {
    check_point(x);
    detail::require(samples >= 1, "diagnostic_gradient: samples must be >= 1");
    Vector g = Vector::Zero(dim());
    if (kind_ == OracleKind::finite_sum) {
      double w = 1.0 / static_cast<double>(samples);
      for (Index b = 0; b < samples; ++b)
        finite_sum_->add_component_gradient(draw_index(diag_rng_), x, w, g);
    } else {
      g = loss_->gradient(x);
      if (kind_ == OracleKind::streaming_gaussian) {
        Vector noise = Vector::Zero(dim());
        for (Index b = 0; b < samples; ++b) noise += draw_noise(diag_rng_);
        g += noise / static_cast<double>(samples);
      }
    }
    diagnostic_queries_ += static_cast<std::uint64_t>(samples);
    return g;
  }

 private:
  StochasticOracle(OracleKind kind, std::shared_ptr<const SmoothLoss> loss,
                   std::shared_ptr<const FiniteSumLoss> fs, double sigma, std::uint64_t seed)
      : kind_(kind),
        loss_(std::move(loss)),
        finite_sum_(std::move(fs)),
        sigma_(sigma),
        seed_(seed),
        rng_(seed),
        diag_rng_(seed ^ 0x9e3779b97f4a7c15ULL) {
    detail::require(loss_ != nullptr, "StochasticOracle: null loss");
  }

  void check_point(const Vector& x) const { detail::require_dim(x.size(), dim(), "oracle point"); }

  Index draw_index(std::mt19937_64& rng) const {
    std::uniform_int_distribution<Index> pick(0, finite_sum_->size() - 1);
    return pick(rng);
  }

  Vector draw_noise(std::mt19937_64& rng) const {
    Vector z(dim());
    if (sigma_ == 0.0) return Vector::Zero(dim());
    std::normal_distribution<double> nd(0.0, sigma_ / std::sqrt(static_cast<double>(dim())));
    for (Index i = 0; i < dim(); ++i) z[i] = nd(rng);
    return z;
  }

  OracleKind kind_;
  std::shared_ptr<const SmoothLoss> loss_;
  std::shared_ptr<const FiniteSumLoss> finite_sum_;
  double sigma_ = 0.0;
  std::uint64_t seed_ = 0;
  NoiseCoupling coupling_ = NoiseCoupling::shared;
  std::optional<double> delta_;
  std::mt19937_64 rng_;
  std::mt19937_64 diag_rng_;
  std::uint64_t queries_ = 0;
  std::uint64_t diagnostic_queries_ = 0;
};

}  // namespace smadmm

#endif  // SMADMM_ORACLE_HPP
