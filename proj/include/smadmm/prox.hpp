#ifndef SMADMM_PROX_HPP
#define SMADMM_PROX_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>

#include "common.hpp"

namespace smadmm {

/// Convex h with a closed-form proximal map.
///
/// prox(z, r) returns argmin_u h(u) + (r/2)||u - z||^2, i.e. prox_{h/r}(z).
/// subgrad_dist2(w, y) returns dist^2(w, dh(y)) when the subdifferential is known.
class ProximableFunction {
 public:
  struct Zero {};
  struct L1 {
    Vector weights;  ///< per-coordinate; size 0 means the scalar `weight`
    double weight = 0.0;
  };
  struct Box {
    Vector lo, hi;
  };
  struct Quadratic {
    double mu = 0.0;
    Vector center;
  };
  struct Custom {
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&, double)> prox;
  };

  static ProximableFunction zero() { return ProximableFunction(Zero{}, "zero"); }
  static ProximableFunction l1(double weight) {
    detail::require(weight >= 0.0, "l1: weight must be nonnegative");
    return ProximableFunction(L1{Vector(), weight}, "l1");
  }
  static ProximableFunction weighted_l1(Vector weights) {
    detail::require((weights.array() >= 0.0).all(), "weighted_l1: weights must be nonnegative");
    return ProximableFunction(L1{std::move(weights), 0.0}, "l1");
  }
  static ProximableFunction box(Vector lo, Vector hi) {
    detail::require_dim(hi.size(), lo.size(), "box bounds");
    detail::require((lo.array() <= hi.array()).all(), "box: lo must not exceed hi");
    return ProximableFunction(Box{std::move(lo), std::move(hi)}, "box");
  }
  /// h(y) = (mu/2)||y - center||^2, mu >= 0.
  static ProximableFunction quadratic(double mu, Vector center) {
    detail::require(mu >= 0.0, "quadratic: mu must be nonnegative");
    return ProximableFunction(Quadratic{mu, std::move(center)}, "quadratic");
  }
  static ProximableFunction custom(std::function<double(const Vector&)> value,
                                   std::function<Vector(const Vector&, double)> prox) {
    detail::require(static_cast<bool>(prox), "custom: prox is required");
    return ProximableFunction(Custom{std::move(value), std::move(prox)}, "custom");
  }

  const std::string& name() const { return name_; }
  bool is_zero() const { return std::holds_alternative<Zero>(rep_); }

  /// Extended-real value (+inf outside the domain).
  double value(const Vector& y) const {
    return std::visit(
        [&](const auto& h) -> double {
          using T = std::decay_t<decltype(h)>;
          if constexpr (std::is_same_v<T, Zero>) {
            return 0.0;
          } else if constexpr (std::is_same_v<T, L1>) {
            if (h.weights.size() == 0) return h.weight * y.lpNorm<1>();
            detail::require_dim(y.size(), h.weights.size(), "l1 value");
            return h.weights.dot(y.cwiseAbs());
          } else if constexpr (std::is_same_v<T, Box>) {
            detail::require_dim(y.size(), h.lo.size(), "box value");
            bool inside = (y.array() >= h.lo.array()).all() && (y.array() <= h.hi.array()).all();
            return inside ? 0.0 : std::numeric_limits<double>::infinity();
          } else if constexpr (std::is_same_v<T, Quadratic>) {
            return 0.5 * h.mu * (y - center_of(h, y.size())).squaredNorm();
          } else {
            return h.value ? h.value(y) : std::numeric_limits<double>::quiet_NaN();
          }
        },
        rep_);
  }

  Vector prox(const Vector& z, double r) const {
    detail::require(r > 0.0, "prox: scale r must be positive");
    return std::visit(
        [&](const auto& h) -> Vector {
          using T = std::decay_t<decltype(h)>;
          if constexpr (std::is_same_v<T, Zero>) {
            return z;
          } else if constexpr (std::is_same_v<T, L1>) {
            Vector out(z.size());
            if (h.weights.size() != 0) detail::require_dim(z.size(), h.weights.size(), "l1 prox");
            for (Index i = 0; i < z.size(); ++i) {
              double t = (h.weights.size() == 0 ? h.weight : h.weights[i]) / r;
              out[i] = soft_threshold(z[i], t);
            }
            return out;
          } else if constexpr (std::is_same_v<T, Box>) {
            detail::require_dim(z.size(), h.lo.size(), "box prox");
            return z.cwiseMax(h.lo).cwiseMin(h.hi);
          } else if constexpr (std::is_same_v<T, Quadratic>) {
            return (r * z + h.mu * center_of(h, z.size())) / (r + h.mu);
          } else {
            return h.prox(z, r);
          }
        },
        rep_);
  }

  /// dist^2(w, dh(y)); nullopt when the subdifferential is not available.
  std::optional<double> subgrad_dist2(const Vector& w, const Vector& y) const {
    detail::require_dim(w.size(), y.size(), "subgrad_dist2");
    return std::visit(
        [&](const auto& h) -> std::optional<double> {
          using T = std::decay_t<decltype(h)>;
          if constexpr (std::is_same_v<T, Zero>) {
            return w.squaredNorm();
          } else if constexpr (std::is_same_v<T, L1>) {
            double s = 0.0;
            for (Index i = 0; i < y.size(); ++i) {
              double t = h.weights.size() == 0 ? h.weight : h.weights[i];
              double d = l1_coordinate_distance(w[i], y[i], t);
              s += d * d;
            }
            return s;
          } else if constexpr (std::is_same_v<T, Box>) {
            double s = 0.0;
            for (Index i = 0; i < y.size(); ++i) {
              double lo = h.lo[i], hi = h.hi[i], yi = y[i], wi = w[i];
              if (yi < lo || yi > hi) return std::numeric_limits<double>::infinity();
              double d;
              if (lo == hi) {
                d = 0.0;
              } else if (yi == lo) {
                d = std::max(wi, 0.0);  // normal cone (-inf, 0]
              } else if (yi == hi) {
                d = std::max(-wi, 0.0);  // normal cone [0, inf)
              } else {
                d = wi;
              }
              s += d * d;
            }
            return s;
          } else if constexpr (std::is_same_v<T, Quadratic>) {
            return (w - h.mu * (y - center_of(h, y.size()))).squaredNorm();
          } else {
            return std::nullopt;
          }
        },
        rep_);
  }

  static double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
  }

  /// |w - tau sign(y)| when y != 0, max(|w| - tau, 0) when y == 0.
  static double l1_coordinate_distance(double w, double y, double tau) {
    if (y > 0.0) return std::abs(w - tau);
    if (y < 0.0) return std::abs(w + tau);
    return std::max(std::abs(w) - tau, 0.0);
  }

 private:
  using Rep = std::variant<Zero, L1, Box, Quadratic, Custom>;

  ProximableFunction(Rep rep, std::string name) : rep_(std::move(rep)), name_(std::move(name)) {}

  static Vector center_of(const Quadratic& q, Index n) {
    return q.center.size() == 0 ? Vector::Zero(n) : q.center;
  }

  Rep rep_;
  std::string name_;
};

}  // namespace smadmm

#endif  // SMADMM_PROX_HPP
