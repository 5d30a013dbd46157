#ifndef SMADMM_TEST_UTIL_HPP
#define SMADMM_TEST_UTIL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <random>

#include <smadmm/common.hpp>

namespace testutil {

using smadmm::Index;
using smadmm::Matrix;
using smadmm::Vector;

inline Matrix gaussian(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = nd(rng);
  return m;
}

inline Vector gaussian(Index n, std::mt19937_64& rng) { return gaussian(n, 1, rng).col(0); }

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

/// Extreme eigenvalues by dense symmetric decomposition.
inline std::pair<double, double> eig_extremes(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

/// Central finite-difference gradient.
template <class F>
Vector fd_gradient(F&& f, const Vector& x, double h = 1e-6) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// FISTA on min 1/2 x^T M x - b^T x + tau ||x||_1 (a proximal-gradient reference).
inline Vector fista_quadratic_l1(const Matrix& M, const Vector& b, double tau, int iters = 200000,
                                 double tol = 1e-14) {
  double L = eig_extremes(M).second;
  Vector x = Vector::Zero(b.size()), z = x;
  double t = 1.0;
  for (int it = 0; it < iters; ++it) {
    Vector g = M * z - b;
    Vector u = z - g / L;
    Vector xn(u.size());
    for (Index i = 0; i < u.size(); ++i) {
      double s = tau / L;
      xn[i] = u[i] > s ? u[i] - s : (u[i] < -s ? u[i] + s : 0.0);
    }
    double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = xn + (t - 1.0) / tn * (xn - x);
    double step = (xn - x).norm();
    x = xn;
    t = tn;
    if (step < tol) break;
  }
  return x;
}

}  // namespace testutil

#endif  // SMADMM_TEST_UTIL_HPP
