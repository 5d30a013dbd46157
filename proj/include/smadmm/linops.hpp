#ifndef SMADMM_LINOPS_HPP
#define SMADMM_LINOPS_HPP

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "common.hpp"

namespace smadmm {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

/// Immutable linear operator used for A, B, Q and H. Copies share storage.
class LinearMap {
 public:
  enum class Kind { dense, sparse, identity, negated_identity, scaled_identity, stack };

  static LinearMap dense(Matrix m) {
    Index r = m.rows(), c = m.cols();
    return LinearMap(r, c, Dense{std::move(m)});
  }

  /// Duplicate (row, col) entries are summed.
  static LinearMap sparse(Index rows, Index cols, std::span<const Triplet> entries) {
    SparseMatrix m(rows, cols);
    m.setFromTriplets(entries.begin(), entries.end());
    m.makeCompressed();
    return LinearMap(rows, cols, Sparse{std::move(m)});
  }

  static LinearMap sparse(SparseMatrix m) {
    m.makeCompressed();
    Index r = m.rows(), c = m.cols();
    return LinearMap(r, c, Sparse{std::move(m)});
  }

  static LinearMap identity(Index n) { return LinearMap(n, n, Scaled{1.0}, Kind::identity); }
  static LinearMap negated_identity(Index n) {
    return LinearMap(n, n, Scaled{-1.0}, Kind::negated_identity);
  }
  static LinearMap scaled_identity(Index n, double s) {
    return LinearMap(n, n, Scaled{s}, Kind::scaled_identity);
  }

  /// [blocks[0]; blocks[1]; ...]; all blocks must share the column count.
  static LinearMap vstack(std::vector<LinearMap> blocks) {
    detail::require(!blocks.empty(), "vstack: no blocks");
    Index cols = blocks.front().cols();
    Index rows = 0;
    for (const auto& b : blocks) {
      detail::require_dim(b.cols(), cols, "vstack: block columns");
      rows += b.rows();
    }
    return LinearMap(rows, cols, Stack{std::move(blocks)});
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Kind kind() const { return kind_; }

  /// True for identity, negated identity and scaled identity.
  bool is_identity_like() const {
    return kind_ == Kind::identity || kind_ == Kind::negated_identity ||
           kind_ == Kind::scaled_identity;
  }
  double identity_scale() const {
    detail::require(is_identity_like(), "identity_scale: map is not identity-like");
    return std::get<Scaled>(*rep_).s;
  }

  Vector apply(const Vector& u) const {
    detail::require_dim(u.size(), cols_, "LinearMap::apply");
    Vector out(rows_);
    apply_into(u, out);
    return out;
  }

  Vector adjoint_apply(const Vector& w) const {
    detail::require_dim(w.size(), rows_, "LinearMap::adjoint_apply");
    Vector out(cols_);
    adjoint_into(w, out);
    return out;
  }

  /// A^T A u without forming the Gram matrix.
  Vector gram_apply(const Vector& u) const { return adjoint_apply(apply(u)); }

  Matrix to_dense() const {
    return std::visit(
        [&](const auto& r) -> Matrix {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, Dense>) {
            return r.m;
          } else if constexpr (std::is_same_v<T, Sparse>) {
            return Matrix(r.m);
          } else if constexpr (std::is_same_v<T, Scaled>) {
            return r.s * Matrix::Identity(rows_, cols_);
          } else {
            Matrix out(rows_, cols_);
            Index off = 0;
            for (const auto& b : r.blocks) {
              out.middleRows(off, b.rows()) = b.to_dense();
              off += b.rows();
            }
            return out;
          }
        },
        *rep_);
  }

  SparseMatrix to_sparse() const {
    return std::visit(
        [&](const auto& r) -> SparseMatrix {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, Dense>) {
            return r.m.sparseView();
          } else if constexpr (std::is_same_v<T, Sparse>) {
            return r.m;
          } else if constexpr (std::is_same_v<T, Scaled>) {
            SparseMatrix m(rows_, cols_);
            m.setIdentity();
            return r.s * m;
          } else {
            std::vector<Triplet> t;
            Index off = 0;
            for (const auto& b : r.blocks) {
              SparseMatrix bs = b.to_sparse();
              for (Index i = 0; i < bs.outerSize(); ++i)
                for (SparseMatrix::InnerIterator it(bs, i); it; ++it)
                  t.emplace_back(off + it.row(), it.col(), it.value());
              off += b.rows();
            }
            SparseMatrix m(rows_, cols_);
            m.setFromTriplets(t.begin(), t.end());
            return m;
          }
        },
        *rep_);
  }

 private:
  struct Dense {
    Matrix m;
  };
  struct Sparse {
    SparseMatrix m;
  };
  struct Scaled {
    double s;
  };
  struct Stack {
    std::vector<LinearMap> blocks;
  };
  using Rep = std::variant<Dense, Sparse, Scaled, Stack>;

  template <class R>
  LinearMap(Index rows, Index cols, R r)
      : rows_(rows), cols_(cols), rep_(std::make_shared<const Rep>(std::move(r))) {
    if constexpr (std::is_same_v<R, Dense>) kind_ = Kind::dense;
    if constexpr (std::is_same_v<R, Sparse>) kind_ = Kind::sparse;
    if constexpr (std::is_same_v<R, Stack>) kind_ = Kind::stack;
  }
  LinearMap(Index rows, Index cols, Scaled r, Kind k)
      : rows_(rows), cols_(cols), kind_(k), rep_(std::make_shared<const Rep>(r)) {}

  void apply_into(const Vector& u, Vector& out) const {
    std::visit(
        [&](const auto& r) {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, Dense> || std::is_same_v<T, Sparse>) {
            out.noalias() = r.m * u;
          } else if constexpr (std::is_same_v<T, Scaled>) {
            out = r.s * u;
          } else {
            Index off = 0;
            for (const auto& b : r.blocks) {
              Vector part(b.rows());
              b.apply_into(u, part);
              out.segment(off, b.rows()) = part;
              off += b.rows();
            }
          }
        },
        *rep_);
  }

  void adjoint_into(const Vector& w, Vector& out) const {
    std::visit(
        [&](const auto& r) {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, Dense> || std::is_same_v<T, Sparse>) {
            out.noalias() = r.m.transpose() * w;
          } else if constexpr (std::is_same_v<T, Scaled>) {
            out = r.s * w;
          } else {
            out.setZero();
            Index off = 0;
            for (const auto& b : r.blocks) {
              Vector part(b.cols());
              b.adjoint_into(w.segment(off, b.rows()), part);
              out += part;
              off += b.rows();
            }
          }
        },
        *rep_);
  }

  Index rows_ = 0;
  Index cols_ = 0;
  Kind kind_ = Kind::dense;
  std::shared_ptr<const Rep> rep_;
};

// ---------------------------------------------------------------------------
// Spectral quantities

struct EigenEstimate {
  double value = 0.0;
  int iterations = 0;
  bool converged = true;
};

struct SpectralOptions {
  int max_iterations = 10000;
  double tolerance = 1e-8;
};

/// sigma_A: smallest eigenvalue of AA^T (rows <= cols) or A^T A (rows > cols).
/// phi_*: extremes of a symmetric PD map Q; sigma_*_H: extremes of H.
struct SpectralSummary {
  double sigma_A = 0.0;
  double phi_min = 0.0;
  double phi_max = 0.0;
  double sigma_min_H = 0.0;
  double sigma_max_H = 0.0;
  bool converged = true;
};

enum class SpectralMode { AAt_min, PD_extremes };

namespace detail {

inline Vector start_vector(Index n) {
  std::mt19937_64 rng(0x5eed5eedULL);
  std::normal_distribution<double> nd;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = nd(rng);
  return v / v.norm();
}

/// Largest eigenvalue of a symmetric PSD sparse matrix by power iteration.
inline EigenEstimate power_max(const SparseMatrix& m, const SpectralOptions& opt) {
  EigenEstimate est;
  if (m.rows() == 0) return est;
  Vector v = start_vector(m.rows());
  for (int it = 1; it <= opt.max_iterations; ++it) {
    Vector w = m * v;
    double theta = v.dot(w);
    double wn = w.norm();
    est.value = theta;
    est.iterations = it;
    if (wn == 0.0) {
      est.value = 0.0;
      return est;
    }
    if ((w - theta * v).norm() <= opt.tolerance * std::abs(theta)) return est;
    v = w / wn;
  }
  est.converged = false;
  return est;
}

/// Smallest eigenvalue of a symmetric PSD sparse matrix by inverse iteration.
/// Returns 0 when the matrix is numerically singular relative to `scale`.
inline EigenEstimate inverse_min(const SparseMatrix& m, double scale, const SpectralOptions& opt) {
  EigenEstimate est;
  if (m.rows() == 0 || scale <= 0.0) return est;
  Eigen::SparseMatrix<double> cm = m;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(cm);
  if (ldlt.info() != Eigen::Success) return est;
  if ((ldlt.vectorD().array() <= 1e-13 * scale).any()) return est;
  Vector v = start_vector(m.rows());
  for (int it = 1; it <= opt.max_iterations; ++it) {
    Vector w = ldlt.solve(v);
    double wn = w.norm();
    if (!std::isfinite(wn) || wn == 0.0) {
      est.value = 0.0;
      est.iterations = it;
      return est;
    }
    v = w / wn;
    Vector mv = m * v;
    double theta = v.dot(mv);
    est.value = theta;
    est.iterations = it;
    if ((mv - theta * v).norm() <= opt.tolerance * std::max(std::abs(theta), 1e-300)) return est;
  }
  est.converged = false;
  return est;
}

inline SparseMatrix small_gram(const LinearMap& a) {
  SparseMatrix s = a.to_sparse();
  SparseMatrix g;
  if (a.rows() <= a.cols()) {
    g = s * SparseMatrix(s.transpose());
  } else {
    g = SparseMatrix(s.transpose()) * s;
  }
  g.makeCompressed();
  return g;
}

}  // namespace detail

/// Largest eigenvalue of A^T A, i.e. the squared operator 2-norm.
inline EigenEstimate gram_max_eigenvalue(const LinearMap& a, const SpectralOptions& opt = {}) {
  if (a.is_identity_like()) {
    double s = a.identity_scale();
    return {s * s, 0, true};
  }
  return detail::power_max(detail::small_gram(a), opt);
}

/// Smallest eigenvalue of A^T A (when rows > cols) or A A^T (rows <= cols).
inline EigenEstimate gram_min_eigenvalue(const LinearMap& a, const SpectralOptions& opt = {}) {
  if (a.is_identity_like()) {
    double s = a.identity_scale();
    return {s * s, 0, true};
  }
  SparseMatrix g = detail::small_gram(a);
  EigenEstimate top = detail::power_max(g, opt);
  EigenEstimate low = detail::inverse_min(g, top.value, opt);
  low.converged = low.converged && top.converged;
  return low;
}

inline double operator_norm(const LinearMap& a, const SpectralOptions& opt = {}) {
  return std::sqrt(std::max(0.0, gram_max_eigenvalue(a, opt).value));
}

/// Extreme eigenvalues of a symmetric positive definite map.
inline std::pair<EigenEstimate, EigenEstimate> pd_extremes(const LinearMap& q,
                                                           const SpectralOptions& opt = {}) {
  detail::require(q.rows() == q.cols(), "pd_extremes: map must be square");
  if (q.is_identity_like()) {
    double s = q.identity_scale();
    detail::require(s > 0.0, "pd_extremes: map is not positive definite");
    return {{s, 0, true}, {s, 0, true}};
  }
  SparseMatrix m = q.to_sparse();
  SparseMatrix diff = m - SparseMatrix(m.transpose());
  double scale = std::max(1.0, m.norm());
  detail::require(diff.norm() <= 1e-12 * scale, "pd_extremes: map is not symmetric");
  EigenEstimate top = detail::power_max(m, opt);
  EigenEstimate low = detail::inverse_min(m, top.value, opt);
  low.converged = low.converged && top.converged;
  return {low, top};
}

inline SpectralSummary spectral_summary(const LinearMap& map, SpectralMode mode,
                                        const SpectralOptions& opt = {}) {
  SpectralSummary s;
  if (mode == SpectralMode::AAt_min) {
    EigenEstimate e = gram_min_eigenvalue(map, opt);
    s.sigma_A = std::max(0.0, e.value);
    s.converged = e.converged;
  } else {
    auto [low, top] = pd_extremes(map, opt);
    s.phi_min = s.sigma_min_H = low.value;
    s.phi_max = s.sigma_max_H = top.value;
    s.converged = low.converged && top.converged;
  }
  return s;
}

}  // namespace smadmm

#endif  // SMADMM_LINOPS_HPP
