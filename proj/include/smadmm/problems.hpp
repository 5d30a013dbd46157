#ifndef SMADMM_PROBLEMS_HPP
#define SMADMM_PROBLEMS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "linops.hpp"
#include "oracle.hpp"
#include "problem.hpp"
#include "prox.hpp"

namespace smadmm {

// ---------------------------------------------------------------------------
// LIBSVM data

/// Labelled sparse samples; rows of `features` are samples.
struct Dataset {
  Vector labels;  ///< entries in {-1, +1}
  SparseMatrix features;
  Index n_features = 0;
  Vector scale;  ///< per-feature multiplier applied after loading; empty if none

  Index size() const { return labels.size(); }
};

class ParseError : public std::invalid_argument {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::invalid_argument("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline double parse_number(const std::string& tok, std::size_t line, const char* what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line, std::string("non-numeric ") + what + " '" + tok + "'");
  }
}

}  // namespace detail

/// Reads "label idx:val idx:val ..." lines with 1-based increasing indices.
/// Labels 0/1 and -1/+1 map to -1/+1. `n_features` = 0 takes the largest index seen.
inline Dataset parse_libsvm(std::istream& in, Index n_features = 0) {
  std::vector<double> labels;
  std::vector<Triplet> trip;
  Index max_idx = 0;
  std::string line;
  std::size_t lineno = 0;
  Index row = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string tok;
    if (!(ss >> tok)) continue;
    double lab = detail::parse_number(tok, lineno, "label");
    if (lab == 1.0) {
      labels.push_back(1.0);
    } else if (lab == -1.0 || lab == 0.0) {
      labels.push_back(-1.0);
    } else {
      throw ParseError(lineno, "label '" + tok + "' is not a binary label");
    }
    Index prev = 0;
    while (ss >> tok) {
      auto colon = tok.find(':');
      if (colon == std::string::npos) throw ParseError(lineno, "expected index:value, got '" + tok + "'");
      std::string is = tok.substr(0, colon);
      std::size_t pos = 0;
      long long idx = 0;
      try {
        idx = std::stoll(is, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != is.size()) throw ParseError(lineno, "non-numeric index '" + is + "'");
      if (idx < 1) throw ParseError(lineno, "index " + is + " is not 1-based");
      if (idx <= prev) throw ParseError(lineno, "indices must increase (" + is + " after " +
                                                    std::to_string(prev) + ")");
      double val = detail::parse_number(tok.substr(colon + 1), lineno, "value");
      prev = idx;
      max_idx = std::max<Index>(max_idx, idx);
      trip.emplace_back(row, idx - 1, val);
    }
    ++row;
  }
  Dataset d;
  if (n_features == 0) n_features = max_idx;
  if (max_idx > n_features) {
    throw std::invalid_argument("libsvm: feature index " + std::to_string(max_idx) +
                                " exceeds n_features = " + std::to_string(n_features));
  }
  d.n_features = n_features;
  d.labels = Eigen::Map<Vector>(labels.data(), static_cast<Index>(labels.size()));
  d.features.resize(row, n_features);
  d.features.setFromTriplets(trip.begin(), trip.end());
  d.features.makeCompressed();
  return d;
}

inline Dataset load_libsvm(const std::string& path, Index n_features = 0) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("libsvm: cannot open '" + path + "'");
  return parse_libsvm(in, n_features);
}

/// Explicit zeros are dropped.
inline void write_libsvm(std::ostream& os, const Dataset& d) {
  char buf[40];
  for (Index i = 0; i < d.size(); ++i) {
    os << (d.labels[i] > 0 ? "+1" : "-1");
    for (SparseMatrix::InnerIterator it(d.features, i); it; ++it) {
      if (it.value() == 0.0) continue;
      std::snprintf(buf, sizeof buf, "%.17g", it.value());
      os << ' ' << (it.col() + 1) << ':' << buf;
    }
    os << '\n';
  }
}

/// Scales each feature by 1 / max|value| so that values lie in [-1, 1].
/// Keeps sparsity, unlike shifting by the minimum.
inline void normalize_max_abs(Dataset& d) {
  Vector mx = Vector::Zero(d.n_features);
  for (Index i = 0; i < d.features.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(d.features, i); it; ++it)
      mx[it.col()] = std::max(mx[it.col()], std::abs(it.value()));
  d.scale = mx.unaryExpr([](double m) { return m > 0.0 ? 1.0 / m : 1.0; });
  for (Index i = 0; i < d.features.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(d.features, i); it; ++it) it.valueRef() *= d.scale[it.col()];
}

/// Seeded split into two halves (first half gets the extra row).
inline std::pair<Dataset, Dataset> split_half(const Dataset& d, std::uint64_t seed) {
  std::vector<Index> perm(static_cast<std::size_t>(d.size()));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  Index half = (d.size() + 1) / 2;
  auto take = [&](Index lo, Index hi) {
    Dataset s;
    s.n_features = d.n_features;
    s.scale = d.scale;
    s.labels.resize(hi - lo);
    std::vector<Triplet> trip;
    for (Index r = lo; r < hi; ++r) {
      Index src = perm[static_cast<std::size_t>(r)];
      s.labels[r - lo] = d.labels[src];
      for (SparseMatrix::InnerIterator it(d.features, src); it; ++it)
        trip.emplace_back(r - lo, it.col(), it.value());
    }
    s.features.resize(hi - lo, d.n_features);
    s.features.setFromTriplets(trip.begin(), trip.end());
    s.features.makeCompressed();
    return s;
  };
  return {take(0, half), take(half, d.size())};
}

// ---------------------------------------------------------------------------
// Sigmoid loss

/// s(z) = 1/(1 + e^z) and ds/dz = -s(1 - s), without overflow for any z.
struct SigmoidTerm {
  double value;
  double slope;
};

inline SigmoidTerm sigmoid_term(double z) {
  double s, t;  // t = 1 - s
  if (z > 0.0) {
    double e = std::exp(-z);
    s = e / (1.0 + e);
    t = 1.0 / (1.0 + e);
  } else {
    double e = std::exp(z);
    s = 1.0 / (1.0 + e);
    t = e / (1.0 + e);
  }
  return {s, -s * t};
}

/// sup |s''(z)| for s(z) = 1/(1 + e^z).
inline constexpr double kSigmoidCurvature = 0.096225044864937627;  // 1/(6 sqrt 3)

struct LossGrad {
  double value;
  Vector gradient;
};

/// f(x) = 1/(1 + exp(b <a, x>)).
inline LossGrad sigmoid_loss_grad(const Vector& x, const Vector& a, double b) {
  detail::require_dim(a.size(), x.size(), "sigmoid_loss_grad");
  SigmoidTerm t = sigmoid_term(b * a.dot(x));
  return {t.value, (b * t.slope) * a};
}

/// (1/N) sum_i 1/(1 + exp(b_i <a_i, x>)) over a dataset.
class SigmoidLossSum : public FiniteSumLoss {
 public:
  explicit SigmoidLossSum(std::shared_ptr<const Dataset> data) : data_(std::move(data)) {
    detail::require(data_ != nullptr && data_->size() > 0, "SigmoidLossSum: empty dataset");
    SparseMatrix xtx = SparseMatrix(data_->features.transpose()) * data_->features;
    double top = detail::power_max(xtx, {}).value;
    lip_ = kSigmoidCurvature * top / static_cast<double>(data_->size());
  }

  Index dim() const override { return data_->n_features; }
  Index size() const override { return data_->size(); }

  double component_value(Index i, const Vector& x) const override {
    return sigmoid_term(data_->labels[i] * row_dot(i, x)).value;
  }
  void add_component_gradient(Index i, const Vector& x, double w, Vector& out) const override {
    double b = data_->labels[i];
    double c = w * b * sigmoid_term(b * row_dot(i, x)).slope;
    for (SparseMatrix::InnerIterator it(data_->features, i); it; ++it) out[it.col()] += c * it.value();
  }

  double value(const Vector& x) const override {
    Vector z = data_->features * x;
    double s = 0.0;
    for (Index i = 0; i < z.size(); ++i) s += sigmoid_term(data_->labels[i] * z[i]).value;
    return s / static_cast<double>(size());
  }
  Vector gradient(const Vector& x) const override {
    Vector z = data_->features * x;
    Vector c(z.size());
    for (Index i = 0; i < z.size(); ++i) {
      double b = data_->labels[i];
      c[i] = b * sigmoid_term(b * z[i]).slope;
    }
    return data_->features.transpose() * c / static_cast<double>(size());
  }
  /// Curvature bound times lambda_max(X^T X / N).
  std::optional<double> lipschitz() const override { return lip_; }

  /// Fraction of samples with b_i <a_i, x> <= 0.
  double error_rate(const Vector& x) const {
    Vector z = data_->features * x;
    Index wrong = 0;
    for (Index i = 0; i < z.size(); ++i)
      if (data_->labels[i] * z[i] <= 0.0) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(size());
  }

  const Dataset& data() const { return *data_; }

 private:
  double row_dot(Index i, const Vector& x) const {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(data_->features, i); it; ++it) s += it.value() * x[it.col()];
    return s;
  }

  std::shared_ptr<const Dataset> data_;
  double lip_ = 0.0;
};

// ---------------------------------------------------------------------------
// Graph-guided fused lasso

struct GraphMatrix {
  LinearMap G;  ///< one row e_i - e_j per edge (i < j); may have zero rows
  LinearMap A;  ///< [G; I], or I when there are no edges
  std::vector<std::pair<Index, Index>> edges;
};

/// Edges between features whose sample correlation satisfies |corr| >= threshold.
/// Zero-variance features get no edges.
inline GraphMatrix build_graph_matrix(const Dataset& d, double threshold = 0.7) {
  detail::require(threshold > 0.0, "build_graph_matrix: threshold must be positive");
  const Index n = d.n_features;
  const double N = static_cast<double>(d.size());
  detail::require(d.size() > 0, "build_graph_matrix: empty dataset");
  Matrix xtx = Matrix(SparseMatrix(d.features.transpose()) * d.features);
  Vector mean = Vector::Zero(n);
  for (Index i = 0; i < d.features.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(d.features, i); it; ++it) mean[it.col()] += it.value();
  mean /= N;
  Matrix cov = xtx / N - mean * mean.transpose();
  Vector var = cov.diagonal();

  GraphMatrix g{LinearMap::identity(n), LinearMap::identity(n), {}};
  std::vector<Triplet> trip;
  for (Index i = 0; i < n; ++i) {
    double si = xtx(i, i) / N;
    if (!(var[i] > 1e-12 * std::max(si, 1e-300))) continue;
    for (Index j = i + 1; j < n; ++j) {
      double sj = xtx(j, j) / N;
      if (!(var[j] > 1e-12 * std::max(sj, 1e-300))) continue;
      double corr = cov(i, j) / std::sqrt(var[i] * var[j]);
      if (std::abs(corr) >= threshold) {
        Index r = static_cast<Index>(g.edges.size());
        g.edges.emplace_back(i, j);
        trip.emplace_back(r, i, 1.0);
        trip.emplace_back(r, j, -1.0);
      }
    }
  }
  g.G = LinearMap::sparse(static_cast<Index>(g.edges.size()), n, trip);
  if (!g.edges.empty()) g.A = LinearMap::vstack({g.G, LinearMap::identity(n)});
  return g;
}

struct FusedLassoOptions {
  double lambda1 = 1e-11;
  double threshold = 0.7;
  HMetric H = HMetric::linearized();
  OracleModel oracle{OracleKind::finite_sum, 0.0, NoiseCoupling::shared};
};

/// min (1/N) sum_i f_i(x) + lambda1 ||A x||_1 as  A x - y = 0, h = lambda1 ||.||_1.
struct FusedLasso {
  std::shared_ptr<const Dataset> train;
  std::shared_ptr<const Dataset> test;
  std::shared_ptr<const SigmoidLossSum> train_loss;
  std::shared_ptr<const SigmoidLossSum> test_loss_fn;
  GraphMatrix graph;
  double lambda1 = 0.0;
  Problem problem;

  /// F(x) + lambda1 ||A x||_1.
  double objective(const Vector& x) const {
    return train_loss->value(x) + lambda1 * graph.A.apply(x).lpNorm<1>();
  }
  double test_loss(const Vector& x) const { return test_loss_fn->value(x); }
  double test_error(const Vector& x) const { return test_loss_fn->error_rate(x); }
};

inline FusedLasso make_fused_lasso(Dataset train, std::optional<Dataset> test,
                                   const FusedLassoOptions& opt = {}) {
  detail::require(opt.lambda1 >= 0.0, "fused lasso: lambda1 must be nonnegative");
  auto tr = std::make_shared<const Dataset>(std::move(train));
  std::shared_ptr<const Dataset> te = test ? std::make_shared<const Dataset>(std::move(*test)) : tr;
  detail::require(te->n_features == tr->n_features, "fused lasso: train/test feature counts differ");
  auto loss = std::make_shared<const SigmoidLossSum>(tr);
  auto tloss = te == tr ? loss : std::make_shared<const SigmoidLossSum>(te);
  GraphMatrix g = build_graph_matrix(*tr, opt.threshold);
  Index p = g.A.rows();
  Problem prob(loss, opt.oracle, ProximableFunction::l1(opt.lambda1), g.A,
               LinearMap::negated_identity(p), Vector::Zero(p), opt.H);
  prob.name = "fused_lasso";
  FusedLasso fl{tr, te, loss, tloss, g, opt.lambda1, std::move(prob)};
  LinearMap A = g.A;
  double l1 = opt.lambda1;
  fl.problem.set_objective([loss, A, l1](const Vector& x, const Vector&) {
    return loss->value(x) + l1 * A.apply(x).lpNorm<1>();
  });
  return fl;
}

// ---------------------------------------------------------------------------
// Synthetic instances

enum class Convexity { convex_quadratic, nonconvex_sigmoid };

/// n = dim(x), d = dim(y). d == n gives the consensus form A = I, B = -I;
/// otherwise A is a d x n Gaussian matrix and B = -I. c = 0 in both cases.
struct SyntheticSpec {
  Index n = 20;
  Index d = 20;
  std::uint64_t seed = 1;
  double sigma = 0.0;  ///< Gaussian oracle noise; 0 gives a deterministic oracle
  Convexity convexity = Convexity::convex_quadratic;
  double l1 = 0.0;        ///< h = l1 ||.||_1 (zero function when 0)
  Index samples = 200;    ///< sigmoid dataset size
  double strong = 0.1;    ///< quadratic: M = G^T G / n + strong I
  bool finite_sum = false;  ///< sigmoid: sample components instead of Gaussian noise
  HMetric H = HMetric::linearized();
};

inline Problem synthetic_composite(const SyntheticSpec& s) {
  detail::require(s.n >= 1 && s.d >= 1, "synthetic_composite: n, d must be >= 1");
  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> nd;
  auto gauss = [&](Index r, Index c) {
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) m(i, j) = nd(rng);
    return m;
  };

  std::shared_ptr<const SmoothLoss> loss;
  OracleModel model;
  model.sigma = s.sigma;
  model.kind = s.sigma > 0.0 ? OracleKind::streaming_gaussian : OracleKind::deterministic;

  if (s.convexity == Convexity::convex_quadratic) {
    Matrix G = gauss(s.n, s.n);
    Matrix M = G.transpose() * G / static_cast<double>(s.n) +
               s.strong * Matrix::Identity(s.n, s.n);
    Vector b = gauss(s.n, 1).col(0);
    loss = std::make_shared<const QuadraticLoss>(M, b);
  } else {
    detail::require(s.samples >= 1, "synthetic_composite: samples must be >= 1");
    Vector w = gauss(s.n, 1).col(0);
    // Unit-variance features; scaling rows by 1/sqrt(n) leaves the loss nearly flat.
    Matrix X = gauss(s.samples, s.n);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto data = std::make_shared<Dataset>();
    data->n_features = s.n;
    data->labels.resize(s.samples);
    for (Index i = 0; i < s.samples; ++i) {
      double lab = X.row(i).dot(w) >= 0.0 ? 1.0 : -1.0;
      data->labels[i] = u(rng) < 0.1 ? -lab : lab;
    }
    data->features = X.sparseView();
    data->features.makeCompressed();
    loss = std::make_shared<const SigmoidLossSum>(data);
    if (s.finite_sum) model.kind = OracleKind::finite_sum;
  }

  LinearMap A = s.d == s.n ? LinearMap::identity(s.n)
                           : LinearMap::dense(gauss(s.d, s.n) / std::sqrt(static_cast<double>(s.n)));
  ProximableFunction h = s.l1 > 0.0 ? ProximableFunction::l1(s.l1) : ProximableFunction::zero();
  Problem p(loss, model, std::move(h), A, LinearMap::negated_identity(s.d), Vector::Zero(s.d), s.H);
  p.name = s.convexity == Convexity::convex_quadratic ? "synthetic_quadratic" : "synthetic_sigmoid";
  return p;
}

// ---------------------------------------------------------------------------
// Toy 1-D deblurring

/// Observation b = K x_true + noise with a dense Gaussian blur K; F(x) = (1/2)||K x - b||^2
/// up to a constant. M is a scaled discrete Laplacian with ||M|| = denoiser_norm, the
/// Hessian of the quadratic denoiser potential g(x) = (1/2) x^T M x.
struct ToyDeblur {
  Matrix K;
  Vector b;
  Vector x_true;
  Matrix M;
  Problem problem;
};

inline ToyDeblur make_toy_deblur(Index n = 64, std::uint64_t seed = 3, double noise = 0.01,
                                 double denoiser_norm = 0.4) {
  detail::require(n >= 3, "toy deblur: n must be >= 3");
  detail::require(denoiser_norm > 0.0 && denoiser_norm < 1.0, "toy deblur: need 0 < ||M|| < 1");
  Matrix K = Matrix::Zero(n, n);
  const int half = 3;
  const double width = 1.5;
  for (Index i = 0; i < n; ++i) {
    double tot = 0.0;
    for (int o = -half; o <= half; ++o) tot += std::exp(-0.5 * o * o / (width * width));
    for (int o = -half; o <= half; ++o) {
      Index j = i + o;
      if (j < 0 || j >= n) continue;
      K(i, j) = std::exp(-0.5 * o * o / (width * width)) / tot;
    }
  }
  Vector x_true(n);
  for (Index i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / static_cast<double>(n);
    x_true[i] = (t > 0.2 && t < 0.45 ? 1.0 : 0.0) + (t > 0.6 && t < 0.8 ? -0.5 : 0.0);
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, noise);
  Vector b = K * x_true;
  for (Index i = 0; i < n; ++i) b[i] += nd(rng);

  Matrix Lap = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    Lap(i, i) = 2.0;
    if (i > 0) Lap(i, i - 1) = -1.0;
    if (i + 1 < n) Lap(i, i + 1) = -1.0;
  }
  double top = 2.0 + 2.0 * std::cos(std::numbers::pi / static_cast<double>(n + 1));
  Matrix M = denoiser_norm / top * Lap;

  auto loss = std::make_shared<const QuadraticLoss>(K.transpose() * K, K.transpose() * b);
  Problem p(loss, OracleModel{}, ProximableFunction::zero(), LinearMap::identity(n),
            LinearMap::negated_identity(n), Vector::Zero(n));
  p.name = "toy_deblur";
  return ToyDeblur{std::move(K), std::move(b), std::move(x_true), std::move(M), std::move(p)};
}

}  // namespace smadmm

#endif  // SMADMM_PROBLEMS_HPP
