#include <gtest/gtest.h>

#include <memory>
#include <random>

#include <smadmm/oracle.hpp>

#include "test_util.hpp"

using namespace smadmm;
using testutil::gaussian;

namespace {

std::shared_ptr<const QuadraticLoss> quad(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix g = gaussian(n, n, rng);
  return std::make_shared<const QuadraticLoss>(g.transpose() * g / n + Matrix::Identity(n, n),
                                               gaussian(n, rng));
}

std::shared_ptr<const LeastSquaresSum> lsq3() {
  Matrix a(3, 2);
  a << 1, 2, -1, 0.5, 3, -2;
  Vector b(3);
  b << 1, -1, 0.5;
  return std::make_shared<const LeastSquaresSum>(a, b);
}

}  // namespace

TEST(SmoothLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(1);
  auto q = quad(5, 2);
  auto l = lsq3();
  for (int t = 0; t < 5; ++t) {
    Vector x = gaussian(5, rng);
    Vector fd = testutil::fd_gradient([&](const Vector& z) { return q->value(z); }, x);
    EXPECT_LE((fd - q->gradient(x)).norm(), 1e-5 * (1.0 + fd.norm()));
    Vector y = gaussian(2, rng);
    Vector fd2 = testutil::fd_gradient([&](const Vector& z) { return l->value(z); }, y);
    EXPECT_LE((fd2 - l->gradient(y)).norm(), 1e-5 * (1.0 + fd2.norm()));
  }
}

TEST(SampleGradient, DeterministicIsExactAndCounts) {
  auto q = quad(4, 3);
  auto o = StochasticOracle::deterministic(q);
  Vector x = Vector::LinSpaced(4, -1, 1);
  EXPECT_EQ(o.sample_gradient(x, 7), q->gradient(x));
  EXPECT_EQ(o.query_count(), 7u);
  EXPECT_EQ(o.sample_gradient(x), q->gradient(x));
  EXPECT_EQ(o.query_count(), 8u);
}

TEST(SampleGradient, ZeroSigmaGaussianEqualsDeterministic) {
  auto q = quad(4, 3);
  auto g = StochasticOracle::gaussian(q, 0.0, 9);
  Vector x = Vector::Ones(4);
  EXPECT_EQ(g.sample_gradient(x, 3), q->gradient(x));
}

TEST(SampleGradient, ZeroBatchRejected) {
  auto o = StochasticOracle::deterministic(quad(2, 1));
  EXPECT_THROW(o.sample_gradient(Vector::Zero(2), 0), std::invalid_argument);
  EXPECT_THROW(o.sample_pair(Vector::Zero(2), Vector::Zero(2), 0), std::invalid_argument);
}

TEST(SampleGradient, DimensionMismatchRejected) {
  auto o = StochasticOracle::deterministic(quad(2, 1));
  EXPECT_THROW(o.sample_gradient(Vector::Zero(3)), std::invalid_argument);
  EXPECT_THROW(o.sample_pair(Vector::Zero(2), Vector::Zero(3)), std::invalid_argument);
}

TEST(SampleGradient, LargeBatchConcentrates) {
  auto q = quad(10, 4);
  const double sigma = 1.0;
  auto o = StochasticOracle::gaussian(q, sigma, 17);
  Vector x = Vector::Constant(10, 0.3);
  Vector m = o.sample_gradient(x, 100000);
  EXPECT_LE((m - q->gradient(x)).norm(), 4.0 * sigma * std::sqrt(10.0 / 1e5));
}

TEST(SampleGradient, EmptyFiniteSumRejected) {
  EXPECT_THROW(LeastSquaresSum(Matrix(0, 2), Vector(0)), std::invalid_argument);
}

TEST(SamplePair, DeterministicReturnsBothGradients) {
  auto q = quad(3, 5);
  auto o = StochasticOracle::deterministic(q);
  Vector a = Vector::Ones(3), b = -Vector::Ones(3);
  auto [ga, gb] = o.sample_pair(a, b, 2);
  EXPECT_EQ(ga, q->gradient(a));
  EXPECT_EQ(gb, q->gradient(b));
  EXPECT_EQ(o.query_count(), 4u);
}

TEST(SamplePair, CoupledNoiseCancelsAtSamePoint) {
  auto o = StochasticOracle::gaussian(quad(6, 2), 1.0, 3, NoiseCoupling::shared);
  Vector x = Vector::LinSpaced(6, 0, 1);
  auto [g1, g2] = o.sample_pair(x, x);
  EXPECT_TRUE((g1 - g2).isZero(0.0));
  auto ind = StochasticOracle::gaussian(quad(6, 2), 1.0, 3, NoiseCoupling::independent);
  auto [h1, h2] = ind.sample_pair(x, x);
  EXPECT_GT((h1 - h2).norm(), 0.0);
}

TEST(SamplePair, FiniteSumUsesTheSameComponent) {
  auto l = lsq3();
  const std::uint64_t seed = 2024;
  auto o = StochasticOracle::finite_sum(l, seed);
  // Replay the index stream with the same engine and distribution.
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, 2);
  Vector xn(2), xo(2);
  xn << 0.5, -1.0;
  xo << 2.0, 0.25;
  for (int t = 0; t < 10; ++t) {
    Index i = pick(rng);
    Vector wn = Vector::Zero(2), wo = Vector::Zero(2);
    double rn = l->design().row(i).dot(xn) - l->targets()[i];
    double ro = l->design().row(i).dot(xo) - l->targets()[i];
    wn = rn * l->design().row(i).transpose();
    wo = ro * l->design().row(i).transpose();
    auto [gn, go] = o.sample_pair(xn, xo);
    EXPECT_LE((gn - wn).norm(), 1e-14);
    EXPECT_LE((go - wo).norm(), 1e-14);
  }
  EXPECT_EQ(o.query_count(), 20u);
}

TEST(OracleProperty, UnbiasedWithinFiveStandardErrors) {
  auto q = quad(5, 6);
  const double sigma = 2.0;
  auto o = StochasticOracle::gaussian(q, sigma, 99);
  Vector x = Vector::Constant(5, -0.7);
  const int M = 10000;
  Vector sum = Vector::Zero(5);
  for (int t = 0; t < M; ++t) sum += o.sample_gradient(x);
  Vector mean = sum / M;
  double se = sigma / std::sqrt(5.0) / std::sqrt(static_cast<double>(M));
  Vector dev = (mean - q->gradient(x)).cwiseAbs();
  EXPECT_LE(dev.maxCoeff(), 5.0 * se);
}

TEST(OracleProperty, BoundedVariance) {
  auto q = quad(8, 6);
  const double sigma = 1.5;
  auto o = StochasticOracle::gaussian(q, sigma, 7);
  Vector x = Vector::Zero(8);
  Vector g = q->gradient(x);
  double s = 0.0;
  const int M = 20000;
  for (int t = 0; t < M; ++t) s += (o.sample_gradient(x) - g).squaredNorm();
  EXPECT_LE(s / M, 1.1 * sigma * sigma);
}

TEST(OracleProperty, FiniteSumUnbiased) {
  auto l = lsq3();
  auto o = StochasticOracle::finite_sum(l, 5);
  Vector x(2);
  x << 0.3, -0.2;
  Vector sum = Vector::Zero(2);
  const int M = 30000;
  for (int t = 0; t < M; ++t) sum += o.sample_gradient(x);
  EXPECT_LE((sum / M - l->gradient(x)).norm(), 0.1);
  EXPECT_EQ(o.full_gradient(x), l->gradient(x));
  EXPECT_EQ(o.query_count(), static_cast<std::uint64_t>(M + 3));
}

TEST(OracleProperty, DeterministicReplay) {
  auto q = quad(4, 1);
  auto a = StochasticOracle::gaussian(q, 1.0, 123);
  auto b = StochasticOracle::gaussian(q, 1.0, 123);
  Vector x = Vector::Ones(4);
  for (int t = 0; t < 50; ++t) {
    EXPECT_EQ(a.sample_gradient(x, 3), b.sample_gradient(x, 3));
    auto pa = a.sample_pair(x, 2 * x);
    auto pb = b.sample_pair(x, 2 * x);
    EXPECT_EQ(pa.first, pb.first);
    EXPECT_EQ(pa.second, pb.second);
  }
}

TEST(OracleProperty, DiagnosticsDoNotPerturbSamplePath) {
  auto q = quad(4, 1);
  auto a = StochasticOracle::gaussian(q, 1.0, 5);
  auto b = StochasticOracle::gaussian(q, 1.0, 5);
  Vector x = Vector::Ones(4);
  a.diagnostic_gradient(x, 100);
  EXPECT_EQ(a.sample_gradient(x), b.sample_gradient(x));
  EXPECT_EQ(a.query_count(), 1u);
  EXPECT_EQ(a.diagnostic_query_count(), 100u);
}

TEST(FullGradient, StreamingOracleRejected) {
  auto o = StochasticOracle::gaussian(quad(2, 1), 1.0, 1);
  EXPECT_THROW(o.full_gradient(Vector::Zero(2)), std::invalid_argument);
}
