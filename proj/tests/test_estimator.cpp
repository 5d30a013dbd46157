#include <gtest/gtest.h>

#include <memory>
#include <random>

#include <smadmm/estimator.hpp>

#include "test_util.hpp"

using namespace smadmm;
using testutil::gaussian;

namespace {

std::shared_ptr<const QuadraticLoss> quad(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix g = gaussian(n, n, rng);
  return std::make_shared<const QuadraticLoss>(g.transpose() * g / n + 0.2 * Matrix::Identity(n, n),
                                               gaussian(n, rng));
}

}  // namespace

TEST(EstimatorInit, DeterministicGivesExactGradient) {
  auto q = quad(4, 1);
  auto o = StochasticOracle::deterministic(q);
  Vector x0 = Vector::Constant(4, 0.5);
  auto e = MomentumEstimator::init(o, x0, 9);
  EXPECT_EQ(e.v(), q->gradient(x0));
  EXPECT_EQ(o.query_count(), 9u);
  EXPECT_TRUE(e.error_vector(q->gradient(x0)).isZero(0.0));
}

TEST(EstimatorInit, SingleSampleEqualsOneDraw) {
  auto q = quad(3, 2);
  auto a = StochasticOracle::gaussian(q, 1.0, 44);
  auto b = StochasticOracle::gaussian(q, 1.0, 44);
  Vector x0 = Vector::Ones(3);
  EXPECT_EQ(MomentumEstimator::init(a, x0, 1).v(), b.sample_gradient(x0));
}

TEST(EstimatorInit, ZeroSamplesRejected) {
  auto o = StochasticOracle::deterministic(quad(2, 1));
  EXPECT_THROW(MomentumEstimator::init(o, Vector::Zero(2), 0), std::invalid_argument);
}

TEST(EstimatorInit, LargeInitialBatchConcentrates) {
  auto q = quad(5, 3);
  const double sigma = 1.0;
  const Index m = 10000;
  Vector x0 = Vector::Ones(5);
  int within = 0;
  for (int t = 0; t < 100; ++t) {
    auto o = StochasticOracle::gaussian(q, sigma, 1000 + t);
    auto e = MomentumEstimator::init(o, x0, m);
    if (e.error_vector(q->gradient(x0)).squaredNorm() <= 5.0 * sigma * sigma * 5.0 / m) ++within;
  }
  EXPECT_GE(within, 99);
}

TEST(EstimatorInit, InitialErrorMeanMatchesVarianceOverM) {
  auto q = quad(5, 3);
  const double sigma = 1.0;
  const Index m = 20;
  Vector x0 = Vector::Zero(5);
  auto o = StochasticOracle::gaussian(q, sigma, 7);
  double s = 0.0;
  for (int t = 0; t < 1000; ++t) {
    auto e = MomentumEstimator::init(o, x0, m);
    s += e.error_vector(q->gradient(x0)).squaredNorm();
  }
  EXPECT_LE(s / 1000, 1.1 * sigma * sigma / m);
}

TEST(EstimatorUpdate, ScalarSubstitution) {
  // grad F(x) = x + 1: g_old = 1.5 at x = 0.5 and g_new = 2.0 at x = 1.
  auto lin = std::make_shared<const QuadraticLoss>(Matrix::Ones(1, 1), -Vector::Ones(1));
  auto o = StochasticOracle::deterministic(lin);
  Vector v = detail::recursive_step(o, Vector::Constant(1, 1.0), Vector::Constant(1, 0.5),
                                    Vector::Constant(1, 1.0), 0.5, 1);
  EXPECT_DOUBLE_EQ(v[0], 1.75);
}

TEST(EstimatorUpdate, MomentumOffIsPlainGradient) {
  auto q = quad(4, 5);
  auto a = StochasticOracle::gaussian(q, 1.0, 8);
  auto b = StochasticOracle::gaussian(q, 1.0, 8);
  Vector x0 = Vector::Zero(4);
  auto e = MomentumEstimator::init(a, x0, 1);
  b.sample_gradient(x0);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    Vector x = gaussian(4, rng);
    e.update(a, x, 1.0);
    EXPECT_EQ(e.v(), b.sample_gradient(x));
  }
  EXPECT_EQ(a.query_count(), b.query_count());
}

TEST(EstimatorUpdate, DeterministicTracksGradient) {
  auto q = quad(4, 9);
  auto o = StochasticOracle::deterministic(q);
  std::mt19937_64 rng(2);
  auto e = MomentumEstimator::init(o, Vector::Zero(4), 1);
  for (double a : {0.1, 0.5, 0.9, 1.0, 0.3}) {
    Vector x = gaussian(4, rng);
    e.update(o, x, a);
    EXPECT_LE(e.error_vector(q->gradient(x)).norm(), 1e-12 * (1.0 + q->gradient(x).norm()));
    EXPECT_EQ(e.x_prev(), x);
    EXPECT_EQ(e.a_next(), a);
  }
}

TEST(EstimatorUpdate, MomentumOutsideUnitIntervalRejected) {
  auto o = StochasticOracle::deterministic(quad(2, 1));
  auto e = MomentumEstimator::init(o, Vector::Zero(2), 1);
  EXPECT_THROW(e.update(o, Vector::Ones(2), 0.0), std::invalid_argument);
  EXPECT_THROW(e.update(o, Vector::Ones(2), 1.5), std::invalid_argument);
  EXPECT_THROW(e.update(o, Vector::Ones(3), 0.5), std::invalid_argument);
}

TEST(EstimatorUpdate, PairCostsTwoQueriesSingleCostsOne) {
  auto o = StochasticOracle::gaussian(quad(2, 1), 1.0, 3);
  auto e = MomentumEstimator::init(o, Vector::Zero(2), 4);
  EXPECT_EQ(o.query_count(), 4u);
  e.update(o, Vector::Ones(2), 0.5);
  EXPECT_EQ(o.query_count(), 6u);
  e.update(o, Vector::Zero(2), 1.0);
  EXPECT_EQ(o.query_count(), 7u);
}

// Monte Carlo check of E||eps_k||^2 <= (1-a)^2 E||eps_{k-1}||^2 + 2a^2 s^2 + 2 L^2 (1-a)^2 ||dx||^2.
TEST(EstimatorProperty, VarianceRecursionBound) {
  auto q = quad(5, 21);
  const double sigma = 1.0;
  const double L = *q->lipschitz();
  std::mt19937_64 rng(4);
  Vector x_old = gaussian(5, rng), x_new = gaussian(5, rng);
  Vector v_old = q->gradient(x_old) + 0.3 * gaussian(5, rng);
  double e_prev = (q->gradient(x_old) - v_old).squaredNorm();
  auto o = StochasticOracle::gaussian(q, sigma, 77);
  for (double a : {0.1, 0.5, 1.0}) {
    const int T = 20000;
    double s = 0.0, s2 = 0.0;
    for (int t = 0; t < T; ++t) {
      Vector v = detail::recursive_step(o, v_old, x_old, x_new, a, 1);
      double e = (q->gradient(x_new) - v).squaredNorm();
      s += e;
      s2 += e * e;
    }
    double mean = s / T;
    double se = std::sqrt(std::max(s2 / T - mean * mean, 0.0) / T);
    double bound = (1 - a) * (1 - a) * e_prev + 2 * a * a * sigma * sigma +
                   2 * L * L * (1 - a) * (1 - a) * (x_new - x_old).squaredNorm();
    EXPECT_LE(mean, bound + 3.0 * se) << "a = " << a;
  }
}

TEST(EstimatorProperty, TelescopingWithFrozenIterates) {
  auto q = quad(4, 13);
  const double sigma = 1.0, a = 0.1;
  const Index m = 10, K = 200;
  Vector x = Vector::Ones(4);
  Vector g = q->gradient(x);
  double total = 0.0;
  const int R = 50;
  for (int r = 0; r < R; ++r) {
    auto o = StochasticOracle::gaussian(q, sigma, 500 + r);
    auto e = MomentumEstimator::init(o, x, m);
    double s = 0.0;
    for (Index k = 0; k < K; ++k) {
      e.update(o, x, a);
      s += e.error_vector(g).squaredNorm();
    }
    total += s;
  }
  double bound = sigma * sigma / (a * m) + 2.0 * a * sigma * sigma * K;
  EXPECT_LE(total / R, 1.1 * bound);
}
