#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <smadmm/pnp.hpp>
#include <smadmm/problems.hpp>

#include "test_util.hpp"

using namespace smadmm;
using testutil::gaussian;

namespace {

/// g(x) = c sum log cosh(x_i), grad g = c tanh(x), Lipschitz constant c.
Denoiser logcosh(double c) {
  return Denoiser::gradient_step(
      [c](const Vector& x) { return c * x.unaryExpr([](double t) { return std::log(std::cosh(t)); }).sum(); },
      [c](const Vector& x) -> Vector { return c * x.array().tanh().matrix(); }, c);
}

Problem consensus_quadratic(Index n, std::mt19937_64& rng, OracleModel m = {}) {
  Matrix G = gaussian(n, n, rng);
  auto loss = std::make_shared<const QuadraticLoss>(G.transpose() * G / n + 0.5 * Matrix::Identity(n, n),
                                                    gaussian(n, rng));
  return Problem(loss, m, ProximableFunction::zero(), LinearMap::identity(n),
                 LinearMap::negated_identity(n), Vector::Zero(n));
}

}  // namespace

TEST(Denoiser, QuadraticScalarShrinks) {
  Denoiser d = Denoiser::quadratic(Matrix::Constant(1, 1, 0.3));
  EXPECT_DOUBLE_EQ(denoise(d, Vector::Constant(1, 2.0))[0], 1.4);
  EXPECT_EQ(d.lipschitz_g(), 0.3);
  auto inv = d.inverse(Vector::Constant(1, 1.4));
  ASSERT_TRUE(inv.has_value());
  EXPECT_NEAR((*inv)[0], 2.0, 1e-9);
}

TEST(Denoiser, QuadraticRejectsBadMatrices) {
  Matrix ns(2, 2);
  ns << 0.1, 0.2, 0.0, 0.1;
  EXPECT_THROW(Denoiser::quadratic(ns), std::invalid_argument);
  EXPECT_THROW(Denoiser::quadratic(-0.1 * Matrix::Identity(2, 2)), std::invalid_argument);
  EXPECT_THROW(Denoiser::quadratic(Matrix::Identity(2, 2)), std::invalid_argument);
}

TEST(Denoiser, CustomHasNoPotential) {
  Denoiser d = Denoiser::custom([](const Vector& z) -> Vector { return 0.5 * z; });
  EXPECT_EQ(d.apply(Vector::Ones(2)), Vector::Constant(2, 0.5));
  EXPECT_THROW(d.inverse(Vector::Ones(2)), std::invalid_argument);
  EXPECT_THROW(WeaklyConvexPotential{d}, std::invalid_argument);
  EXPECT_TRUE(d.contraction_warnings(Vector::Zero(2)).empty());
}

TEST(Denoiser, ContractionWarningNearOne) {
  EXPECT_TRUE(logcosh(0.3).contraction_warnings(Vector::Zero(3), 0.1).empty());
  EXPECT_FALSE(logcosh(0.99).contraction_warnings(Vector::Zero(3), 0.1).empty());
}

TEST(Potential, ScalarQuadraticClosedForm) {
  // D = 0.7 I: D^{-1}(x) = x / 0.7 and phi(x) = 0.105 (x / 0.7)^2.
  WeaklyConvexPotential phi(Denoiser::quadratic(Matrix::Constant(1, 1, 0.3)));
  for (double x : {-1.3, 0.0, 0.4, 2.5}) {
    double u = x / 0.7;
    // Fixed-point inverse stops at a 1e-10 relative step.
    EXPECT_NEAR(*phi.value(Vector::Constant(1, x)), 0.105 * u * u, 1e-9);
    EXPECT_NEAR((*phi.gradient(Vector::Constant(1, x)))[0], u - x, 1e-9);
  }
}

TEST(Potential, DenoiserIsProxOfPotentialScalar) {
  Denoiser d = Denoiser::quadratic(Matrix::Constant(1, 1, 0.3));
  WeaklyConvexPotential phi(d);
  for (double z : {-2.0, -0.1, 0.0, 0.8, 3.0}) {
    auto rep = verify_prox_property(d, Vector::Constant(1, z), phi);
    EXPECT_TRUE(rep.inverse_converged);
    EXPECT_LE(rep.gap, 1e-12) << z;
    EXPECT_LE(rep.stationarity, 1e-9) << z;
  }
}

TEST(Potential, DenoiserIsProxOfPotentialTwoDim) {
  Matrix M(2, 2);
  M << 0.4, 0.1, 0.1, 0.2;
  Denoiser d = Denoiser::quadratic(M);
  WeaklyConvexPotential phi(d);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 5; ++t) {
    auto rep = verify_prox_property(d, gaussian(2, rng), phi);
    EXPECT_LE(rep.gap, 1e-12);
    EXPECT_LE(rep.stationarity, 1e-9);
  }
  // Nonquadratic gradient-step denoiser in four dimensions.
  Denoiser n = logcosh(0.5);
  WeaklyConvexPotential pn(n);
  for (int t = 0; t < 5; ++t) {
    auto rep = verify_prox_property(n, 2.0 * gaussian(4, rng), pn);
    EXPECT_LE(rep.gap, 1e-12);
    EXPECT_LE(rep.stationarity, 1e-9);
  }
}

TEST(Potential, DominatesGAtRandomPoints) {
  Denoiser d = logcosh(0.6);
  WeaklyConvexPotential phi(d);
  std::mt19937_64 rng(7);
  for (int t = 0; t < 1000; ++t) {
    Vector x = 2.0 * gaussian(3, rng);
    auto v = phi.value(x);
    ASSERT_TRUE(v.has_value());
    EXPECT_GE(*v, d.g(x) - 1e-12);
  }
}

TEST(Potential, GradientLipschitzBound) {
  Denoiser d = logcosh(0.6);
  WeaklyConvexPotential phi(d);
  const double bound = phi.gradient_lipschitz_bound();
  EXPECT_DOUBLE_EQ(bound, 1.5);
  std::mt19937_64 rng(8);
  for (int t = 0; t < 300; ++t) {
    Vector a = 1.5 * gaussian(3, rng), b = a + 0.2 * gaussian(3, rng);
    double ratio = (*phi.gradient(a) - *phi.gradient(b)).norm() / (a - b).norm();
    EXPECT_LE(ratio, bound * (1 + 1e-6));
  }
  EXPECT_DOUBLE_EQ(phi.weak_convexity_modulus(), 0.6 / 1.6);
}

TEST(PnPRun, IdentityDenoiserGivesShiftedAnchor) {
  std::mt19937_64 rng(2);
  Problem p = consensus_quadratic(3, rng);
  Denoiser id = Denoiser::gradient_step([](const Vector&) { return 0.0; },
                                        [](const Vector& x) -> Vector { return Vector::Zero(x.size()); }, 0.0);
  const double rho = 1.5;
  PnPOptions opt;
  opt.run.record_iterates = true;
  auto o = p.make_oracle(1);
  auto res = pnp_run(p, o, id, Schedule::fixed(rho, 4.0, 1.0), 30, opt);
  ASSERT_EQ(res.iterates.size(), 31u);
  for (std::size_t i = 1; i < res.iterates.size(); ++i) {
    const auto& prev = res.iterates[i - 1];
    EXPECT_EQ(res.iterates[i].y, Vector(prev.x - prev.lambda / rho));
  }
  EXPECT_EQ(res.trace.algorithm, "pnp_smadmm");
}

TEST(PnPRun, ProxReferenceAveragedMatchesGeneralSolver) {
  std::mt19937_64 rng(4);
  const double tau = 0.2, rho = 1.0, r = 2.5;
  OracleModel m{OracleKind::streaming_gaussian, 0.4, NoiseCoupling::shared};
  Problem base = consensus_quadratic(4, rng, m);
  Problem general(base.loss_ptr(), m, ProximableFunction::l1(tau), base.A(), base.B(), base.c(),
                  HMetric::linearized_fixed(r));
  Schedule s = Schedule::fixed(rho, 3.0, 0.3, 2);
  RunOptions ro;
  ro.record_iterates = true;
  auto o1 = base.make_oracle(9);
  auto o2 = base.make_oracle(9);
  auto ref = run(general, o1, s, 80, ro);
  PnPOptions po;
  po.run = ro;
  po.anchor = PnPAnchor::averaged;
  po.r = r;
  auto pnp = pnp_run(base, o2, Denoiser::prox_reference(ProximableFunction::l1(tau), r), s, 80, po);
  ASSERT_EQ(ref.iterates.size(), pnp.iterates.size());
  for (std::size_t i = 0; i < ref.iterates.size(); ++i) {
    EXPECT_EQ(ref.iterates[i].x, pnp.iterates[i].x);
    EXPECT_EQ(ref.iterates[i].y, pnp.iterates[i].y);
    EXPECT_EQ(ref.iterates[i].lambda, pnp.iterates[i].lambda);
  }
}

TEST(PnPRun, ToyDeblurReachesStationaryPoint) {
  ToyDeblur t = make_toy_deblur();
  Denoiser d = Denoiser::quadratic(t.M);
  const double rho = 1.0;
  const Index n = t.K.cols();
  auto o = t.problem.make_oracle(1);
  PnPOptions opt;
  opt.run.diagnostic_interval = 10;
  opt.run.grad.mode = GradMode::exact;
  auto res = pnp_run(t.problem, o, d, Schedule::fixed(rho, 2.5, 1.0), 2000, opt);
  ASSERT_TRUE(res.best_k.has_value());
  EXPECT_LE(res.best_kkt, 1e-3);
  // Stationary point of F + rho phi: (K^T K + rho (I - M)^{-1} M) x = K^T b.
  Matrix I = Matrix::Identity(n, n);
  Matrix sys = t.K.transpose() * t.K + rho * (I - t.M).fullPivLu().solve(t.M);
  Vector xs = sys.fullPivLu().solve(t.K.transpose() * t.b);
  EXPECT_LE((res.state.x - xs).norm(), 1e-3 * (1.0 + xs.norm()));
  EXPECT_LE(res.trace.rows.back().kkt_residual2, 1e-3);
}

TEST(PnPRun, RejectsUnsupportedSetups) {
  std::mt19937_64 rng(5);
  Problem p = consensus_quadratic(3, rng);
  Denoiser d = logcosh(0.3);
  auto o = p.make_oracle(1);
  Problem general(p.loss_ptr(), OracleModel{}, ProximableFunction::zero(),
                  LinearMap::dense(gaussian(3, 3, rng)), p.B(), p.c());
  EXPECT_THROW(pnp_run(general, o, d, Schedule::fixed(1.0, 100.0, 1.0), 5), std::invalid_argument);
  ScheduleConstants c;
  c.c_rho = c.c_eta = c.c_a = c.c_nu = c.c_gamma = 1.0;
  EXPECT_THROW(pnp_run(p, o, d, Schedule::dynamic(c), 5), ScheduleError);
  PnPOptions avg;
  avg.anchor = PnPAnchor::averaged;
  avg.r = 0.5;
  EXPECT_THROW(pnp_run(p, o, d, Schedule::fixed(1.0, 3.0, 1.0), 5, avg), ScheduleError);
}

TEST(PnPRun, CustomDenoiserReportsPartialResidual) {
  std::mt19937_64 rng(6);
  Problem p = consensus_quadratic(3, rng);
  auto o = p.make_oracle(1);
  Denoiser d = Denoiser::custom([](const Vector& z) -> Vector { return 0.9 * z; });
  auto res = pnp_run(p, o, d, Schedule::fixed(1.0, 3.0, 1.0), 5);
  for (const auto& row : res.trace.rows) {
    EXPECT_TRUE(std::isnan(row.prox_residual2));
    EXPECT_TRUE(std::isfinite(row.dual_residual2));
  }
}
