#include <gtest/gtest.h>

#include <cmath>

#include <smadmm/schedules.hpp>

#include "test_util.hpp"

using namespace smadmm;

namespace {

ProblemConstants identity_problem(double L) {
  ProblemConstants p;
  p.L = L;
  p.sigma_A = p.phi_min = p.phi_max = p.sigma_min_H = p.sigma_max_H = 1.0;
  p.normA = p.normB = 1.0;
  return p;
}

ScheduleConstants unit_dynamic() {
  ScheduleConstants c;
  c.c_rho = c.c_eta = c.c_gamma = c.c_a = 1.0;
  c.c_nu = 1.0;
  return c;
}

}  // namespace

TEST(Tau, FormulaValue) {
  // phi_min = 1, phi_max = 2, sigma_A = 4: 1*4/(40*4) + 2 = 2.025
  EXPECT_DOUBLE_EQ(tau_constant(4.0, 1.0, 2.0), 4.0 / 160.0 + 2.0);
}

TEST(ConstantSchedule, IdentityMapsUnitRho) {
  ScheduleConstants c = constant_regime_constants(identity_problem(0.01));
  // Small L leaves c_rho at its floor of 1.
  EXPECT_DOUBLE_EQ(c.c_rho, 1.0);
  auto s = constant_schedule(c, 1000);
  EXPECT_NEAR(s.params.rho, 10.0, 1e-12);
  EXPECT_NEAR(s.params.eta, 0.5, 1e-12);
  EXPECT_EQ(s.m, 10);
}

TEST(ConstantSchedule, UnitHorizon) {
  ScheduleConstants c = constant_regime_constants(identity_problem(2.0));
  auto s = constant_schedule(c, 1);
  EXPECT_DOUBLE_EQ(s.params.rho, c.c_rho);
  EXPECT_EQ(s.m, static_cast<Index>(std::ceil(c.c_rho)));
}

TEST(ConstantSchedule, MomentumIsCaSquaredOverRhoSquared) {
  ScheduleConstants c;
  c.c_a = 1.0;
  c.c_rho = 1.0;
  c.sigma_A = c.phi_min = c.phi_max = 1.0;
  auto s = constant_schedule(c, 1000);
  EXPECT_NEAR(s.params.a, 0.01, 1e-15);
}

TEST(ConstantSchedule, ConstantsMatchClosedForms) {
  ProblemConstants p;
  p.L = 1.3;
  p.sigma_A = 0.7;
  p.phi_min = 0.5;
  p.phi_max = 2.0;
  p.sigma_min_H = 0.4;
  p.sigma_max_H = 3.0;
  p.normA = 1.2;
  p.normB = 0.9;
  ScheduleConstants c = constant_regime_constants(p);
  double tau = 0.25 * 0.7 / (40.0 * 4.0) + 0.35;
  EXPECT_NEAR(c.tau, tau, 1e-15);
  double L2 = 1.69;
  double ca = std::max(((1 + 2 * L2) / 2 + 20 * L2 / 0.7) * 2 / tau, 1.0);
  EXPECT_NEAR(c.c_a, ca, 1e-12 * ca);
  double r1 = (20 * L2 + 2 * 0.7 * 1.3) / (0.7 * tau);
  double r2 = tau * 9.0 / (4 * 1.44 * 0.81 * 0.4);
  EXPECT_NEAR(c.c_rho, std::max({r1, r2, 1.0}), 1e-12 * c.c_rho);
  auto s = constant_schedule(c, 27);
  EXPECT_NEAR(s.params.rho, 3.0 * c.c_rho, 1e-12 * c.c_rho);
  EXPECT_NEAR(s.params.eta, 0.5 * s.params.rho * 0.7 / (20 * 4.0), 1e-12);
  EXPECT_EQ(s.params.a, std::min(c.c_a * c.c_a / (s.params.rho * s.params.rho), 1.0));
}

TEST(ConstantSchedule, RankDeficientRejected) {
  ProblemConstants p = identity_problem(1.0);
  p.sigma_A = 0.0;
  EXPECT_THROW(constant_regime_constants(p), ScheduleError);
  ScheduleConstants c;
  c.sigma_A = 0.0;
  EXPECT_THROW(constant_schedule(c, 10), ScheduleError);
  EXPECT_THROW(constant_schedule(constant_regime_constants(identity_problem(1.0)), 0),
               ScheduleError);
}

TEST(DynamicSchedule, UnitConstantsAtEight) {
  auto p = dynamic_schedule(unit_dynamic(), 8);
  EXPECT_NEAR(p.rho, 2.0, 1e-14);
  EXPECT_NEAR(p.eta, 2.0, 1e-14);
  EXPECT_NEAR(p.gamma, 2.0, 1e-14);
  EXPECT_NEAR(p.a, 0.25, 1e-14);
  EXPECT_NEAR(p.nu, 0.5, 1e-14);
}

TEST(DynamicSchedule, UnitIteration) {
  ScheduleConstants c = unit_dynamic();
  c.c_rho = 3.0;
  c.c_a = 5.0;
  auto p = dynamic_schedule(c, 1);
  EXPECT_EQ(p.rho, 3.0);
  EXPECT_EQ(p.a, 1.0);
  c.c_a = 0.4;
  EXPECT_EQ(dynamic_schedule(c, 1).a, 0.4);
}

TEST(DynamicSchedule, ZeroIndexRejected) {
  EXPECT_THROW(dynamic_schedule(unit_dynamic(), 0), ScheduleError);
}

TEST(DynamicSchedule, Monotone) {
  ScheduleConstants c = dynamic_regime_constants(identity_problem(0.8));
  IterationParams prev = dynamic_schedule(c, 1);
  for (Index k = 2; k <= 1000; ++k) {
    IterationParams p = dynamic_schedule(c, k);
    EXPECT_GE(p.rho, prev.rho);
    EXPECT_GE(p.eta, prev.eta);
    EXPECT_LE(p.a, prev.a);
    EXPECT_GT(p.a, 0.0);
    EXPECT_LE(p.a, 1.0);
    prev = p;
  }
}

TEST(ValidateConstants, SelfBuiltConstantsPass) {
  for (double L : {0.0, 0.1, 1.0, 10.0}) {
    ProblemConstants p = identity_problem(L);
    p.sigma_A = 0.6;
    p.phi_max = 1.5;
    p.sigma_max_H = 2.0;
    EXPECT_TRUE(validate_constants(constant_regime_constants(p), Regime::constant).all_passed());
    EXPECT_TRUE(validate_constants(dynamic_regime_constants(p), Regime::dynamic).all_passed());
  }
}

TEST(ValidateConstants, EtaAboveBoundFails) {
  ScheduleConstants c = dynamic_regime_constants(identity_problem(1.0));
  c.c_eta = 1.01 * c.sigma_A * c.c_rho / (std::sqrt(160.0) * c.phi_max);
  auto r = validate_constants(c, Regime::dynamic);
  EXPECT_FALSE(r.all_passed());
  ASSERT_NE(r.find("c_eta"), nullptr);
  EXPECT_FALSE(r.find("c_eta")->passed);
  EXPECT_TRUE(r.find("c_rho")->passed);
}

TEST(ValidateConstants, StaleAfterDoublingL) {
  ScheduleConstants c = constant_regime_constants(identity_problem(1.0));
  c.L *= 2.0;
  auto r = validate_constants(c, Regime::constant);
  const ConstantCheck* ca = r.find("c_a");
  ASSERT_NE(ca, nullptr);
  // Recompute the required bound independently.
  double L2 = 4.0, tau = 1.0 / 40.0 + 0.5;
  double need = std::max(((1 + 2 * L2) / 2 + 20 * L2) * 2 / tau, 1.0);
  EXPECT_NEAR(ca->rhs, need, 1e-12 * need);
  EXPECT_LT(ca->lhs, need);
  EXPECT_FALSE(ca->passed);
  EXPECT_FALSE(r.all_passed());
}

TEST(ValidateConstants, SmallEtaConstantWarns) {
  ScheduleConstants c = dynamic_regime_constants(identity_problem(0.0));
  auto r = validate_constants(c, Regime::dynamic);
  EXPECT_LE(c.c_eta, 1.0);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(PracticalSchedule, FusedLassoRules) {
  PracticalSchedule ps;
  ps.rho = {1.0, 0.0};
  ps.eta = {0.1, 1.0 / 3.0, 0.0, 0.5};
  ps.a = {0.5, -2.0 / 3.0, 0.01, 1.0};
  Schedule s = Schedule::practical(ps);
  for (Index k : {1, 8, 27, 125, 1000, 100000}) {
    IterationParams p = s.at(k);
    double kk = static_cast<double>(k);
    EXPECT_NEAR(p.eta, std::min(0.1 * std::cbrt(kk), 0.5), 1e-12);
    EXPECT_NEAR(p.a, std::max(0.5 * std::pow(kk, -2.0 / 3.0), 0.01), 1e-12);
    EXPECT_EQ(p.rho, 1.0);
  }
  EXPECT_TRUE(s.rho_is_constant());
  EXPECT_EQ(s.regime(), "practical");
}

TEST(PracticalSchedule, MomentumCapAboveOneRejected) {
  PracticalSchedule ps;
  ps.a.hi = 1.5;
  EXPECT_THROW(Schedule::practical(ps), std::invalid_argument);
}

TEST(Schedule, KindsAgreeWithFreeFunctions) {
  ScheduleConstants c = dynamic_regime_constants(identity_problem(0.5));
  Schedule d = Schedule::dynamic(c);
  // Runtime index keeps both sides on the library cbrt rather than a folded constant.
  volatile Index k17 = 17;
  EXPECT_EQ(d.at(k17), dynamic_schedule(c, k17));
  EXPECT_EQ(d.init_samples(), 1);
  EXPECT_FALSE(d.rho_is_constant());
  ScheduleConstants cc = constant_regime_constants(identity_problem(0.5));
  Schedule k = Schedule::constant(cc, 64);
  EXPECT_EQ(k.at(1), constant_schedule(cc, 64).params);
  EXPECT_EQ(k.at(50), k.at(1));
  EXPECT_EQ(k.init_samples(), constant_schedule(cc, 64).m);
  EXPECT_THROW(k.at(0), ScheduleError);
}

TEST(EstimateLipschitz, QuadraticBoundedBySafetyTimesNorm) {
  Matrix M(2, 2);
  M << 3, 1, 1, 2;
  double top = testutil::eig_extremes(M).second;
  double est = estimate_lipschitz([&](const Vector& x) -> Vector { return M * x; }, Vector::Zero(2));
  EXPECT_LE(est, 1.5 * top * (1 + 1e-12));
  EXPECT_GE(est, 1.5 * testutil::eig_extremes(M).first);
}
