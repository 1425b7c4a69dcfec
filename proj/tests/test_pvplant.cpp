#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "pvdelay/error.hpp"
#include "pvdelay/pvplant.hpp"
#include "test_support.hpp"

using namespace pvdelay;
using namespace pvdelay::pvplant;

namespace {

PvParams sample() {
  PvParams p;
  p.kp = {0.2, 2.0, 1.5, 0.05};
  p.ki = {3.0, 40.0, 60.0, 2.0};
  p.v_oc = 800.0;
  p.v_mpp = 650.0;
  p.i_mpp = 450.0;
  p.v_dc_ref_nom = 700.0;
  p.e_d = 326.6;
  p.tau_ref = 0.01;
  p.tau2 = 0.004;
  p.tau_cur = 0.006;
  p.c_dc = 0.02;
  p.k4 = 1000.0;
  return p;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::ConfigError;
}

}  // namespace

TEST(PvPlant, EquivalentResistance) {
  PvParams p = sample();
  p.v_oc = 40.0;
  p.v_mpp = 32.0;
  p.i_mpp = 8.0;
  EXPECT_DOUBLE_EQ(r_pv(p), 1.0);
  p.v_oc = 700.0;
  p.v_mpp = 600.0;
  p.i_mpp = 200.0;
  EXPECT_DOUBLE_EQ(r_pv(p), 0.5);
  p.i_mpp = 0.0;
  EXPECT_EQ(kind_of([&] { r_pv(p); }), ErrorKind::DegenerateCurve);
  p.i_mpp = 1.0;
  p.v_mpp = 700.0;
  EXPECT_EQ(kind_of([&] { r_pv(p); }), ErrorKind::DegenerateCurve);
}

TEST(PvPlant, InverterCurrentRatio) {
  PvParams p = sample();
  p.e_d = 400.0;
  p.v_dc_ref_nom = 600.0;
  EXPECT_DOUBLE_EQ(k2(p), 1.0);
  p.e_d = 0.0;
  EXPECT_DOUBLE_EQ(k2(p), 0.0);
  p.e_d = 326.6;
  p.v_dc_ref_nom = 700.0;
  EXPECT_NEAR(k2(p), 0.6999, 1e-4);
  p.v_dc_ref_nom = 0.0;
  EXPECT_EQ(kind_of([&] { k2(p); }), ErrorKind::InvalidParam);
}

TEST(PvPlant, CurrentLoopRow) {
  const PvParams p = sample();
  const auto s = build_subsystem(p);
  Eigen::Matrix<double, 1, 7> expected = Eigen::Matrix<double, 1, 7>::Zero();
  expected(kIdRefFiltered) = p.kp[2] / p.tau_cur;
  expected(kPi3Integrator) = p.ki[2] / p.tau_cur;
  expected(kIdCurrent) = -(p.kp[2] + 1.0) / p.tau_cur;
  EXPECT_LE((s.a.row(kIdCurrent) - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(s.b(kIdCurrent), 0.0);
  EXPECT_EQ(s.h(kIdCurrent), 0.0);
}

TEST(PvPlant, InverterInputCurrentRow) {
  const PvParams p = sample();
  const auto s = build_subsystem(p);
  EXPECT_NEAR(s.a(kDcInputCurrent, kIdCurrent), k2(p) / p.tau2, 1e-12);
  EXPECT_NEAR(s.a(kDcInputCurrent, kDcInputCurrent), -1.0 / p.tau2, 1e-12);
  for (int j = 0; j < 7; ++j) {
    if (j != kIdCurrent && j != kDcInputCurrent) EXPECT_EQ(s.a(kDcInputCurrent, j), 0.0);
  }
}

TEST(PvPlant, DcLinkRowFollowsPvCurve) {
  const PvParams p = sample();
  const auto s = build_subsystem(p);
  const double rpv = r_pv(p);
  EXPECT_NEAR(s.a(kDcVoltage, kDcVoltage), -1.0 / (rpv * p.c_dc), 1e-9);
  EXPECT_NEAR(s.a(kDcVoltage, kDcInputCurrent), -1.0 / p.c_dc, 1e-9);
  EXPECT_NEAR(s.h(kDcVoltage), 1.0 / (rpv * p.c_dc), 1e-9);
}

TEST(PvPlant, OutputSelectsInverterCurrent) {
  PvParams p = sample();
  const auto s1 = build_subsystem(p);
  p.kp[3] = 0.7;
  p.ki[3] = 9.0;
  p.k4 = 5.0;
  const auto s2 = build_subsystem(p);
  Eigen::Matrix<double, 1, 7> e5 = Eigen::Matrix<double, 1, 7>::Zero();
  e5(kIdCurrent) = 1.0;
  EXPECT_EQ(s1.c, e5);
  EXPECT_EQ(s2.c, e5);
  EXPECT_EQ(s1.d, 0.0);
}

TEST(PvPlant, InputAndDisturbancePathsDiffer) {
  const auto s = build_subsystem(sample());
  Eigen::Matrix<double, 7, 2> bh;
  bh << s.b, s.h;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(bh);
  EXPECT_GT(svd.singularValues()(1), 1e-6 * svd.singularValues()(0));
  // b enters only through PI_1; h only through the PV current.
  for (int i = 0; i < 7; ++i) {
    if (i != kPi1Integrator && i != kPi2Integrator && i != kIdRefFiltered) EXPECT_EQ(s.b(i), 0.0) << i;
  }
}

TEST(PvPlant, ReferenceStepTracksPvCurrent) {
  const PvParams p = sample();
  const auto s = build_subsystem(p);
  const Eigen::Matrix<double, 7, 7> a = s.a;
  Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(a), false);
  ASSERT_LT(es.eigenvalues().real().maxCoeff(), 0.0);
  const Eigen::Matrix<double, 7, 1> x_ss = -a.fullPivLu().solve(s.b);
  // Zero open-circuit deviation: i_pv = -x7 / R_pv.
  const double i_pv = -x_ss(kDcVoltage) / r_pv(p);
  EXPECT_NEAR(i_pv, 1.0, 1e-6);
  // Power balance at steady state: x6 = i_pv and x5 = x6 / K2.
  EXPECT_NEAR(x_ss(kDcInputCurrent), 1.0, 1e-6);
  EXPECT_NEAR(x_ss(kIdCurrent), 1.0 / k2(p), 1e-6);
}

TEST(PvPlant, ControllerMatrices) {
  PvParams p = sample();
  p.k4 = 1.0;
  p.kp[3] = 0.05;
  p.ki[3] = 2.0;
  auto c = build_controller(p);
  EXPECT_DOUBLE_EQ(c.af, 0.0);
  EXPECT_DOUBLE_EQ(c.bf, 2.0);
  EXPECT_DOUBLE_EQ(c.cf, 1.0);
  EXPECT_DOUBLE_EQ(c.df, 0.05);
  p.k4 = 2.0;
  p.kp[3] = 0.1;
  p.ki[3] = 0.5;
  c = build_controller(p);
  EXPECT_DOUBLE_EQ(c.bf, 1.0);
  EXPECT_DOUBLE_EQ(c.df, 0.2);
  p.k4 = 0.0;
  c = build_controller(p);
  EXPECT_EQ(c.bf, 0.0);
  EXPECT_EQ(c.df, 0.0);
}

TEST(PvPlant, DefaultSinglePvLoopIsStable) {
  const auto cfg = pvdelay::testing::default_config();
  for (const auto& p : cfg.pv) {
    const auto s = build_subsystem(p);
    const auto c = build_controller(p);
    // Unit per-unit sensitivity: w = -y / I_base, u = cf z + df w, z' = bf w.
    const double g = 1.0 / cfg.network.base.dq_current_base();
    Eigen::MatrixXd a(8, 8);
    a.setZero();
    a.topLeftCorner<7, 7>() = s.a - s.b * c.df * g * s.c;
    a.block<7, 1>(0, 7) = s.b * c.cf;
    a.block<1, 7>(7, 0) = -c.bf * g * s.c;
    a(7, 7) = c.af;
    Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
    EXPECT_LT(es.eigenvalues().real().maxCoeff(), 0.0);
  }
}

TEST(PvPlant, ValidationRejectsBadParameters) {
  PvParams p = sample();
  p.kp[3] = 0.0;
  p.ki[3] = 0.0;
  EXPECT_EQ(kind_of([&] { build_subsystem(p); }), ErrorKind::InvalidParam);
  p = sample();
  p.tau_cur = 0.0;
  EXPECT_EQ(kind_of([&] { build_subsystem(p); }), ErrorKind::InvalidParam);
  p = sample();
  p.c_dc = -1.0;
  EXPECT_EQ(kind_of([&] { build_subsystem(p); }), ErrorKind::InvalidParam);
  p = sample();
  p.ki[1] = -1.0;
  EXPECT_EQ(kind_of([&] { build_subsystem(p); }), ErrorKind::InvalidParam);
  p = sample();
  p.v_mpp = 900.0;
  EXPECT_EQ(kind_of([&] { build_subsystem(p); }), ErrorKind::DegenerateCurve);
}

TEST(PvPlant, NominalOperatingPoint) {
  const PvParams p = sample();
  const auto op = nominal_operating_point(p);
  EXPECT_NEAR(op.i_pv, (800.0 - 700.0) / r_pv(p), 1e-9);
  EXPECT_NEAR(op.i_d * k2(p), op.i_pv, 1e-9);
}
