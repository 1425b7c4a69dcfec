#include <gtest/gtest.h>

#include <random>

#include "lmi_oracle.hpp"
#include "pvdelay/error.hpp"
#include "pvdelay/lmi_cert.hpp"

using namespace pvdelay;
using namespace pvdelay::lmicert;
using Eigen::MatrixXd;

namespace {

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

MatrixXd random_symmetric(int m, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd x(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) x(i, j) = n(rng);
  }
  return 0.5 * (x + x.transpose());
}

MatrixXd random_general(int m, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd x(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) x(i, j) = n(rng);
  }
  return x;
}

Certificate certify(const LmiProblem& problem) {
  const auto rep = check_feasible(problem);
  EXPECT_TRUE(rep.feasible) << rep.message;
  return *rep.certificate;
}

}  // namespace

TEST(LmiCert, ScalarHandExpansion) {
  const auto problem = build_lmi(scalar(0.0), scalar(-1.0), 0.0, 1e-6);
  LmiVariables vars{scalar(1.0), scalar(1.0), scalar(1.0), scalar(0.0)};
  const MatrixXd b = problem.main_block(vars);
  EXPECT_DOUBLE_EQ(b(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(b(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(b(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(b(1, 1), -1.0);
  EXPECT_DOUBLE_EQ(b(1, 2), 1.0);
  EXPECT_DOUBLE_EQ(b(2, 2), -1.0);
  EXPECT_DOUBLE_EQ(b(3, 3), -1.0);
  const auto blocks = problem.to_sdp().evaluate(problem.pack(vars));
  EXPECT_LE((blocks[0] - b).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LmiCert, AffineMapMatchesLiteralFormulas) {
  std::mt19937_64 rng(7321);
  std::uniform_real_distribution<double> tau(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 3;
    const MatrixXd a = random_general(m, rng);
    const MatrixXd ad = random_general(m, rng);
    const double t = tau(rng);
    const auto problem = build_lmi(a, ad, t, 1e-6);
    LmiVariables vars{random_symmetric(m, rng), random_symmetric(m, rng), random_symmetric(m, rng),
                      random_general(m, rng)};
    const MatrixXd oracle = pvdelay::testing::literal_lmi_block(a, ad, t, vars.p, vars.q, vars.v, vars.w);
    const auto blocks = problem.to_sdp().evaluate(problem.pack(vars));
    ASSERT_EQ(blocks.size(), 4u);
    EXPECT_LE((blocks[0] - oracle).cwiseAbs().maxCoeff(), 1e-12) << "trial " << trial;
    EXPECT_LE((problem.main_block(vars) - oracle).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((blocks[1] + vars.p).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((blocks[2] + vars.q).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((blocks[3] + vars.v).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(LmiCert, ZeroDelayAnnihilatesCouplingBlock) {
  std::mt19937_64 rng(99);
  const int m = 3;
  const auto problem = build_lmi(random_general(m, rng), random_general(m, rng), 0.0, 1e-6);
  LmiVariables vars{random_symmetric(m, rng), random_symmetric(m, rng), random_symmetric(m, rng),
                    random_general(m, rng)};
  const auto blocks = problem.to_sdp().evaluate(problem.pack(vars));
  EXPECT_TRUE(blocks[0].block(0, 3 * m, m, m).isZero(0.0));
  EXPECT_TRUE(blocks[0].block(3 * m, 0, m, m).isZero(0.0));
}

TEST(LmiCert, PackUnpackRoundTrip) {
  std::mt19937_64 rng(5);
  const int m = 4;
  const auto problem = build_lmi(random_general(m, rng), random_general(m, rng), 0.3, 1e-6);
  EXPECT_EQ(problem.variable_count(), 3 * m * (m + 1) / 2 + m * m);
  LmiVariables vars{random_symmetric(m, rng), random_symmetric(m, rng), random_symmetric(m, rng),
                    random_general(m, rng)};
  const auto back = problem.unpack(problem.pack(vars));
  EXPECT_LE((back.p - vars.p).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((back.q - vars.q).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((back.v - vars.v).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(back.w, vars.w);
}

TEST(LmiCert, ScalarDelayHalfIsCertified) {
  const auto problem = build_lmi(scalar(0.0), scalar(-1.0), 0.5, 1e-6);
  const auto cert = certify(problem);
  const auto audit = verify_certificate(problem, cert);
  EXPECT_TRUE(audit.pass) << audit.reason;
  EXPECT_LE(audit.residuals.main_max_eig, -0.5e-6);
}

TEST(LmiCert, ScalarDelayTwoIsNotCertified) {
  const auto rep = check_feasible(build_lmi(scalar(0.0), scalar(-1.0), 2.0, 1e-6));
  EXPECT_FALSE(rep.feasible);
  EXPECT_FALSE(rep.certificate.has_value());
  EXPECT_GE(rep.best_slack, -1e-6);
}

TEST(LmiCert, DelayFreeUnstableIsNeverCertified) {
  for (double tau : {0.0, 0.1, 1.0}) {
    const auto rep = check_feasible(build_lmi(scalar(1.0), scalar(0.0), tau, 1e-6));
    EXPECT_FALSE(rep.feasible) << tau;
  }
}

TEST(LmiCert, AuditCatchesNegatedP) {
  const auto problem = build_lmi(scalar(0.0), scalar(-1.0), 0.5, 1e-6);
  auto cert = certify(problem);
  cert.vars.p = -cert.vars.p;
  const auto audit = verify_certificate(problem, cert);
  EXPECT_FALSE(audit.pass);
  EXPECT_LT(audit.residuals.p_min_eig, 0.0);
}

TEST(LmiCert, AuditCatchesPerturbedW) {
  const auto problem = build_lmi(scalar(0.0), scalar(-1.0), 0.5, 1e-6);
  auto cert = certify(problem);
  cert.vars.w.array() += 1e6;
  const auto audit = verify_certificate(problem, cert);
  EXPECT_FALSE(audit.pass);
  EXPECT_GT(audit.residuals.main_max_eig, 0.0);
}

TEST(LmiCert, ScaledCertificatesStayValid) {
  MatrixXd a(2, 2), ad(2, 2);
  a << -2.0, 0.5, 0.0, -1.0;
  ad << -0.5, 0.0, 0.3, -0.4;
  const auto problem = build_lmi(a, ad, 0.2, 1e-6);
  const auto cert = certify(problem);
  for (double alpha : {2.0, 10.0, 1e3}) {
    Certificate scaled = cert;
    scaled.vars.p *= alpha;
    scaled.vars.q *= alpha;
    scaled.vars.v *= alpha;
    scaled.vars.w *= alpha;
    EXPECT_TRUE(verify_certificate(problem, scaled).pass) << alpha;
  }
}

TEST(LmiCert, FeasibilityNestsDownward) {
  MatrixXd a(2, 2), ad(2, 2);
  a << -1.0, 0.2, -0.3, -2.0;
  ad << -0.8, 0.1, 0.0, -0.6;
  for (double tau : {0.05, 0.2, 0.4}) {
    const auto hi = check_feasible(build_lmi(a, ad, tau, 1e-6));
    if (!hi.feasible) continue;
    EXPECT_TRUE(check_feasible(build_lmi(a, ad, 0.9 * tau, 1e-6)).feasible) << tau;
  }
}

TEST(LmiCert, BuildRejectsBadInput) {
  try {
    build_lmi(MatrixXd::Zero(2, 2), MatrixXd::Zero(3, 3), 0.1, 1e-6);
    FAIL() << "expected DimensionMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
  EXPECT_THROW(build_lmi(scalar(0.0), scalar(-1.0), -0.1, 1e-6), Error);
  EXPECT_THROW(build_lmi(scalar(0.0), scalar(-1.0), 0.1, 0.0), Error);
}
