#include "pvdelay/lmi_cert.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "pvdelay/error.hpp"

namespace pvdelay::lmicert {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double max_eig(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double min_eig(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

enum Var { kP = 0, kQ = 1, kV = 2, kW = 3 };

}  // namespace

int LmiProblem::variable_count() const {
  const int m = states();
  return 3 * m * (m + 1) / 2 + m * m;
}

MatrixXd LmiProblem::main_block(const LmiVariables& x) const {
  const int m = states();
  const MatrixXd at = a + a_d;
  const MatrixXd zero = MatrixXd::Zero(m, m);
  const MatrixXd b11 = at.transpose() * x.p + x.p * at + x.w.transpose() * a_d + a_d.transpose() * x.w + x.q;
  const MatrixXd b12 = -x.w.transpose() * a_d;
  const MatrixXd b13 = a.transpose() * a_d.transpose() * x.v;
  const MatrixXd b14 = tau_d * (x.w.transpose() + x.p);
  const MatrixXd b23 = a_d.transpose() * a_d.transpose() * x.v;
  MatrixXd out(4 * m, 4 * m);
  out << b11, b12, b13, b14,                             //
      b12.transpose(), -x.q, b23, zero,                  //
      b13.transpose(), b23.transpose(), -x.v, zero,      //
      b14.transpose(), zero, zero, -x.v;
  return out;
}

sdp::SdpFeasibility LmiProblem::to_sdp() const {
  const int m = states();
  const MatrixXd id = MatrixXd::Identity(m, m);
  const MatrixXd half = 0.5 * id;
  const MatrixXd at = a + a_d;
  sdp::SdpFeasibility s;
  s.target_slack = epsilon;
  const int main = s.add_block(4 * m);
  const int bp = s.add_block(m);
  const int bq = s.add_block(m);
  const int bv = s.add_block(m);
  s.add_variable({m, true});   // P
  s.add_variable({m, true});   // Q
  s.add_variable({m, true});   // V
  s.add_variable({m, false});  // W

  // (1,1): P(A+A_d) + its transpose, A_d'W + its transpose, Q.
  s.add_term({main, 0, 0, id, kP, at});
  s.add_term({main, 0, 0, a_d.transpose(), kW, id});
  s.add_term({main, 0, 0, half, kQ, id});
  // (2,1) = -A_d'W, mirrored to (1,2) = -W'A_d.
  s.add_term({main, m, 0, -a_d.transpose(), kW, id});
  // (1,3) = A'A_d'V.
  s.add_term({main, 0, 2 * m, a.transpose() * a_d.transpose(), kV, id});
  // (1,4) = tau (W' + P): P at (1,4), W at (4,1).
  if (tau_d != 0.0) {
    s.add_term({main, 0, 3 * m, tau_d * id, kP, id});
    s.add_term({main, 3 * m, 0, tau_d * id, kW, id});
  }
  // (2,2) = -Q, (2,3) = A_d'A_d'V, (3,3) = -V, (4,4) = -V.
  s.add_term({main, m, m, -half, kQ, id});
  s.add_term({main, m, 2 * m, a_d.transpose() * a_d.transpose(), kV, id});
  s.add_term({main, 2 * m, 2 * m, -half, kV, id});
  s.add_term({main, 3 * m, 3 * m, -half, kV, id});
  // Positivity blocks.
  s.add_term({bp, 0, 0, -half, kP, id});
  s.add_term({bq, 0, 0, -half, kQ, id});
  s.add_term({bv, 0, 0, -half, kV, id});
  return s;
}

LmiVariables LmiProblem::unpack(const VectorXd& x) const {
  const sdp::SdpFeasibility s = to_sdp();
  return {s.unpack(x, kP), s.unpack(x, kQ), s.unpack(x, kV), s.unpack(x, kW)};
}

VectorXd LmiProblem::pack(const LmiVariables& vars) const {
  const sdp::SdpFeasibility s = to_sdp();
  VectorXd x = VectorXd::Zero(variable_count());
  s.pack(vars.p, kP, x);
  s.pack(vars.q, kQ, x);
  s.pack(vars.v, kV, x);
  s.pack(vars.w, kW, x);
  return x;
}

LmiProblem build_lmi(const MatrixXd& a, const MatrixXd& a_d, double tau_d, double epsilon) {
  if (a.rows() != a.cols() || a_d.rows() != a_d.cols() || a.rows() != a_d.rows() || a.rows() == 0) {
    throw Error(ErrorKind::DimensionMismatch, "A and A_d must be square and of equal size");
  }
  if (!(tau_d >= 0.0) || !std::isfinite(tau_d)) throw Error(ErrorKind::InvalidParam, "tau_d must be >= 0");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw Error(ErrorKind::InvalidParam, "epsilon must be > 0");
  if (!a.allFinite() || !a_d.allFinite()) throw Error(ErrorKind::InvalidParam, "A and A_d must be finite");
  return LmiProblem{a, a_d, tau_d, epsilon};
}

Residuals compute_residuals(const LmiProblem& problem, const LmiVariables& vars) {
  Residuals r;
  r.main_max_eig = max_eig(problem.main_block(vars));
  r.p_min_eig = min_eig(vars.p);
  r.q_min_eig = min_eig(vars.q);
  r.v_min_eig = min_eig(vars.v);
  return r;
}

sdp::KernelOptions default_kernel_options() {
  sdp::KernelOptions o;
  o.radius = 1.0;
  return o;
}

FeasibilityReport check_feasible(const LmiProblem& problem, const sdp::KernelOptions& opts) {
  const sdp::SdpFeasibility s = problem.to_sdp();
  const sdp::KernelResult kr = sdp::solve(s, opts);
  FeasibilityReport rep;
  rep.status = kr.status;
  rep.iterations = kr.iterations;
  rep.best_slack = kr.slack;
  rep.slack_lower_bound = kr.lower_bound;
  rep.message = kr.message;
  if (kr.status == sdp::KernelStatus::NumericalFailure) {
    std::ostringstream os;
    os << "kernel failed at tau_d=" << problem.tau_d << " after " << kr.iterations << " steps: " << kr.message;
    throw Error(ErrorKind::SolverFailure, os.str());
  }
  if (kr.status == sdp::KernelStatus::StrictlyFeasible) {
    Certificate c;
    c.vars = problem.unpack(kr.x);
    c.tau_d = problem.tau_d;
    c.epsilon = problem.epsilon;
    c.residuals = compute_residuals(problem, c.vars);
    const Audit audit = verify_certificate(problem, c);
    if (!audit.pass) {
      throw Error(ErrorKind::SolverFailure, "kernel certificate failed the independent audit: " + audit.reason);
    }
    rep.feasible = true;
    rep.certificate = std::move(c);
  }
  return rep;
}

Audit verify_certificate(const LmiProblem& problem, const Certificate& cert) {
  Audit out;
  const int m = problem.states();
  const auto& v = cert.vars;
  auto sized = [m](const MatrixXd& x) { return x.rows() == m && x.cols() == m; };
  if (!sized(v.p) || !sized(v.q) || !sized(v.v) || !sized(v.w)) {
    out.reason = "certificate matrices have the wrong size";
    return out;
  }
  if (!v.p.allFinite() || !v.q.allFinite() || !v.v.allFinite() || !v.w.allFinite()) {
    out.reason = "certificate matrices are not finite";
    return out;
  }
  // The delay bound claimed by the certificate is the one audited.
  LmiProblem audited = problem;
  audited.tau_d = cert.tau_d;
  out.residuals = compute_residuals(audited, v);
  const double half = 0.5 * problem.epsilon;
  std::ostringstream os;
  if (out.residuals.main_max_eig > -half) os << "main block max eigenvalue " << out.residuals.main_max_eig << "; ";
  if (out.residuals.p_min_eig < half) os << "P min eigenvalue " << out.residuals.p_min_eig << "; ";
  if (out.residuals.q_min_eig < half) os << "Q min eigenvalue " << out.residuals.q_min_eig << "; ";
  if (out.residuals.v_min_eig < half) os << "V min eigenvalue " << out.residuals.v_min_eig << "; ";
  out.reason = os.str();
  out.pass = out.reason.empty();
  if (out.pass) out.reason = "ok";
  return out;
}

}  // namespace pvdelay::lmicert
