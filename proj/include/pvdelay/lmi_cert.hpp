#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "pvdelay/sdp_kernel.hpp"

namespace pvdelay::lmicert {

/// Decision matrices of the delay-dependent stability LMI: symmetric P, Q, V
/// and a general W, all m x m.
struct LmiVariables {
  Eigen::MatrixXd p;
  Eigen::MatrixXd q;
  Eigen::MatrixXd v;
  Eigen::MatrixXd w;
};

/// Delay-dependent LMI for x' = A x + A_d x(t - tau). The 4m x 4m block is
///
///   [ (A+A_d)'P + P(A+A_d) + W'A_d + A_d'W + Q   -W'A_d   A'A_d'V     tau(W'+P) ]
///   [ *                                           -Q       A_d'A_d'V   0         ]
///   [ *                                           *        -V          0         ]
///   [ *                                           *        *           -V        ]
///
/// and together with -P, -Q, -V it must be <= -epsilon I.
struct LmiProblem {
  Eigen::MatrixXd a;
  Eigen::MatrixXd a_d;
  double tau_d = 0.0;
  double epsilon = 1e-6;

  int states() const { return static_cast<int>(a.rows()); }
  /// 3 m(m+1)/2 + m^2.
  int variable_count() const;

  /// The 4m x 4m block evaluated directly from its formulas.
  Eigen::MatrixXd main_block(const LmiVariables& vars) const;

  /// Block-diagonal feasibility form with blocks {main, -P, -Q, -V} and
  /// variables ordered (P, Q, V, W).
  sdp::SdpFeasibility to_sdp() const;

  LmiVariables unpack(const Eigen::VectorXd& x) const;
  Eigen::VectorXd pack(const LmiVariables& vars) const;
};

LmiProblem build_lmi(const Eigen::MatrixXd& a, const Eigen::MatrixXd& a_d, double tau_d, double epsilon);

struct Residuals {
  double main_max_eig = 0.0;
  double p_min_eig = 0.0;
  double q_min_eig = 0.0;
  double v_min_eig = 0.0;
};

struct Certificate {
  LmiVariables vars;
  double tau_d = 0.0;
  double epsilon = 0.0;
  Residuals residuals;
};

struct FeasibilityReport {
  bool feasible = false;
  std::optional<Certificate> certificate;
  /// Achieved max eigenvalue of the block-diagonal constraint.
  double best_slack = 0.0;
  /// Proven lower bound on the optimal slack (meaningful when infeasible).
  double slack_lower_bound = 0.0;
  int iterations = 0;
  sdp::KernelStatus status = sdp::KernelStatus::NumericalFailure;
  std::string message;
};

/// Kernel defaults for LMI problems: the LMI is homogeneous in its variables,
/// so a unit ball normalizes them.
sdp::KernelOptions default_kernel_options();

/// Runs the kernel. "Not feasible" means the criterion did not certify the
/// delay, never that the system is unstable. Throws SolverFailure on numerical
/// breakdown.
FeasibilityReport check_feasible(const LmiProblem& problem,
                                 const sdp::KernelOptions& opts = default_kernel_options());

struct Audit {
  bool pass = false;
  Residuals residuals;
  std::string reason;
};

/// Independent audit: recomputes the blocks from the certificate matrices and
/// requires max eig(main) <= -eps/2 and min eig(P, Q, V) >= eps/2.
Audit verify_certificate(const LmiProblem& problem, const Certificate& cert);

Residuals compute_residuals(const LmiProblem& problem, const LmiVariables& vars);

}  // namespace pvdelay::lmicert
