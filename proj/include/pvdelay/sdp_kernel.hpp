#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace pvdelay::sdp {

/// A matrix-valued decision variable. Symmetric variables are vectorized as
/// their upper triangle with off-diagonal entries scaled by sqrt(2), so the
/// Euclidean norm of the packed vector equals the Frobenius norm of the matrix.
/// General variables are packed row-major.
struct MatrixVariable {
  int dim = 1;
  bool symmetric = true;

  int packed_size() const { return symmetric ? dim * (dim + 1) / 2 : dim * dim; }
};

/// One affine piece `left * X * right` placed at (row, col) inside an LMI
/// block. Its transpose is added at (col, row), so every term contributes a
/// symmetric matrix; a term on a diagonal sub-block contributes
/// `left*X*right + (left*X*right)^T`.
struct Term {
  int block = 0;
  int row = 0;
  int col = 0;
  Eigen::MatrixXd left;   // rows x dim
  int variable = 0;
  Eigen::MatrixXd right;  // dim x cols
};

/// Feasibility problem: find x with F(x) = F0 + sum_i x_i F_i <= -target_slack*I
/// on every block, where the F_i are given implicitly through `terms`.
struct SdpFeasibility {
  std::vector<int> block_sizes;
  std::vector<Eigen::MatrixXd> f0;
  std::vector<MatrixVariable> variables;
  std::vector<Term> terms;
  double target_slack = 1e-6;

  int add_block(int size);
  int add_variable(MatrixVariable v);
  void add_term(Term t);

  /// Adds a scalar variable whose coefficient is the given symmetric matrix on
  /// each block (one entry per block; empty or zero matrices allowed). Returns
  /// the variable index.
  int add_scalar_variable(const std::vector<Eigen::MatrixXd>& coefficient);

  int variable_count() const;
  int variable_offset(int var) const;
  int total_dimension() const;
  void validate() const;

  Eigen::MatrixXd unpack(const Eigen::VectorXd& x, int var) const;
  void pack(const Eigen::MatrixXd& value, int var, Eigen::VectorXd& x) const;

  std::vector<Eigen::MatrixXd> evaluate(const Eigen::VectorXd& x) const;
  /// Coefficient of scalar variable `k` (F(e_k) - F0), one matrix per block.
  std::vector<Eigen::MatrixXd> coefficient(int k) const;
};

/// Largest eigenvalue of F(x) over all blocks.
double max_eigenvalue(const SdpFeasibility& problem, const Eigen::VectorXd& x);

struct KernelOptions {
  double gap_tol = 1e-8;
  int max_newton_steps = 200;
  double armijo = 0.01;
  double backtrack = 0.5;
  /// Barrier weight growth per outer iteration.
  double weight_growth = 20.0;
  /// Newton decrement^2 / 2 below which an inner centering stops.
  double centering_tol = 1e-6;
  /// The solver works inside the ball ||x|| <= radius. Problems with F0 = 0
  /// are scale invariant, so any radius normalizes them.
  double radius = 1e3;
};

enum class KernelStatus { StrictlyFeasible, NotCertified, NumericalFailure };

std::string to_string(KernelStatus s);

struct BarrierStep {
  double weight = 0.0;       // objective weight on the slack variable
  double slack_bound = 0.0;  // phase-1 variable t, an upper bound on lambda_max
  double lower_bound = 0.0;  // t - gap: lower bound on the optimal slack
  int newton_steps = 0;      // cumulative
};

struct KernelResult {
  KernelStatus status = KernelStatus::NumericalFailure;
  Eigen::VectorXd x;
  /// True lambda_max(F(x)), recomputed from x after the solve.
  double slack = 0.0;
  /// Best proven lower bound on min_x lambda_max(F(x)) inside the ball.
  double lower_bound = -1e300;
  int iterations = 0;
  std::vector<BarrierStep> trace;
  std::string message;
};

/// Phase-1 barrier path following: minimizes t subject to F(x) <= t*I and
/// ||x|| <= radius. Stops as soon as lambda_max(F(x)) <= -target_slack
/// (StrictlyFeasible) or once the duality gap proves t* > -target_slack
/// (NotCertified).
KernelResult solve(const SdpFeasibility& problem, const KernelOptions& opts = {});

}  // namespace pvdelay::sdp
