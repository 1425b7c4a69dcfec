#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pvdelay/closedloop.hpp"
#include "pvdelay/lmi_cert.hpp"
#include "pvdelay/sdp_kernel.hpp"

namespace pvdelay::margin {

/// Numerical conditioning applied before the LMI is solved. The conditioned
/// system is A' = D^{-1} A D / k, A_d' = D^{-1} A_d D / k with diagonal D and
/// time scale k, so a delay tau of the original system is k * tau for the
/// conditioned one. The LMI is feasible for one iff it is feasible for the
/// other.
struct Conditioning {
  Eigen::VectorXd scale;  // diagonal of D
  double time_scale = 1.0;
  Eigen::MatrixXd a;
  Eigen::MatrixXd a_d;
};

/// Power-of-two diagonal balancing of |A| + |A_d| followed by time scaling so
/// that ||A' + A_d'||_F = 1. With `enabled = false` D = I and k = 1.
Conditioning condition(const Eigen::MatrixXd& a, const Eigen::MatrixXd& a_d, bool enabled = true);

struct MarginOptions {
  double tau_max = 5.0;
  double tol = 1e-3;
  /// Strictness margin relative to ||A' + A_d'||_F of the conditioned system.
  double epsilon = 1e-9;
  bool condition = true;
  sdp::KernelOptions kernel = lmicert::default_kernel_options();
};

enum class Verdict { Certified, NotCertified, Unknown };

std::string to_string(Verdict v);

struct TraceEntry {
  double tau = 0.0;
  Verdict verdict = Verdict::Unknown;
  double slack = 0.0;
  int iterations = 0;
};

struct MarginResult {
  double tau_certified = 0.0;
  double bisection_tol = 0.0;
  double tau_max = 0.0;
  double epsilon_abs = 0.0;
  std::vector<TraceEntry> trace;
  /// Certificate for the conditioned system at k * tau_certified.
  std::optional<lmicert::Certificate> certificate;
  Conditioning conditioning;
};

/// Largest delay certified by the LMI, by bisection on [0, tau_max].
/// Throws DelayFreeUnstable when A + A_d is not Hurwitz and
/// NotCertifiedAtZero when the LMI fails already at tau = 0.
MarginResult certified_margin(const Eigen::MatrixXd& a, const Eigen::MatrixXd& a_d,
                              const MarginOptions& opts = {});
MarginResult certified_margin(const closedloop::DelayedLti& model, const MarginOptions& opts = {});

/// Trace entries that contradict monotone feasibility: certified above
/// tau_certified + tol or not certified below tau_certified - tol.
std::vector<TraceEntry> bisection_violations(const MarginResult& r);

/// LMI problem that the certificate of `r` refers to.
lmicert::LmiProblem conditioned_problem(const MarginResult& r);

struct ExactOptions {
  double omega_max = 1e3;
  int grid = 10000;
  /// The log grid spans [omega_max * omega_min_ratio, omega_max].
  double omega_min_ratio = 1e-8;
};

struct ExactMargin {
  bool bounded = false;
  double tau = 0.0;
  double omega = 0.0;
  /// Bound on the error of tau due to the frequency refinement.
  double resolution = 0.0;
  int crossings = 0;
  std::vector<std::string> advisories;
};

/// Exact delay margin from the imaginary-axis crossings of
/// det(jw I - A - z A_d) = 0 with |z| = 1. Requires A + A_d Hurwitz.
ExactMargin exact_margin(const Eigen::MatrixXd& a, const Eigen::MatrixXd& a_d, const ExactOptions& opts = {});
ExactMargin exact_margin(const closedloop::DelayedLti& model, const ExactOptions& opts = {});

/// Number of roots of det(jw I - A - z A_d) = 0 inside the unit disc.
int roots_inside_unit_disc(const Eigen::MatrixXd& a, const Eigen::MatrixXd& a_d, double omega);

struct SweepCell {
  double kp4 = 0.0;
  double ki4 = 0.0;
  std::optional<double> tau;
  std::string error;
};

struct SweepTable {
  std::vector<double> kp4;
  std::vector<double> ki4;
  std::vector<SweepCell> cells;  // row-major: kp4 rows, ki4 columns

  const SweepCell& at(std::size_t row, std::size_t col) const { return cells.at(row * ki4.size() + col); }
  /// Header row of K_I4 values, first column K_P4 values, seconds with three
  /// decimals; failed cells hold the error kind.
  std::string to_csv() const;
};

using ModelFactory = std::function<closedloop::DelayedLti(double kp4, double ki4)>;

/// One certified_margin per (kp4, ki4) cell on up to `workers` threads; the
/// table is ordered by grid index regardless of completion order.
SweepTable sweep_gains(const ModelFactory& factory, const std::vector<double>& kp4_list,
                       const std::vector<double>& ki4_list, const MarginOptions& opts, int workers);

/// True when every row is non-increasing in K_I4 and every column is
/// non-increasing in K_P4, allowing `slack` for bisection resolution.
bool follows_gain_trend(const SweepTable& t, double slack);

}  // namespace pvdelay::margin
