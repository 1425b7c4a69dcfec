#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "pvdelay/closedloop.hpp"

namespace pvdelay::ddesim {

/// Step change of one disturbance channel, effective for t > time.
struct Event {
  double time = 0.0;
  int channel = 0;
  double value = 0.0;
};

enum class HistoryKind {
  /// Constant at the delay-free equilibrium for the initial disturbance.
  Equilibrium,
  /// Constant vector `history_value`.
  Constant,
  /// Piecewise-linear table over (history_times, history_values) on [-tau, 0];
  /// held constant outside the table.
  Table,
  /// Arbitrary function of t <= 0.
  Function,
};

enum class ProbeKind { State, Output, BusVoltage };

struct Probe {
  ProbeKind kind = ProbeKind::State;
  int index = 0;
};

struct Scenario {
  double horizon = 1.0;
  double step = 1e-3;
  double tau = 0.0;
  HistoryKind history = HistoryKind::Equilibrium;
  Eigen::VectorXd history_value;
  std::vector<double> history_times;
  std::vector<Eigen::VectorXd> history_values;
  std::function<Eigen::VectorXd(double)> history_function;
  /// Disturbance at t <= 0 (one entry per channel; empty means zero).
  Eigen::VectorXd sigma0;
  std::vector<Event> events;
  /// Recorded signals; empty records every state.
  std::vector<Probe> probes;
  /// Divergence when ||x||_inf > factor * max(initial-history max, 1).
  double divergence_factor = 1e6;
  /// Record every n-th step.
  int record_every = 1;
  /// Stop integrating once divergence is detected.
  bool stop_on_divergence = true;

  void validate(const closedloop::DelayedLti& model) const;
};

struct SimTrace {
  std::vector<double> times;
  std::vector<std::string> labels;
  /// One row per recorded time, one column per probe.
  Eigen::MatrixXd values;
  bool diverged = false;
  double divergence_time = 0.0;
  double final_norm = 0.0;
  Eigen::VectorXd final_state;

  /// CSV with header `t,<labels>` and 9 significant digits.
  std::string to_csv() const;
};

SimTrace simulate(const closedloop::DelayedLti& model, const Scenario& scenario);

/// Bisection on tau using the divergence flag. Requires the scenario to be
/// bounded at tau_lo and divergent at tau_hi (BracketInvalid otherwise).
double empirical_margin(const closedloop::DelayedLti& model, const Scenario& scenario_template, double tau_lo,
                        double tau_hi, double tol);

}  // namespace pvdelay::ddesim
