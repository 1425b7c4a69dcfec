#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace pvdelay::powernet {

struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;  // p.u.
  double x = 0.0;  // p.u.
};

struct Load {
  int bus = 0;
  double p = 0.0;  // p.u.
  double q = 0.0;  // p.u.
};

/// Per-unit system of the feeder. Injected currents on the controller side are
/// d-axis peak amperes, so the current base uses the same 3/2 power-invariant
/// convention: I_base = S_base / (1.5 * E_base,peak).
struct PerUnitBase {
  double kv = 0.4;
  double mva = 1.0;

  double phase_peak_volts() const;
  double dq_current_base() const;
};

struct NetworkSpec {
  std::vector<int> buses;
  int slack = 0;
  double slack_voltage = 1.0;  // p.u.
  std::vector<Branch> branches;
  std::vector<Load> loads;
  std::vector<int> pv_buses;
  PerUnitBase base;

  /// Throws InvalidParam on malformed data and SingularNetwork if a bus is
  /// not reachable from the slack.
  void validate() const;
};

/// Bus impedance matrix over the non-slack buses, in `buses` order.
struct ZBus {
  std::vector<int> buses;
  Eigen::MatrixXcd z;
  Eigen::MatrixXcd y;           // reduced admittance (slack eliminated)
  Eigen::VectorXcd y_slack;     // coupling of each non-slack bus to the slack

  int index_of(int bus) const;
};

enum class Scalarization { RealPart, Magnitude };

/// Current-to-voltage sensitivities of the PV buses.
/// V_j = v0[j] + sum_k z(j,k) * i_dk / current_base, with i_dk in amperes.
struct SensitivityMatrix {
  Eigen::MatrixXd z;
  Eigen::VectorXd v0;
  double current_base = 1.0;
  std::vector<int> pv_buses;
};

ZBus build_zbus(const NetworkSpec& spec);

/// Complex no-PV bus voltages with loads as constant currents at nominal voltage.
Eigen::VectorXcd base_voltages(const NetworkSpec& spec, const ZBus& zbus);

SensitivityMatrix sensitivity(const NetworkSpec& spec, const ZBus& zbus,
                              Scalarization mode = Scalarization::RealPart);

Scalarization parse_scalarization(const std::string& name);

}  // namespace pvdelay::powernet
