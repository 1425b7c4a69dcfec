#pragma once

#include <Eigen/Dense>
#include <array>

namespace pvdelay::pvplant {

/// Physical and controller constants of one grid-tied PV system, in SI units.
/// Index 0..3 of `kp`/`ki` are PI_1 (PV current -> dc voltage reference),
/// PI_2 (dc voltage -> d-axis current reference), PI_3 (current loop) and
/// PI_4 (grid voltage controller).
struct PvParams {
  std::array<double, 4> kp{};
  std::array<double, 4> ki{};
  double v_oc = 0.0;          // V
  double v_mpp = 0.0;         // V
  double i_mpp = 0.0;         // A
  double v_dc_ref_nom = 0.0;  // V
  double e_d = 0.0;           // V, d-axis grid voltage (peak phase)
  double tau_ref = 0.0;       // s, lag of the d-axis current reference
  double tau2 = 0.0;          // s, inverter input-current lag
  double tau_cur = 0.0;       // s, closed current-loop lag
  double c_dc = 0.0;          // F
  double k4 = 0.0;            // A per p.u. voltage error

  void validate() const;
};

/// Subsystem state indices (x1..x7 of the PV model, zero based).
enum State : int {
  kPi1Integrator = 0,
  kPi2Integrator = 1,
  kIdRefFiltered = 2,
  kPi3Integrator = 3,
  kIdCurrent = 4,
  kDcInputCurrent = 5,
  kDcVoltage = 6,
  kSubsystemStates = 7,
};

struct Subsystem {
  Eigen::Matrix<double, 7, 7> a;
  Eigen::Matrix<double, 7, 1> b;  // input: delayed PV current reference
  Eigen::Matrix<double, 7, 1> h;  // disturbance: open-circuit voltage
  Eigen::Matrix<double, 1, 7> c;  // output: d-axis current
  double d = 0.0;
};

/// Scalar PI_4 realization: z' = bf*w, u = cf*z + df*w with w = V_ref - V.
struct Controller {
  double af = 0.0;
  double bf = 0.0;
  double cf = 1.0;
  double df = 0.0;
};

double r_pv(const PvParams& p);
double k2(const PvParams& p);

Subsystem build_subsystem(const PvParams& p);
Controller build_controller(const PvParams& p);

/// Operating point with the PV held at `v_dc_ref_nom`: PV current (A) and
/// the corresponding d-axis inverter current (A).
struct OperatingPoint {
  double i_pv = 0.0;
  double i_d = 0.0;
};
OperatingPoint nominal_operating_point(const PvParams& p);

}  // namespace pvdelay::pvplant
