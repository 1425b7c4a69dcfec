#include "pvdelay/pvplant.hpp"

#include <cmath>

#include "pvdelay/error.hpp"

namespace pvdelay::pvplant {

namespace {

// Affine signal in terms of (state, input u, disturbance V_oc).
struct Signal {
  Eigen::Matrix<double, 1, 7> x = Eigen::Matrix<double, 1, 7>::Zero();
  double u = 0.0;
  double sigma = 0.0;

  Signal operator*(double k) const { return {x * k, u * k, sigma * k}; }
  Signal operator+(const Signal& o) const {
    return {x + o.x, u + o.u, sigma + o.sigma};
  }
  Signal operator-(const Signal& o) const {
    return {x - o.x, u - o.u, sigma - o.sigma};
  }
};

Signal state(int i) {
  Signal s;
  s.x(i) = 1.0;
  return s;
}

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw Error(ErrorKind::InvalidParam, std::string(name) + " must be > 0");
  }
}

}  // namespace

void PvParams::validate() const {
  if (!(i_mpp > 0.0) || !(v_oc > v_mpp) || !(v_mpp > 0.0)) {
    throw Error(ErrorKind::DegenerateCurve,
                "PV curve requires v_oc > v_mpp > 0 and i_mpp > 0");
  }
  require_positive(v_dc_ref_nom, "v_dc_ref_nom");
  require_positive(tau_ref, "tau_ref");
  require_positive(tau2, "tau2");
  require_positive(tau_cur, "tau_cur");
  require_positive(c_dc, "c_dc");
  for (int i = 0; i < 4; ++i) {
    if (kp[i] < 0.0 || ki[i] < 0.0) {
      throw Error(ErrorKind::InvalidParam, "PI gains must be nonnegative");
    }
  }
  if (kp[3] == 0.0 && ki[3] == 0.0) {
    throw Error(ErrorKind::InvalidParam, "K_P4 and K_I4 cannot both be zero");
  }
  if (k4 < 0.0 || e_d < 0.0) {
    throw Error(ErrorKind::InvalidParam, "k4 and e_d must be nonnegative");
  }
}

double r_pv(const PvParams& p) {
  if (!(p.i_mpp > 0.0) || !(p.v_oc > p.v_mpp)) {
    throw Error(ErrorKind::DegenerateCurve,
                "linearized PV resistance needs i_mpp > 0 and v_oc > v_mpp");
  }
  return (p.v_oc - p.v_mpp) / p.i_mpp;
}

double k2(const PvParams& p) {
  if (!(p.v_dc_ref_nom > 0.0)) {
    throw Error(ErrorKind::InvalidParam, "v_dc_ref_nom must be > 0");
  }
  return 3.0 * p.e_d / (2.0 * p.v_dc_ref_nom);
}

Subsystem build_subsystem(const PvParams& p) {
  p.validate();
  const double rpv = r_pv(p);
  const double gain2 = k2(p);

  Signal u;
  u.u = 1.0;
  Signal voc;
  voc.sigma = 1.0;

  // i_pv = (V_oc - V_dc) / R_pv
  const Signal i_pv = (voc - state(kDcVoltage)) * (1.0 / rpv);
  // PI_1 acts on (i_pv - i_pv_ref) and produces the dc voltage reference.
  const Signal e1 = i_pv - u;
  const Signal v_dc_ref = e1 * p.kp[0] + state(kPi1Integrator) * p.ki[0];
  // PI_2: dc voltage above its reference raises i_d and discharges the link.
  const Signal e2 = state(kDcVoltage) - v_dc_ref;
  const Signal id_ref = e2 * p.kp[1] + state(kPi2Integrator) * p.ki[1];
  const Signal e3 = state(kIdRefFiltered) - state(kIdCurrent);

  Signal rows[kSubsystemStates];
  rows[kPi1Integrator] = e1;
  rows[kPi2Integrator] = e2;
  rows[kIdRefFiltered] = (id_ref - state(kIdRefFiltered)) * (1.0 / p.tau_ref);
  rows[kPi3Integrator] = e3;
  rows[kIdCurrent] = (e3 * p.kp[2] + state(kPi3Integrator) * p.ki[2] -
                      state(kIdCurrent)) *
                     (1.0 / p.tau_cur);
  rows[kDcInputCurrent] =
      (state(kIdCurrent) * gain2 - state(kDcInputCurrent)) * (1.0 / p.tau2);
  rows[kDcVoltage] = (i_pv - state(kDcInputCurrent)) * (1.0 / p.c_dc);

  Subsystem s;
  for (int i = 0; i < kSubsystemStates; ++i) {
    s.a.row(i) = rows[i].x;
    s.b(i) = rows[i].u;
    s.h(i) = rows[i].sigma;
  }
  s.c.setZero();
  s.c(kIdCurrent) = 1.0;
  s.d = 0.0;
  return s;
}

Controller build_controller(const PvParams& p) {
  return Controller{0.0, p.k4 * p.ki[3], 1.0, p.k4 * p.kp[3]};
}

OperatingPoint nominal_operating_point(const PvParams& p) {
  const double i_pv = (p.v_oc - p.v_dc_ref_nom) / r_pv(p);
  const double gain2 = k2(p);
  if (gain2 == 0.0) {
    throw Error(ErrorKind::InvalidParam, "zero grid voltage has no operating point");
  }
  return {i_pv, i_pv / gain2};
}

}  // namespace pvdelay::pvplant
