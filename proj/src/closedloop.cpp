#include "pvdelay/closedloop.hpp"

#include <array>
#include <string>

#include "pvdelay/error.hpp"

namespace pvdelay::closedloop {

namespace {

constexpr std::array<const char*, 7> kStateNames = {
    "pi1_int", "pi2_int", "id_ref_f", "pi3_int", "i_d", "i_dc_inv", "v_dc"};

}  // namespace

DelayedLti DelayedLti::from_matrices(Eigen::MatrixXd a, Eigen::MatrixXd a_d) {
  if (a.rows() != a.cols() || a_d.rows() != a_d.cols() || a.rows() != a_d.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "A and A_d must be square and equal size");
  }
  DelayedLti m;
  const auto n = a.rows();
  m.a = std::move(a);
  m.a_d = std::move(a_d);
  m.f = Eigen::MatrixXd::Zero(n, 0);
  m.c = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m.labels.push_back("x" + std::to_string(i + 1));
  m.voltage_map = Eigen::MatrixXd::Zero(0, n);
  m.v0 = Eigen::VectorXd::Zero(0);
  return m;
}

DelayedLti assemble(const std::vector<pvplant::Subsystem>& subsystems,
                    const std::vector<pvplant::Controller>& controllers,
                    const powernet::SensitivityMatrix& sens) {
  const int n = static_cast<int>(subsystems.size());
  if (n == 0 || static_cast<int>(controllers.size()) != n ||
      sens.z.rows() != n || sens.z.cols() != n || sens.v0.size() != n) {
    throw Error(ErrorKind::DimensionMismatch,
                "subsystems, controllers and sensitivities must agree in size");
  }
  if (!(sens.current_base > 0.0)) {
    throw Error(ErrorKind::InvalidParam, "current base must be positive");
  }
  const int m = 8 * n;
  const Eigen::MatrixXd z = sens.z / sens.current_base;

  DelayedLti out;
  out.n_pv = n;
  out.a = Eigen::MatrixXd::Zero(m, m);
  out.a_d = Eigen::MatrixXd::Zero(m, m);
  out.f = Eigen::MatrixXd::Zero(m, 2 * n);
  out.c = Eigen::MatrixXd::Zero(2 * n, m);
  out.voltage_map = Eigen::MatrixXd::Zero(n, m);
  out.v0 = sens.v0;

  for (int i = 0; i < n; ++i) {
    const auto& sub = subsystems[i];
    const auto& ctl = controllers[i];
    const int xi = 7 * i;
    const int zi = 7 * n + i;

    out.a.block<7, 7>(xi, xi) = sub.a;
    out.a(zi, zi) = ctl.af;
    for (int k = 0; k < n; ++k) {
      const auto& ck = subsystems[k].c;
      const int xk = 7 * k;
      // controller integrator sees the undelayed voltage error
      out.a.block<1, 7>(zi, xk) += -ctl.bf * z(i, k) * ck;
      // the controller output reaches the plant after the delay
      out.a_d.block<7, 7>(xi, xk) += -ctl.df * z(i, k) * (sub.b * ck);
      out.voltage_map.block<1, 7>(i, xk) = z(i, k) * ck;
    }
    out.a_d.block<7, 1>(xi, zi) = sub.b * ctl.cf;

    out.f.block<7, 1>(xi, 2 * i) = sub.h;
    out.f.block<7, 1>(xi, 2 * i + 1) = sub.b * ctl.df;
    out.f(zi, 2 * i + 1) = ctl.bf;

    out.c.block<1, 7>(i, xi) = sub.c;
  }

  for (int i = 0; i < n; ++i) {
    const std::string bus = "@bus" + std::to_string(sens.pv_buses.size() == static_cast<size_t>(n)
                                                        ? sens.pv_buses[i]
                                                        : i + 1);
    for (const char* s : kStateNames) out.labels.push_back(std::string(s) + bus);
  }
  for (int i = 0; i < n; ++i) {
    const std::string bus = "@bus" + std::to_string(sens.pv_buses.size() == static_cast<size_t>(n)
                                                        ? sens.pv_buses[i]
                                                        : i + 1);
    out.labels.push_back("pi4_int" + bus);
    out.channel_labels.push_back("v_oc" + bus);
    out.channel_labels.push_back("v_ref_offset" + bus);
  }
  return out;
}

Eigen::VectorXd steady_state(const DelayedLti& model,
                             const Eigen::VectorXd& sigma) {
  if (sigma.size() != model.channels()) {
    throw Error(ErrorKind::DimensionMismatch, "disturbance vector size mismatch");
  }
  const Eigen::MatrixXd closed = model.a + model.a_d;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(closed);
  if (lu.rank() < closed.rows()) {
    throw Error(ErrorKind::SingularEquilibrium, "A + A_d is singular");
  }
  return lu.solve(-(model.f * sigma));
}

Eigen::VectorXd bus_voltages(const DelayedLti& model, const Eigen::VectorXd& x) {
  return model.v0 + model.voltage_map * x;
}

DelayedLti permute_pvs(const DelayedLti& model, const std::vector<int>& perm) {
  const int n = model.n_pv;
  if (static_cast<int>(perm.size()) != n) {
    throw Error(ErrorKind::DimensionMismatch, "permutation size mismatch");
  }
  const int m = model.states();
  std::vector<int> state_map(m);   // new index -> old index
  std::vector<int> chan_map(2 * n);
  for (int k = 0; k < n; ++k) {
    for (int s = 0; s < 7; ++s) state_map[7 * k + s] = 7 * perm[k] + s;
    state_map[7 * n + k] = 7 * n + perm[k];
    chan_map[2 * k] = 2 * perm[k];
    chan_map[2 * k + 1] = 2 * perm[k] + 1;
  }
  DelayedLti out = model;
  for (int i = 0; i < m; ++i) {
    out.labels[i] = model.labels[state_map[i]];
    for (int j = 0; j < m; ++j) {
      out.a(i, j) = model.a(state_map[i], state_map[j]);
      out.a_d(i, j) = model.a_d(state_map[i], state_map[j]);
    }
    for (int c = 0; c < 2 * n; ++c) out.f(i, c) = model.f(state_map[i], chan_map[c]);
  }
  for (int r = 0; r < 2 * n; ++r) {
    const int old_row = r < n ? perm[r] : n + perm[r - n];
    for (int j = 0; j < m; ++j) out.c(r, j) = model.c(old_row, state_map[j]);
  }
  for (int k = 0; k < n; ++k) {
    out.v0(k) = model.v0(perm[k]);
    for (int j = 0; j < m; ++j) out.voltage_map(k, j) = model.voltage_map(perm[k], state_map[j]);
    out.channel_labels[2 * k] = model.channel_labels[2 * perm[k]];
    out.channel_labels[2 * k + 1] = model.channel_labels[2 * perm[k] + 1];
  }
  return out;
}

}  // namespace pvdelay::closedloop
