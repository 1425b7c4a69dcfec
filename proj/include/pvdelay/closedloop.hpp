#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pvdelay/powernet.hpp"
#include "pvdelay/pvplant.hpp"

namespace pvdelay::closedloop {

/// Delayed closed loop  x' = A x + A_d x(t - tau) + F s,  y = C x.
///
/// States are ordered as all PV subsystem blocks (7 states each) followed by
/// one controller integrator per PV. Disturbance channels are interleaved per
/// PV as (V_oc,j, r_j) where r_j = V_ref,j - v0_j is the voltage reference
/// measured from the bus base voltage. C carries one row per state block,
/// with zero rows for the controllers.
struct DelayedLti {
  Eigen::MatrixXd a;
  Eigen::MatrixXd a_d;
  Eigen::MatrixXd f;
  Eigen::MatrixXd c;
  std::vector<std::string> labels;
  std::vector<std::string> channel_labels;

  int n_pv = 0;
  /// Bus voltage deviation map: V = v0 + voltage_map * x (p.u.).
  Eigen::MatrixXd voltage_map;
  Eigen::VectorXd v0;

  int states() const { return static_cast<int>(a.rows()); }
  int channels() const { return static_cast<int>(f.cols()); }

  int subsystem_state(int pv, int local) const { return 7 * pv + local; }
  int controller_state(int pv) const { return 7 * n_pv + pv; }
  int voc_channel(int pv) const { return 2 * pv; }
  int reference_channel(int pv) const { return 2 * pv + 1; }

  /// A bare delayed system without plant bookkeeping (n_pv = 0).
  static DelayedLti from_matrices(Eigen::MatrixXd a, Eigen::MatrixXd a_d);
};

DelayedLti assemble(const std::vector<pvplant::Subsystem>& subsystems,
                    const std::vector<pvplant::Controller>& controllers,
                    const powernet::SensitivityMatrix& sens);

/// Equilibrium of the delay-free loop: -(A + A_d)^{-1} F sigma.
Eigen::VectorXd steady_state(const DelayedLti& model,
                             const Eigen::VectorXd& sigma);

/// Bus voltages (p.u.) of the PV buses for state x.
Eigen::VectorXd bus_voltages(const DelayedLti& model, const Eigen::VectorXd& x);

/// Reorders PVs: new PV k is old PV perm[k]. Result is a similarity transform.
DelayedLti permute_pvs(const DelayedLti& model, const std::vector<int>& perm);

}  // namespace pvdelay::closedloop
