#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "pvdelay/closedloop.hpp"
#include "pvdelay/ddesim.hpp"
#include "pvdelay/lmi_cert.hpp"
#include "pvdelay/margin.hpp"
#include "pvdelay/powernet.hpp"
#include "pvdelay/pvplant.hpp"

namespace pvdelay::config {

using nlohmann::json;

enum class Signal { VRef, VOc };

/// Step of one PV's voltage reference (p.u.) or open-circuit voltage (V).
struct ScenarioEvent {
  double time = 0.0;
  int pv = 0;
  Signal signal = Signal::VRef;
  double value = 0.0;
};

/// Recorded signal: "v_bus:<pv>", "state:<index>" or "output:<index>".
struct ScenarioConfig {
  std::string name;
  double horizon = 5.0;
  double step = 1e-3;
  double tau = 0.0;
  /// Initial voltage references (p.u.) and open-circuit voltages (V), one per PV.
  std::vector<double> v_ref;
  std::vector<double> v_oc;
  std::vector<ScenarioEvent> events;
  std::vector<std::string> probes;
  double divergence_factor = 1e6;
  int record_every = 1;
};

struct Config {
  powernet::NetworkSpec network;
  powernet::Scalarization scalarization = powernet::Scalarization::RealPart;
  std::vector<pvplant::PvParams> pv;
  margin::MarginOptions margin;
  margin::ExactOptions exact;
  std::vector<double> kp4_list;
  std::vector<double> ki4_list;
  std::vector<ScenarioConfig> scenarios;
  std::string output_dir = "out";

  /// Cross-field checks; throws ConfigError.
  void validate() const;
  /// Additional checks for the gain sweep (non-empty, positive grids).
  void validate_sweep() const;
  const ScenarioConfig& scenario(const std::string& name) const;
};

/// Parses the JSON schema documented in docs/config.md. Unknown keys and
/// missing required keys raise ConfigError.
Config parse(const json& j);
Config load(const std::filesystem::path& path);

/// Closed loop for the configured feeder and PVs.
closedloop::DelayedLti build_model(const Config& cfg);
/// Same loop with PI_4 of every PV replaced by (kp4, ki4).
closedloop::DelayedLti build_model(const Config& cfg, double kp4, double ki4);

/// Simulator scenario in deviation coordinates of `model`.
ddesim::Scenario to_scenario(const ScenarioConfig& sc, const closedloop::DelayedLti& model);

json to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const json& j);

/// Certificate together with the conditioning it refers to.
json certificate_json(const margin::MarginResult& r);
json margin_json(const margin::MarginResult& r, const margin::ExactMargin& exact);
json exact_json(const margin::ExactMargin& r);
json audit_json(const lmicert::Audit& a, double tau_original);

/// Re-audits a certificate file against `model`: the stored conditioning is
/// applied to the model matrices and the LMI blocks are recomputed.
lmicert::Audit audit_certificate(const closedloop::DelayedLti& model, const json& certificate);

/// Writes `content` to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace pvdelay::config
