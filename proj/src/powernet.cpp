#include "pvdelay/powernet.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <string>

#include "pvdelay/error.hpp"

namespace pvdelay::powernet {

namespace {

using cd = std::complex<double>;

std::map<int, int> non_slack_index(const NetworkSpec& spec) {
  std::map<int, int> index;
  int k = 0;
  for (int bus : spec.buses) {
    if (bus != spec.slack) index[bus] = k++;
  }
  return index;
}

}  // namespace

double PerUnitBase::phase_peak_volts() const {
  return kv * 1e3 * std::sqrt(2.0) / std::sqrt(3.0);
}

double PerUnitBase::dq_current_base() const {
  return mva * 1e6 / (1.5 * phase_peak_volts());
}

void NetworkSpec::validate() const {
  if (base.kv <= 0.0 || base.mva <= 0.0) {
    throw Error(ErrorKind::InvalidParam, "per-unit base must be positive");
  }
  std::set<int> ids(buses.begin(), buses.end());
  if (ids.size() != buses.size()) {
    throw Error(ErrorKind::InvalidParam, "duplicate bus id");
  }
  if (!ids.count(slack)) {
    throw Error(ErrorKind::InvalidParam, "slack bus not in bus list");
  }
  if (!(slack_voltage > 0.0)) {
    throw Error(ErrorKind::InvalidParam, "slack voltage must be positive");
  }
  for (const auto& br : branches) {
    if (!ids.count(br.from) || !ids.count(br.to) || br.from == br.to) {
      throw Error(ErrorKind::InvalidParam, "branch endpoints invalid");
    }
    if (br.r < 0.0) {
      throw Error(ErrorKind::InvalidParam, "negative branch resistance");
    }
    if (br.r == 0.0 && br.x == 0.0) {
      throw Error(ErrorKind::InvalidParam, "zero branch impedance");
    }
  }
  for (const auto& ld : loads) {
    if (!ids.count(ld.bus)) {
      throw Error(ErrorKind::InvalidParam, "load on unknown bus");
    }
  }
  if (pv_buses.empty()) {
    throw Error(ErrorKind::InvalidParam, "at least one PV bus required");
  }
  std::set<int> pv(pv_buses.begin(), pv_buses.end());
  if (pv.size() != pv_buses.size()) {
    throw Error(ErrorKind::InvalidParam, "PV buses must be distinct");
  }
  for (int b : pv_buses) {
    if (!ids.count(b) || b == slack) {
      throw Error(ErrorKind::InvalidParam, "PV bus must be a non-slack bus");
    }
  }

  std::map<int, std::vector<int>> adj;
  for (const auto& br : branches) {
    adj[br.from].push_back(br.to);
    adj[br.to].push_back(br.from);
  }
  std::set<int> seen{slack};
  std::queue<int> frontier;
  frontier.push(slack);
  while (!frontier.empty()) {
    int b = frontier.front();
    frontier.pop();
    for (int nb : adj[b]) {
      if (seen.insert(nb).second) frontier.push(nb);
    }
  }
  if (seen.size() != ids.size()) {
    throw Error(ErrorKind::SingularNetwork,
                "feeder has buses not connected to the slack");
  }
}

int ZBus::index_of(int bus) const {
  auto it = std::find(buses.begin(), buses.end(), bus);
  if (it == buses.end()) {
    throw Error(ErrorKind::InvalidParam,
                "bus " + std::to_string(bus) + " not in Z-bus");
  }
  return static_cast<int>(it - buses.begin());
}

ZBus build_zbus(const NetworkSpec& spec) {
  spec.validate();
  const auto index = non_slack_index(spec);
  const int n = static_cast<int>(index.size());

  ZBus out;
  out.buses.reserve(n);
  for (const auto& [bus, k] : index) out.buses.push_back(bus);
  out.y = Eigen::MatrixXcd::Zero(n, n);
  out.y_slack = Eigen::VectorXcd::Zero(n);

  for (const auto& br : spec.branches) {
    const cd y = 1.0 / cd(br.r, br.x);
    const bool from_slack = br.from == spec.slack;
    const bool to_slack = br.to == spec.slack;
    if (!from_slack) out.y(index.at(br.from), index.at(br.from)) += y;
    if (!to_slack) out.y(index.at(br.to), index.at(br.to)) += y;
    if (!from_slack && !to_slack) {
      out.y(index.at(br.from), index.at(br.to)) -= y;
      out.y(index.at(br.to), index.at(br.from)) -= y;
    } else if (from_slack) {
      out.y_slack(index.at(br.to)) -= y;
    } else {
      out.y_slack(index.at(br.from)) -= y;
    }
  }

  Eigen::FullPivLU<Eigen::MatrixXcd> lu(out.y);
  if (lu.rank() < n) {
    throw Error(ErrorKind::SingularNetwork, "bus admittance matrix is singular");
  }
  out.z = lu.inverse();
  // Y is complex symmetric, so is its inverse up to roundoff.
  out.z = 0.5 * (out.z + out.z.transpose()).eval();
  return out;
}

Eigen::VectorXcd base_voltages(const NetworkSpec& spec, const ZBus& zbus) {
  const int n = static_cast<int>(zbus.buses.size());
  Eigen::VectorXcd inj = Eigen::VectorXcd::Zero(n);
  for (const auto& ld : spec.loads) {
    if (ld.bus == spec.slack) continue;
    // constant current drawn at nominal voltage: I = conj(S / 1.0)
    inj(zbus.index_of(ld.bus)) -= cd(ld.p, -ld.q);
  }
  return zbus.z * (inj - zbus.y_slack * spec.slack_voltage);
}

SensitivityMatrix sensitivity(const NetworkSpec& spec, const ZBus& zbus,
                              Scalarization mode) {
  const int n = static_cast<int>(spec.pv_buses.size());
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = zbus.index_of(spec.pv_buses[i]);

  auto scalar = [mode](cd v) {
    return mode == Scalarization::RealPart ? v.real() : std::abs(v);
  };

  SensitivityMatrix out;
  out.pv_buses = spec.pv_buses;
  out.current_base = spec.base.dq_current_base();
  out.z.resize(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out.z(i, j) = scalar(zbus.z(idx[i], idx[j]));
  }
  const Eigen::VectorXcd v = base_voltages(spec, zbus);
  out.v0.resize(n);
  for (int i = 0; i < n; ++i) out.v0(i) = scalar(v(idx[i]));
  return out;
}

Scalarization parse_scalarization(const std::string& name) {
  if (name == "real" || name == "real-part") return Scalarization::RealPart;
  if (name == "magnitude") return Scalarization::Magnitude;
  throw Error(ErrorKind::ConfigError, "unknown scalarization '" + name + "'");
}

}  // namespace pvdelay::powernet
