#include "pvdelay/ddesim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "pvdelay/error.hpp"

namespace pvdelay::ddesim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void Scenario::validate(const closedloop::DelayedLti& model) const {
  const int n = model.states();
  if (!(step > 0.0) || !std::isfinite(step)) throw Error(ErrorKind::InvalidParam, "step must be > 0");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw Error(ErrorKind::InvalidParam, "horizon must be > 0");
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw Error(ErrorKind::InvalidParam, "tau must be >= 0");
  if (tau > 0.0 && step > tau / 4.0) {
    std::ostringstream os;
    os << "step " << step << " exceeds tau/4 = " << tau / 4.0;
    throw Error(ErrorKind::StepTooLarge, os.str());
  }
  if (!(divergence_factor > 0.0)) throw Error(ErrorKind::InvalidParam, "divergence factor must be > 0");
  if (record_every < 1) throw Error(ErrorKind::InvalidParam, "record_every must be >= 1");
  if (sigma0.size() != 0 && sigma0.size() != model.channels()) {
    throw Error(ErrorKind::DimensionMismatch, "sigma0 must have one entry per channel");
  }
  double last = -1e300;
  for (const auto& e : events) {
    if (e.time < 0.0 || e.time > horizon) throw Error(ErrorKind::InvalidParam, "event time outside the horizon");
    if (e.time < last) throw Error(ErrorKind::InvalidParam, "event times must be non-decreasing");
    if (e.channel < 0 || e.channel >= model.channels()) throw Error(ErrorKind::InvalidParam, "event channel out of range");
    last = e.time;
  }
  switch (history) {
    case HistoryKind::Equilibrium:
      break;
    case HistoryKind::Constant:
      if (history_value.size() != n) throw Error(ErrorKind::DimensionMismatch, "history vector has the wrong size");
      break;
    case HistoryKind::Table:
      if (history_times.empty() || history_times.size() != history_values.size()) {
        throw Error(ErrorKind::InvalidParam, "history table needs matching times and values");
      }
      for (std::size_t i = 0; i < history_times.size(); ++i) {
        if (history_values[i].size() != n) throw Error(ErrorKind::DimensionMismatch, "history row has the wrong size");
        if (history_times[i] > 0.0) throw Error(ErrorKind::InvalidParam, "history times must be <= 0");
        if (i > 0 && history_times[i] <= history_times[i - 1]) {
          throw Error(ErrorKind::InvalidParam, "history times must be increasing");
        }
      }
      break;
    case HistoryKind::Function:
      if (!history_function) throw Error(ErrorKind::InvalidParam, "history function is empty");
      if (history_function(0.0).size() != n) throw Error(ErrorKind::DimensionMismatch, "history function has the wrong size");
      break;
  }
  for (const auto& p : probes) {
    const int limit = p.kind == ProbeKind::State    ? n
                      : p.kind == ProbeKind::Output ? static_cast<int>(model.c.rows())
                                                    : static_cast<int>(model.voltage_map.rows());
    if (p.index < 0 || p.index >= limit) throw Error(ErrorKind::InvalidParam, "probe index out of range");
  }
}

namespace {

class History {
 public:
  History(const closedloop::DelayedLti& model, const Scenario& s) : s_(s) {
    if (s.history == HistoryKind::Equilibrium) {
      const VectorXd sigma = s.sigma0.size() ? s.sigma0 : VectorXd::Zero(model.channels());
      constant_ = closedloop::steady_state(model, sigma);
    } else if (s.history == HistoryKind::Constant) {
      constant_ = s.history_value;
    }
  }

  VectorXd at(double t) const {
    if (s_.history == HistoryKind::Function) return s_.history_function(t);
    if (s_.history != HistoryKind::Table) return constant_;
    const auto& ts = s_.history_times;
    const auto& vs = s_.history_values;
    if (t <= ts.front()) return vs.front();
    if (t >= ts.back()) return vs.back();
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - ts.begin());
    const double w = (t - ts[k - 1]) / (ts[k] - ts[k - 1]);
    return (1.0 - w) * vs[k - 1] + w * vs[k];
  }

  /// Maximum over the history window [-tau, 0], sampled for functions.
  double max_abs() const {
    if (s_.history == HistoryKind::Function) {
      double m = 0.0;
      for (int i = 0; i <= 64; ++i) m = std::max(m, s_.history_function(-s_.tau * i / 64.0).cwiseAbs().maxCoeff());
      return m;
    }
    if (s_.history != HistoryKind::Table) return constant_.size() ? constant_.cwiseAbs().maxCoeff() : 0.0;
    double m = 0.0;
    for (const auto& v : s_.history_values) m = std::max(m, v.cwiseAbs().maxCoeff());
    return m;
  }

 private:
  const Scenario& s_;
  VectorXd constant_;
};

std::string probe_label(const closedloop::DelayedLti& model, const Probe& p) {
  switch (p.kind) {
    case ProbeKind::State:
      return p.index < static_cast<int>(model.labels.size()) ? model.labels[p.index] : "x" + std::to_string(p.index + 1);
    case ProbeKind::Output:
      return "y" + std::to_string(p.index + 1);
    case ProbeKind::BusVoltage: {
      std::string base = "v_pv" + std::to_string(p.index + 1);
      const std::size_t id_state = static_cast<std::size_t>(model.subsystem_state(p.index, 4));
      if (id_state < model.labels.size()) {
        const std::string& state = model.labels[id_state];
        const auto at = state.find('@');
        if (at != std::string::npos) base = "v" + state.substr(at);
      }
      return base;
    }
  }
  return "?";
}

}  // namespace

SimTrace simulate(const closedloop::DelayedLti& model, const Scenario& s) {
  s.validate(model);
  const int n = model.states();
  const double h = s.step;
  const long nsteps = std::lround(s.horizon / h);
  const History hist(model, s);

  std::vector<Probe> probes = s.probes;
  if (probes.empty()) {
    for (int i = 0; i < n; ++i) probes.push_back({ProbeKind::State, i});
  }
  SimTrace tr;
  for (const auto& p : probes) tr.labels.push_back(probe_label(model, p));
  const long nrec = nsteps / s.record_every + 1;
  tr.values.resize(nrec, static_cast<Eigen::Index>(probes.size()));
  tr.times.reserve(nrec);

  const VectorXd sigma_init = s.sigma0.size() ? s.sigma0 : VectorXd::Zero(model.channels());
  // Left-continuous steps: sigma(t) applies the events with time < t. The
  // forcing is held constant over each step at its mid-step value, so an
  // event on a grid point switches exactly there.
  auto forcing = [&](double t) -> VectorXd {
    VectorXd sg = sigma_init;
    for (const auto& e : s.events) {
      if (e.time < t) sg(e.channel) = e.value;
    }
    return model.f * sg;
  };

  // Dense node storage x(k h), k >= 0. The full horizon is kept so the
  // stencil never wraps; at desk scale this is a few megabytes.
  std::vector<VectorXd> nodes;
  nodes.reserve(static_cast<std::size_t>(nsteps) + 1);
  nodes.push_back(hist.at(0.0));

  // x(t) for t <= current time; s <= 0 comes from the history function, later
  // times from a cubic Lagrange stencil over nodes with t >= 0 only.
  auto delayed = [&](double t) -> VectorXd {
    if (t <= 0.0) return hist.at(t);
    const double u = t / h;
    long k = static_cast<long>(std::floor(u));
    const long last = static_cast<long>(nodes.size()) - 1;
    long k0 = std::max(0L, k - 1);
    if (k0 + 3 > last) k0 = std::max(0L, last - 3);
    if (last < 3) {
      // Too few nodes for a cubic stencil: linear between available nodes.
      k = std::min(k, last - 1);
      if (k < 0) return nodes[0];
      const double w = u - static_cast<double>(k);
      return (1.0 - w) * nodes[k] + w * nodes[k + 1];
    }
    const double x = u - static_cast<double>(k0);
    const double l0 = -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0;
    const double l1 = x * (x - 2.0) * (x - 3.0) / 2.0;
    const double l2 = -x * (x - 1.0) * (x - 3.0) / 2.0;
    const double l3 = x * (x - 1.0) * (x - 2.0) / 6.0;
    return l0 * nodes[k0] + l1 * nodes[k0 + 1] + l2 * nodes[k0 + 2] + l3 * nodes[k0 + 3];
  };

  const MatrixXd a_sum = model.a + model.a_d;
  VectorXd step_forcing;
  auto rhs = [&](double t, const VectorXd& x) -> VectorXd {
    if (s.tau == 0.0) return a_sum * x + step_forcing;
    return model.a * x + model.a_d * delayed(t - s.tau) + step_forcing;
  };

  auto record = [&](long step, const VectorXd& x) {
    const long row = step / s.record_every;
    tr.times.push_back(step * h);
    for (std::size_t p = 0; p < probes.size(); ++p) {
      const Probe& pr = probes[p];
      double v = 0.0;
      switch (pr.kind) {
        case ProbeKind::State:
          v = x(pr.index);
          break;
        case ProbeKind::Output:
          v = model.c.row(pr.index).dot(x);
          break;
        case ProbeKind::BusVoltage:
          v = model.v0(pr.index) + model.voltage_map.row(pr.index).dot(x);
          break;
      }
      tr.values(row, static_cast<Eigen::Index>(p)) = v;
    }
  };

  const double threshold = s.divergence_factor * std::max(hist.max_abs(), 1.0);
  VectorXd x = nodes[0];
  record(0, x);
  for (long k = 0; k < nsteps; ++k) {
    const double t = k * h;
    step_forcing = forcing(t + 0.5 * h);
    const VectorXd k1 = rhs(t, x);
    const VectorXd k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1);
    const VectorXd k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2);
    const VectorXd k4 = rhs(t + h, x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    nodes.push_back(x);
    if ((k + 1) % s.record_every == 0) record(k + 1, x);
    const double norm = x.allFinite() ? x.cwiseAbs().maxCoeff() : std::numeric_limits<double>::infinity();
    if (!tr.diverged && norm > threshold) {
      tr.diverged = true;
      tr.divergence_time = (k + 1) * h;
      if (s.stop_on_divergence) break;
    }
  }
  tr.values.conservativeResize(static_cast<Eigen::Index>(tr.times.size()), Eigen::NoChange);
  tr.final_state = x;
  tr.final_norm = x.allFinite() ? x.cwiseAbs().maxCoeff() : std::numeric_limits<double>::infinity();
  return tr;
}

std::string SimTrace::to_csv() const {
  std::ostringstream os;
  os << 't';
  for (const auto& l : labels) os << ',' << l;
  os << '\n';
  char buf[64];
  for (std::size_t i = 0; i < times.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g", times[i]);
    os << buf;
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.9g", values(static_cast<Eigen::Index>(i), j));
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

double empirical_margin(const closedloop::DelayedLti& model, const Scenario& scenario_template, double tau_lo,
                        double tau_hi, double tol) {
  if (!(tau_lo > 0.0) || !(tau_hi > tau_lo) || !(tol > 0.0)) {
    throw Error(ErrorKind::InvalidParam, "need 0 < tau_lo < tau_hi and tol > 0");
  }
  Scenario s = scenario_template;
  s.probes = {{ProbeKind::State, 0}};
  s.record_every = std::max(1, static_cast<int>(std::lround(s.horizon / s.step)));
  auto diverges = [&](double tau) {
    s.tau = tau;
    return simulate(model, s).diverged;
  };
  if (diverges(tau_lo)) throw Error(ErrorKind::BracketInvalid, "simulation diverges at the lower delay");
  if (!diverges(tau_hi)) throw Error(ErrorKind::BracketInvalid, "simulation stays bounded at the upper delay");
  double lo = tau_lo;
  double hi = tau_hi;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (diverges(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace pvdelay::ddesim
