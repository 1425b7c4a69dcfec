#include "pvdelay/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>
#include <unistd.h>

#include "pvdelay/error.hpp"

namespace pvdelay::config {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); }

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) fail(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) fail("unknown key '" + key + "' in " + where);
  }
}

const json& required(const json& j, const std::string& key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) fail("missing key '" + key + "' in " + where);
  return *it;
}

double number(const json& j, const std::string& what) {
  if (!j.is_number()) fail(what + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(what + " must be finite");
  return v;
}

double number_or(const json& j, const std::string& key, double fallback, const std::string& where) {
  const auto it = j.find(key);
  return it == j.end() ? fallback : number(*it, where + "." + key);
}

int integer(const json& j, const std::string& what) {
  if (!j.is_number_integer()) fail(what + " must be an integer");
  return j.get<int>();
}

std::vector<double> numbers(const json& j, const std::string& what) {
  if (!j.is_array()) fail(what + " must be an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], what + "[" + std::to_string(i) + "]"));
  return out;
}

std::string text(const json& j, const std::string& what) {
  if (!j.is_string()) fail(what + " must be a string");
  return j.get<std::string>();
}

powernet::NetworkSpec parse_network(const json& j, powernet::Scalarization& mode) {
  const std::string where = "network";
  check_keys(j, where,
             {"base_kv", "base_mva", "slack", "slack_voltage", "buses", "branches", "loads", "pv_buses",
              "scalarization"});
  powernet::NetworkSpec net;
  net.base.kv = number_or(j, "base_kv", net.base.kv, where);
  net.base.mva = number_or(j, "base_mva", net.base.mva, where);
  net.slack = integer(required(j, "slack", where), "network.slack");
  net.slack_voltage = number_or(j, "slack_voltage", net.slack_voltage, where);
  const json& buses = required(j, "buses", where);
  if (!buses.is_array()) fail("network.buses must be an array");
  for (const auto& b : buses) net.buses.push_back(integer(b, "network.buses[]"));
  for (const auto& b : required(j, "branches", where)) {
    check_keys(b, "network.branches[]", {"from", "to", "r", "x"});
    net.branches.push_back({integer(required(b, "from", "branch"), "branch.from"),
                            integer(required(b, "to", "branch"), "branch.to"),
                            number(required(b, "r", "branch"), "branch.r"),
                            number(required(b, "x", "branch"), "branch.x")});
  }
  if (const auto it = j.find("loads"); it != j.end()) {
    for (const auto& l : *it) {
      check_keys(l, "network.loads[]", {"bus", "p", "q"});
      net.loads.push_back({integer(required(l, "bus", "load"), "load.bus"), number_or(l, "p", 0.0, "load"),
                           number_or(l, "q", 0.0, "load")});
    }
  }
  const json& pv = required(j, "pv_buses", where);
  if (!pv.is_array()) fail("network.pv_buses must be an array");
  for (const auto& b : pv) net.pv_buses.push_back(integer(b, "network.pv_buses[]"));
  if (const auto it = j.find("scalarization"); it != j.end()) {
    mode = powernet::parse_scalarization(text(*it, "network.scalarization"));
  }
  return net;
}

pvplant::PvParams parse_pv(const json& j, std::size_t index) {
  const std::string where = "pv[" + std::to_string(index) + "]";
  check_keys(j, where,
             {"kp", "ki", "v_oc", "v_mpp", "i_mpp", "v_dc_ref_nom", "e_d", "tau_ref", "tau2", "tau_cur", "c_dc",
              "k4"});
  pvplant::PvParams p;
  const auto kp = numbers(required(j, "kp", where), where + ".kp");
  const auto ki = numbers(required(j, "ki", where), where + ".ki");
  if (kp.size() != 4 || ki.size() != 4) fail(where + ": kp and ki need four entries (PI_1..PI_4)");
  std::copy(kp.begin(), kp.end(), p.kp.begin());
  std::copy(ki.begin(), ki.end(), p.ki.begin());
  auto field = [&](const char* key) { return number(required(j, key, where), where + "." + key); };
  p.v_oc = field("v_oc");
  p.v_mpp = field("v_mpp");
  p.i_mpp = field("i_mpp");
  p.v_dc_ref_nom = field("v_dc_ref_nom");
  p.e_d = field("e_d");
  p.tau_ref = field("tau_ref");
  p.tau2 = field("tau2");
  p.tau_cur = field("tau_cur");
  p.c_dc = field("c_dc");
  p.k4 = field("k4");
  return p;
}

ScenarioConfig parse_scenario(const json& j, std::size_t index) {
  const std::string where = "scenarios[" + std::to_string(index) + "]";
  check_keys(j, where,
             {"name", "horizon", "step", "tau", "v_ref", "v_oc", "events", "probes", "divergence_factor",
              "record_every"});
  ScenarioConfig s;
  s.name = text(required(j, "name", where), where + ".name");
  s.horizon = number_or(j, "horizon", s.horizon, where);
  s.step = number_or(j, "step", s.step, where);
  s.tau = number_or(j, "tau", s.tau, where);
  s.v_ref = numbers(required(j, "v_ref", where), where + ".v_ref");
  s.v_oc = numbers(required(j, "v_oc", where), where + ".v_oc");
  s.divergence_factor = number_or(j, "divergence_factor", s.divergence_factor, where);
  if (const auto it = j.find("record_every"); it != j.end()) s.record_every = integer(*it, where + ".record_every");
  if (const auto it = j.find("events"); it != j.end()) {
    for (const auto& e : *it) {
      check_keys(e, where + ".events[]", {"time", "pv", "signal", "value"});
      ScenarioEvent ev;
      ev.time = number(required(e, "time", "event"), "event.time");
      ev.pv = integer(required(e, "pv", "event"), "event.pv");
      const std::string sig = text(required(e, "signal", "event"), "event.signal");
      if (sig == "v_ref") {
        ev.signal = Signal::VRef;
      } else if (sig == "v_oc") {
        ev.signal = Signal::VOc;
      } else {
        fail("event.signal must be 'v_ref' or 'v_oc', got '" + sig + "'");
      }
      ev.value = number(required(e, "value", "event"), "event.value");
      s.events.push_back(ev);
    }
  }
  if (const auto it = j.find("probes"); it != j.end()) {
    for (const auto& p : *it) s.probes.push_back(text(p, where + ".probes[]"));
  }
  return s;
}

ddesim::Probe parse_probe(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) fail("probe '" + spec + "' must look like kind:index");
  const std::string kind = spec.substr(0, colon);
  int index = 0;
  try {
    std::size_t used = 0;
    index = std::stoi(spec.substr(colon + 1), &used);
    if (used != spec.size() - colon - 1) throw std::invalid_argument(spec);
  } catch (const std::exception&) {
    fail("probe '" + spec + "' has a malformed index");
  }
  if (kind == "v_bus") return {ddesim::ProbeKind::BusVoltage, index};
  if (kind == "state") return {ddesim::ProbeKind::State, index};
  if (kind == "output") return {ddesim::ProbeKind::Output, index};
  fail("probe kind '" + kind + "' is not one of v_bus, state, output");
}

}  // namespace

void Config::validate() const {
  if (pv.size() != network.pv_buses.size()) {
    fail("pv list has " + std::to_string(pv.size()) + " entries but network.pv_buses has " +
         std::to_string(network.pv_buses.size()));
  }
  if (pv.empty()) fail("at least one PV is required");
  if (!(margin.tau_max > 0.0)) fail("margin.tau_max must be > 0");
  if (!(margin.tol > 0.0)) fail("margin.tol must be > 0");
  if (!(margin.epsilon > 0.0)) fail("margin.epsilon must be > 0");
  if (!(exact.omega_max > 0.0) || exact.grid < 2) fail("exact.omega_max must be > 0 and exact.grid >= 2");
  std::set<std::string> names;
  for (const auto& s : scenarios) {
    if (!names.insert(s.name).second) fail("duplicate scenario name '" + s.name + "'");
    if (s.v_ref.size() != pv.size() || s.v_oc.size() != pv.size()) {
      fail("scenario '" + s.name + "' needs one v_ref and one v_oc per PV");
    }
    for (const auto& e : s.events) {
      if (e.pv < 0 || e.pv >= static_cast<int>(pv.size())) fail("scenario '" + s.name + "' event pv out of range");
    }
    for (const auto& p : s.probes) parse_probe(p);
  }
  if (output_dir.empty()) fail("output_dir must not be empty");
}

void Config::validate_sweep() const {
  if (kp4_list.empty() || ki4_list.empty()) fail("sweep grids kp4 and ki4 must be non-empty");
  for (double v : kp4_list) {
    if (!(v >= 0.0)) fail("sweep kp4 values must be >= 0");
  }
  for (double v : ki4_list) {
    if (!(v >= 0.0)) fail("sweep ki4 values must be >= 0");
  }
}

const ScenarioConfig& Config::scenario(const std::string& name) const {
  if (scenarios.empty()) fail("config has no scenarios");
  if (name.empty()) return scenarios.front();
  for (const auto& s : scenarios) {
    if (s.name == name) return s;
  }
  fail("no scenario named '" + name + "'");
}

Config parse(const json& j) {
  check_keys(j, "config", {"network", "pv", "margin", "exact", "sweep", "scenarios", "output_dir"});
  Config cfg;
  cfg.network = parse_network(required(j, "network", "config"), cfg.scalarization);
  const json& pv = required(j, "pv", "config");
  if (!pv.is_array()) fail("pv must be an array");
  for (std::size_t i = 0; i < pv.size(); ++i) cfg.pv.push_back(parse_pv(pv[i], i));
  if (const auto it = j.find("margin"); it != j.end()) {
    check_keys(*it, "margin", {"tau_max", "tol", "epsilon", "condition"});
    cfg.margin.tau_max = number_or(*it, "tau_max", cfg.margin.tau_max, "margin");
    cfg.margin.tol = number_or(*it, "tol", cfg.margin.tol, "margin");
    cfg.margin.epsilon = number_or(*it, "epsilon", cfg.margin.epsilon, "margin");
    if (const auto c = it->find("condition"); c != it->end()) {
      if (!c->is_boolean()) fail("margin.condition must be a boolean");
      cfg.margin.condition = c->get<bool>();
    }
  }
  if (const auto it = j.find("exact"); it != j.end()) {
    check_keys(*it, "exact", {"omega_max", "grid", "omega_min_ratio"});
    cfg.exact.omega_max = number_or(*it, "omega_max", cfg.exact.omega_max, "exact");
    cfg.exact.omega_min_ratio = number_or(*it, "omega_min_ratio", cfg.exact.omega_min_ratio, "exact");
    if (const auto g = it->find("grid"); g != it->end()) cfg.exact.grid = integer(*g, "exact.grid");
  }
  if (const auto it = j.find("sweep"); it != j.end()) {
    check_keys(*it, "sweep", {"kp4", "ki4"});
    cfg.kp4_list = numbers(required(*it, "kp4", "sweep"), "sweep.kp4");
    cfg.ki4_list = numbers(required(*it, "ki4", "sweep"), "sweep.ki4");
  }
  if (const auto it = j.find("scenarios"); it != j.end()) {
    if (!it->is_array()) fail("scenarios must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) cfg.scenarios.push_back(parse_scenario((*it)[i], i));
  }
  if (const auto it = j.find("output_dir"); it != j.end()) cfg.output_dir = text(*it, "output_dir");
  cfg.validate();
  return cfg;
}

Config load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse(j);
}

closedloop::DelayedLti build_model(const Config& cfg) {
  const auto zbus = powernet::build_zbus(cfg.network);
  const auto sens = powernet::sensitivity(cfg.network, zbus, cfg.scalarization);
  std::vector<pvplant::Subsystem> subs;
  std::vector<pvplant::Controller> ctrls;
  for (const auto& p : cfg.pv) {
    subs.push_back(pvplant::build_subsystem(p));
    ctrls.push_back(pvplant::build_controller(p));
  }
  return closedloop::assemble(subs, ctrls, sens);
}

closedloop::DelayedLti build_model(const Config& cfg, double kp4, double ki4) {
  Config c = cfg;
  for (auto& p : c.pv) {
    p.kp[3] = kp4;
    p.ki[3] = ki4;
  }
  return build_model(c);
}

ddesim::Scenario to_scenario(const ScenarioConfig& sc, const closedloop::DelayedLti& model) {
  if (static_cast<int>(sc.v_ref.size()) != model.n_pv || static_cast<int>(sc.v_oc.size()) != model.n_pv) {
    fail("scenario '" + sc.name + "' does not match the number of PVs in the model");
  }
  ddesim::Scenario s;
  s.horizon = sc.horizon;
  s.step = sc.step;
  s.tau = sc.tau;
  s.history = ddesim::HistoryKind::Equilibrium;
  s.divergence_factor = sc.divergence_factor;
  s.record_every = sc.record_every;
  s.sigma0 = VectorXd::Zero(model.channels());
  for (int j = 0; j < model.n_pv; ++j) {
    s.sigma0(model.voc_channel(j)) = sc.v_oc[j];
    s.sigma0(model.reference_channel(j)) = sc.v_ref[j] - model.v0(j);
  }
  for (const auto& e : sc.events) {
    if (e.signal == Signal::VRef) {
      s.events.push_back({e.time, model.reference_channel(e.pv), e.value - model.v0(e.pv)});
    } else {
      s.events.push_back({e.time, model.voc_channel(e.pv), e.value});
    }
  }
  for (const auto& p : sc.probes) s.probes.push_back(parse_probe(p));
  return s;
}

json to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) fail("matrix must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!j[i].is_array() || static_cast<Eigen::Index>(j[i].size()) != cols) fail("matrix rows differ in length");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = number(j[i][k], "matrix entry");
  }
  return m;
}

namespace {

json residuals_json(const lmicert::Residuals& r) {
  return {{"main_max_eig", r.main_max_eig},
          {"p_min_eig", r.p_min_eig},
          {"q_min_eig", r.q_min_eig},
          {"v_min_eig", r.v_min_eig}};
}

}  // namespace

json certificate_json(const margin::MarginResult& r) {
  if (!r.certificate) fail("margin result carries no certificate");
  const auto& c = *r.certificate;
  std::vector<double> scale(r.conditioning.scale.data(), r.conditioning.scale.data() + r.conditioning.scale.size());
  return {{"tau_certified", r.tau_certified},
          {"conditioning", {{"scale", scale}, {"time_scale", r.conditioning.time_scale}}},
          {"tau_conditioned", c.tau_d},
          {"epsilon", c.epsilon},
          {"P", to_json(c.vars.p)},
          {"Q", to_json(c.vars.q)},
          {"V", to_json(c.vars.v)},
          {"W", to_json(c.vars.w)},
          {"residuals", residuals_json(c.residuals)}};
}

json exact_json(const margin::ExactMargin& r) {
  json j;
  if (r.bounded) {
    j["tau_exact"] = r.tau;
    j["omega"] = r.omega;
  } else {
    j["tau_exact"] = "Unbounded";
  }
  j["resolution"] = r.resolution;
  j["crossings"] = r.crossings;
  j["advisories"] = r.advisories;
  return j;
}

json margin_json(const margin::MarginResult& r, const margin::ExactMargin& exact) {
  json trace = json::array();
  for (const auto& t : r.trace) {
    trace.push_back({{"tau", t.tau}, {"verdict", margin::to_string(t.verdict)}, {"slack", t.slack}});
  }
  json j = {{"tau_certified", r.tau_certified},
            {"bisection_tol", r.bisection_tol},
            {"tau_max", r.tau_max},
            {"epsilon_abs", r.epsilon_abs},
            {"time_scale", r.conditioning.time_scale},
            {"trace", trace}};
  j["tau_exact"] = exact.bounded ? json(exact.tau) : json("Unbounded");
  j["exact_resolution"] = exact.resolution;
  return j;
}

json audit_json(const lmicert::Audit& a, double tau_original) {
  return {{"pass", a.pass}, {"tau", tau_original}, {"reason", a.reason}, {"residuals", residuals_json(a.residuals)}};
}

lmicert::Audit audit_certificate(const closedloop::DelayedLti& model, const json& cert) {
  try {
    const json& cond = required(cert, "conditioning", "certificate");
    const auto scale_list = numbers(required(cond, "scale", "certificate.conditioning"), "conditioning.scale");
    const double k = number(required(cond, "time_scale", "certificate.conditioning"), "conditioning.time_scale");
    const int m = model.states();
    if (static_cast<int>(scale_list.size()) != m) {
      throw Error(ErrorKind::DimensionMismatch, "certificate conditioning does not match the model size");
    }
    if (!(k > 0.0)) fail("conditioning.time_scale must be > 0");
    const VectorXd d = Eigen::Map<const VectorXd>(scale_list.data(), m);
    const MatrixXd a = d.cwiseInverse().asDiagonal() * model.a * d.asDiagonal() / k;
    const MatrixXd a_d = d.cwiseInverse().asDiagonal() * model.a_d * d.asDiagonal() / k;
    lmicert::Certificate c;
    c.tau_d = number(required(cert, "tau_conditioned", "certificate"), "tau_conditioned");
    c.epsilon = number(required(cert, "epsilon", "certificate"), "epsilon");
    c.vars.p = matrix_from_json(required(cert, "P", "certificate"));
    c.vars.q = matrix_from_json(required(cert, "Q", "certificate"));
    c.vars.v = matrix_from_json(required(cert, "V", "certificate"));
    c.vars.w = matrix_from_json(required(cert, "W", "certificate"));
    for (const MatrixXd* x : {&c.vars.p, &c.vars.q, &c.vars.v, &c.vars.w}) {
      if (x->rows() != m || x->cols() != m) {
        throw Error(ErrorKind::DimensionMismatch, "certificate matrices do not match the model size");
      }
    }
    const auto problem = lmicert::build_lmi(a, a_d, c.tau_d, c.epsilon);
    return lmicert::verify_certificate(problem, c);
  } catch (const json::exception& e) {
    fail(std::string("malformed certificate: ") + e.what());
  }
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::InvalidParam, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error(ErrorKind::InvalidParam, "failed writing '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorKind::InvalidParam, "cannot rename into '" + path.string() + "'");
  }
}

}  // namespace pvdelay::config
