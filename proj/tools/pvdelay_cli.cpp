// Command-line front end: margin, sweep, simulate, oracle and
// verify-certificate over a JSON configuration.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "pvdelay/config.hpp"
#include "pvdelay/ddesim.hpp"
#include "pvdelay/error.hpp"
#include "pvdelay/margin.hpp"

namespace fs = std::filesystem;
using namespace pvdelay;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;
constexpr int kExitNotCertifiedAtZero = 4;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SolverFailure:
      return kExitSolver;
    case ErrorKind::NotCertifiedAtZero:
      return kExitNotCertifiedAtZero;
    default:
      return kExitValidation;
  }
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int report(std::string_view kind, int code, const std::string& message) {
  std::cerr << "pvdelay: error=" << kind << " exit=" << code << " message=\"" << one_line(message) << "\"\n";
  return code;
}

struct Options {
  std::string config_path;
  std::string out_dir;
  int workers = 0;
  std::optional<double> tol;
  std::optional<double> tau_max;
  std::optional<double> epsilon;
  std::string scenario;
  std::optional<double> tau;
  std::string certificate;
};

config::Config load_config(const Options& o) {
  config::Config cfg = config::load(o.config_path);
  if (o.tol) cfg.margin.tol = *o.tol;
  if (o.tau_max) cfg.margin.tau_max = *o.tau_max;
  if (o.epsilon) cfg.margin.epsilon = *o.epsilon;
  if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
  cfg.validate();
  return cfg;
}

std::string dump(const config::json& j) { return j.dump(2) + "\n"; }

int run_margin(const Options& o) {
  const auto cfg = load_config(o);
  const auto model = config::build_model(cfg);
  const auto result = margin::certified_margin(model, cfg.margin);
  const auto exact = margin::exact_margin(model, cfg.exact);
  const fs::path out(cfg.output_dir);
  // Both artifacts are rendered before either is written.
  const std::string margin_text = dump(config::margin_json(result, exact));
  const std::string cert_text = dump(config::certificate_json(result));
  config::write_atomic(out / "certificate.json", cert_text);
  config::write_atomic(out / "margin.json", margin_text);
  std::printf("tau_certified=%.6g tau_exact=%s\n", result.tau_certified,
              exact.bounded ? std::to_string(exact.tau).c_str() : "Unbounded");
  return kExitOk;
}

int run_sweep(const Options& o) {
  const auto cfg = load_config(o);
  cfg.validate_sweep();
  const int workers = o.workers > 0 ? o.workers : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const margin::ModelFactory factory = [&cfg](double kp4, double ki4) { return config::build_model(cfg, kp4, ki4); };
  const auto table = margin::sweep_gains(factory, cfg.kp4_list, cfg.ki4_list, cfg.margin, workers);
  config::write_atomic(fs::path(cfg.output_dir) / "sweep.csv", table.to_csv());
  std::fputs(table.to_csv().c_str(), stdout);
  return kExitOk;
}

int run_simulate(const Options& o) {
  const auto cfg = load_config(o);
  const auto& sc = cfg.scenario(o.scenario);
  const auto model = config::build_model(cfg);
  auto scenario = config::to_scenario(sc, model);
  if (o.tau) scenario.tau = *o.tau;
  const auto trace = ddesim::simulate(model, scenario);
  config::write_atomic(fs::path(cfg.output_dir) / ("trace_" + sc.name + ".csv"), trace.to_csv());
  std::printf("scenario=%s tau=%.6g diverged=%s final_norm=%.6g\n", sc.name.c_str(), scenario.tau,
              trace.diverged ? "true" : "false", trace.final_norm);
  return kExitOk;
}

int run_oracle(const Options& o) {
  const auto cfg = load_config(o);
  const auto model = config::build_model(cfg);
  const auto exact = margin::exact_margin(model, cfg.exact);
  config::write_atomic(fs::path(cfg.output_dir) / "oracle.json", dump(config::exact_json(exact)));
  std::printf("tau_exact=%s\n", exact.bounded ? std::to_string(exact.tau).c_str() : "Unbounded");
  return kExitOk;
}

int run_verify(const Options& o) {
  const auto cfg = load_config(o);
  const fs::path cert_path =
      o.certificate.empty() ? fs::path(cfg.output_dir) / "certificate.json" : fs::path(o.certificate);
  std::ifstream in(cert_path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open certificate '" + cert_path.string() + "'");
  config::json cert;
  try {
    cert = config::json::parse(in);
  } catch (const config::json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, std::string("certificate is not valid JSON: ") + e.what());
  }
  const auto model = config::build_model(cfg);
  const auto audit = config::audit_certificate(model, cert);
  const double tau = cert.value("tau_certified", 0.0);
  config::write_atomic(fs::path(cfg.output_dir) / "audit.json", dump(config::audit_json(audit, tau)));
  std::printf("certificate=%s tau=%.6g\n", audit.pass ? "valid" : "invalid", tau);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delay margin certification and simulation for PV voltage control loops"};
  Options o;
  app.add_option("--config", o.config_path, "JSON configuration file")->required();
  app.add_option("--out", o.out_dir, "Output directory (overrides the config)");
  app.add_option("--workers", o.workers, "Worker threads for sweep (default: available processors)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--tol", o.tol, "Bisection tolerance in seconds");
  app.add_option("--tau-max", o.tau_max, "Upper end of the delay search in seconds");
  app.add_option("--epsilon", o.epsilon, "Strictness margin of the LMI (relative)");
  app.require_subcommand(1);

  auto* margin_cmd = app.add_subcommand("margin", "Certified delay margin with certificate");
  auto* sweep_cmd = app.add_subcommand("sweep", "Certified margins over the K_P4 x K_I4 grid");
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a configured scenario");
  sim_cmd->add_option("--scenario", o.scenario, "Scenario name (default: the first one)");
  sim_cmd->add_option("--tau", o.tau, "Delay override in seconds");
  auto* oracle_cmd = app.add_subcommand("oracle", "Exact delay margin from characteristic-root crossings");
  auto* verify_cmd = app.add_subcommand("verify-certificate", "Audit a stored certificate against the config");
  verify_cmd->add_option("--certificate", o.certificate, "Certificate file (default: <out>/certificate.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("Usage", kExitValidation, e.what());
  }

  try {
    if (margin_cmd->parsed()) return run_margin(o);
    if (sweep_cmd->parsed()) return run_sweep(o);
    if (sim_cmd->parsed()) return run_simulate(o);
    if (oracle_cmd->parsed()) return run_oracle(o);
    if (verify_cmd->parsed()) return run_verify(o);
  } catch (const Error& e) {
    return report(to_string(e.kind()), exit_code(e.kind()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report("Io", kExitValidation, e.what());
  }
  return report("Usage", kExitValidation, "no subcommand");
}
