#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "pvdelay/config.hpp"
#include "pvdelay/error.hpp"
#include "test_support.hpp"

using namespace pvdelay;
using pvdelay::config::json;
namespace fs = std::filesystem;

namespace {

json default_json() {
  std::ifstream in(pvdelay::testing::default_config_path());
  return json::parse(in);
}

std::optional<ErrorKind> parse_error_kind(const json& j) {
  try {
    config::parse(j).validate();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("pvdelay_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Run {
  int code = -1;
  std::string err;
};

std::string cli_path() {
  if (const char* cli = std::getenv("PVDELAY_CLI")) return cli;
#ifdef PVDELAY_CLI_DEFAULT
  return PVDELAY_CLI_DEFAULT;
#else
  return {};
#endif
}

Run run_cli(const std::string& args, const fs::path& dir) {
  const std::string cli = cli_path();
  const fs::path err_file = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + cli + "\" " + args + " > \"" + (dir / "stdout.txt").string() +
                          "\" 2> \"" + err_file.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = read_file(err_file);
  return r;
}

std::string cfg_arg() { return "--config \"" + pvdelay::testing::default_config_path().string() + "\""; }

}  // namespace

TEST(Config, DefaultLoads) {
  const auto cfg = pvdelay::testing::default_config();
  EXPECT_EQ(cfg.pv.size(), 2u);
  EXPECT_EQ(cfg.network.pv_buses.size(), 2u);
  EXPECT_EQ(cfg.kp4_list.size(), 4u);
  EXPECT_EQ(cfg.ki4_list.size(), 5u);
  ASSERT_FALSE(cfg.scenarios.empty());
  const auto model = config::build_model(cfg);
  EXPECT_EQ(model.a.rows(), 16);
  EXPECT_EQ(model.a_d.rows(), 16);
}

TEST(Config, GainOverrideChangesOnlyTheOuterLoop) {
  const auto cfg = pvdelay::testing::default_config();
  const auto base = config::build_model(cfg);
  const auto changed = config::build_model(cfg, 2.0 * cfg.pv[0].kp[3], cfg.pv[0].ki[3]);
  EXPECT_GT((base.a_d - changed.a_d).norm(), 0.0);
  const auto same = config::build_model(cfg, cfg.pv[0].kp[3], cfg.pv[0].ki[3]);
  EXPECT_LE((base.a - same.a).norm() + (base.a_d - same.a_d).norm(), 1e-12);
}

TEST(Config, RejectsMalformedInput) {
  json j = default_json();
  j["bogus"] = 1;
  EXPECT_EQ(parse_error_kind(j), ErrorKind::ConfigError);

  j = default_json();
  j.erase("network");
  EXPECT_EQ(parse_error_kind(j), ErrorKind::ConfigError);

  j = default_json();
  j["pv"][0]["kp"] = {0.0, 1.0, 1.0};
  EXPECT_EQ(parse_error_kind(j), ErrorKind::ConfigError);

  j = default_json();
  j["pv"].erase(1);
  EXPECT_EQ(parse_error_kind(j), ErrorKind::ConfigError);

  j = default_json();
  j["margin"]["tol"] = "small";
  EXPECT_EQ(parse_error_kind(j), ErrorKind::ConfigError);

  j = default_json();
  j["scenarios"][0]["events"][0]["signal"] = "frequency";
  EXPECT_EQ(parse_error_kind(j), ErrorKind::ConfigError);

  const fs::path dir = scratch("badjson");
  std::ofstream(dir / "bad.json") << "{ \"network\": ";
  try {
    config::load(dir / "bad.json");
    FAIL() << "expected ConfigError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
  }
  fs::remove_all(dir);
}

TEST(Config, ScenarioUsesDeviationCoordinates) {
  const auto cfg = pvdelay::testing::default_config();
  const auto model = config::build_model(cfg);
  const auto& sc = cfg.scenarios.front();
  const auto s = config::to_scenario(sc, model);
  EXPECT_DOUBLE_EQ(s.tau, sc.tau);
  EXPECT_EQ(s.events.size(), sc.events.size());
  EXPECT_EQ(s.sigma0.size(), model.f.cols());
}

TEST(Config, MatrixJsonRoundTrip) {
  Eigen::MatrixXd m(2, 3);
  m << 1, 2, 3, 4, 5, 6.25;
  EXPECT_EQ(config::matrix_from_json(config::to_json(m)), m);
  EXPECT_THROW(config::matrix_from_json(json::parse("[[1,2],[3]]")), Error);
}

TEST(Config, AtomicWriteCreatesParentsAndLeavesNoTemporaries) {
  const fs::path dir = scratch("atomic");
  const fs::path target = dir / "a" / "b" / "file.txt";
  config::write_atomic(target, "first");
  config::write_atomic(target, "second");
  EXPECT_EQ(read_file(target), "second");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(target.parent_path())) ++entries;
  EXPECT_EQ(entries, 1);
  fs::remove_all(dir);
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_TRUE(fs::exists(cli_path())) << "CLI binary not found: '" << cli_path() << "'";
    dir_ = scratch(::testing::UnitTest::GetInstance()->current_test_info()->name());
    out_ = dir_ / "out";
  }
  void TearDown() override {
    if (!dir_.empty()) fs::remove_all(dir_);
  }
  std::string out_arg() const { return "--out \"" + out_.string() + "\""; }

  fs::path dir_;
  fs::path out_;
};

TEST_F(Cli, UsageErrorsExitTwoAndWriteNothing) {
  auto r = run_cli(cfg_arg() + " " + out_arg() + " frobnicate", dir_);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("pvdelay: error="), std::string::npos);
  EXPECT_FALSE(fs::exists(out_));

  r = run_cli(out_arg() + " oracle", dir_);
  EXPECT_EQ(r.code, 2);

  r = run_cli("--config \"" + (dir_ / "missing.json").string() + "\" " + out_arg() + " oracle", dir_);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error=ConfigError exit=2"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(out_));
}

TEST_F(Cli, OracleWritesExactMargin) {
  ASSERT_EQ(run_cli(cfg_arg() + " " + out_arg() + " oracle", dir_).code, 0);
  const json j = json::parse(read_file(out_ / "oracle.json"));
  ASSERT_TRUE(j.contains("tau_exact"));
  if (j["tau_exact"].is_number()) EXPECT_GT(j["tau_exact"].get<double>(), 0.0);
}

TEST_F(Cli, MarginCertificateRoundTripAndIdempotence) {
  ASSERT_EQ(run_cli(cfg_arg() + " " + out_arg() + " margin", dir_).code, 0);
  const std::string cert1 = read_file(out_ / "certificate.json");
  const std::string margin1 = read_file(out_ / "margin.json");
  const json m = json::parse(margin1);
  EXPECT_GT(m["tau_certified"].get<double>(), 0.0);
  if (m["tau_exact"].is_number()) {
    EXPECT_LE(m["tau_certified"].get<double>(), m["tau_exact"].get<double>());
  }

  ASSERT_EQ(run_cli(cfg_arg() + " " + out_arg() + " margin", dir_).code, 0);
  EXPECT_EQ(read_file(out_ / "certificate.json"), cert1);
  EXPECT_EQ(read_file(out_ / "margin.json"), margin1);

  ASSERT_EQ(run_cli(cfg_arg() + " " + out_arg() + " verify-certificate", dir_).code, 0);
  EXPECT_TRUE(json::parse(read_file(out_ / "audit.json"))["pass"].get<bool>());

  json tampered = json::parse(cert1);
  for (auto& row : tampered["P"]) {
    for (auto& v : row) v = -v.get<double>();
  }
  std::ofstream(dir_ / "tampered.json") << tampered.dump();
  ASSERT_EQ(run_cli(cfg_arg() + " " + out_arg() + " verify-certificate --certificate \"" +
                        (dir_ / "tampered.json").string() + "\"",
                    dir_)
                .code,
            0);
  const json audit = json::parse(read_file(out_ / "audit.json"));
  EXPECT_FALSE(audit["pass"].get<bool>());
  EXPECT_FALSE(audit["reason"].get<std::string>().empty());

  std::ofstream(dir_ / "broken.json") << "{\"P\": [[1]]}";
  const auto r = run_cli(cfg_arg() + " " + out_arg() + " verify-certificate --certificate \"" +
                             (dir_ / "broken.json").string() + "\"",
                         dir_);
  EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, SimulateReferenceStepsSettles) {
  const auto cfg = pvdelay::testing::default_config();
  const auto& sc = cfg.scenarios.front();
  ASSERT_EQ(run_cli(cfg_arg() + " " + out_arg() + " simulate --scenario " + sc.name, dir_).code, 0);
  std::ifstream in(out_ / ("trace_" + sc.name + ".csv"));
  std::string line, last;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("t,", 0), 0u);
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  std::stringstream ss(last);
  std::string cell;
  std::getline(ss, cell, ',');
  EXPECT_NEAR(std::stod(cell), sc.horizon, 1e-9);
  double final_ref = sc.v_ref.front();
  for (const auto& e : sc.events) {
    if (e.signal == config::Signal::VRef) final_ref = e.value;
  }
  while (std::getline(ss, cell, ',')) EXPECT_NEAR(std::stod(cell), final_ref, 5e-3);
}

TEST_F(Cli, SweepWritesGrid) {
  json j = default_json();
  j["sweep"]["kp4"] = {j["pv"][0]["kp"][3]};
  j["sweep"]["ki4"] = {j["pv"][0]["ki"][3], 2.0 * j["pv"][0]["ki"][3].get<double>()};
  const fs::path cfg_path = dir_ / "small.json";
  std::ofstream(cfg_path) << j.dump(2);
  ASSERT_EQ(run_cli("--config \"" + cfg_path.string() + "\" " + out_arg() + " --workers 2 sweep", dir_).code, 0);
  const std::string csv = read_file(out_ / "sweep.csv");
  EXPECT_EQ(csv.rfind("K_P4\\K_I4,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(read_file(dir_ / "stdout.txt"), csv);
}
