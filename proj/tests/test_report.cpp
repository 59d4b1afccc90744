#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "lillab/report.hpp"

using namespace lillab;
using nlohmann::json;

namespace {

json chain_config() {
  return json{{"model", {{"kind", "chain"}, {"q", {{-1.0, 1.0}, {1.0, -1.0}}}}},
              {"observable", {{"kind", "values"}, {"values", {1.0, -1.0}}, {"name", "parity"}}},
              {"horizon", 30.0},
              {"n_paths", 300},
              {"seed", 11}};
}

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(LILLAB_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  char buf[4096];
  for (;;) {
    const std::size_t n = fread(buf, 1, sizeof buf, p);
    if (n == 0) break;
    out.append(buf, n);
  }
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string write_config(const json& cfg, const std::string& name) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << cfg.dump();
  return path.string();
}

}  // namespace

TEST_CASE("config defaults and validation") {
  json minimal = {{"model", {{"kind", "ou"}, {"gamma", 1.0}, {"sigma", 1.0}}}};
  const auto cfg = report::parse_config(minimal);
  CHECK(cfg.horizon == 100.0);
  CHECK(cfg.mesh == 0.01);
  CHECK(cfg.n_paths == 10000);
  CHECK(cfg.seed == 0);
  CHECK(cfg.g.name == "tanh");
  CHECK(std::holds_alternative<models::InvariantStart>(cfg.init));

  CHECK_THROWS_AS(report::parse_config(json::object()), ValidationError);
  CHECK_THROWS_AS(report::parse_config(json{{"model", {{"kind", "pde"}}}}),
                  ValidationError);

  json bad_values = chain_config();
  bad_values["observable"]["values"] = {1.0, -1.0, 0.0};
  CHECK_THROWS_AS(report::parse_config(bad_values), ValidationError);

  json no_obs = chain_config();
  no_obs.erase("observable");
  CHECK_THROWS_AS(report::parse_config(no_obs), ValidationError);

  json neg = chain_config();
  neg["horizon"] = -3.0;
  CHECK_THROWS_AS(report::parse_config(neg), ValidationError);

  json mix = chain_config();
  mix["initial"] = {{"kind", "mixture"}, {"points", {0, 1}}, {"weights", {1.0}}};
  CHECK_THROWS_AS(report::parse_config(mix), ValidationError);

  CHECK_THROWS_AS(report::run_command("fourier", chain_config(), 1), ValidationError);
}

TEST_CASE("reports echo their inputs and verdicts") {
  const auto rep = report::run_command("corrector", chain_config(), 1);
  CHECK(rep["command"] == "corrector");
  CHECK(rep["seed"] == 11);
  CHECK(rep["model"]["kind"] == "chain");
  CHECK(rep["observable"] == "parity");
  CHECK(rep["passed"] == true);
  CHECK(rep["result"]["sigma_sq"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  const auto chi = rep["result"]["series"]["chi"];
  REQUIRE(chi.size() == 2);
  CHECK(chi[0].get<double>() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("thread count cannot leak into the bytes of a report") {
  const auto cfg = chain_config();
  const auto r1 = report::run_command("sigma", cfg, 1).dump();
  const auto r4 = report::run_command("sigma", cfg, 4).dump();
  const auto r8 = report::run_command("sigma", cfg, 8).dump();
  CHECK(r1 == r4);
  CHECK(r1 == r8);
}

TEST_CASE("orthogonality command flags a corrupted potential only") {
  json cfg = chain_config();
  cfg["n_paths"] = 1200;
  cfg["horizon"] = 6.0;
  const auto rep = report::run_command("martingale-check", cfg, 2);
  CHECK(rep["passed"] == true);
  CHECK(rep["result"]["worst_ratio"].get<double>() < 4.0);
}

TEST_CASE("csv rendering keeps scalars in the header and series in columns") {
  const auto rep = report::run_command("sigma", chain_config(), 2);
  const auto csv = report::to_csv(rep);
  CHECK(csv.rfind("# command=sigma", 0) == 0);
  CHECK(csv.find("# sigma_pairing=1.0") != std::string::npos);
  CHECK(csv.find("t,growth,growth_se,growth_exact") != std::string::npos);
  // one line per checkpoint after the header block
  const auto n_rows = rep["result"]["series"]["t"].size();
  std::size_t lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  std::size_t headers = 0;
  std::istringstream is(csv);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty() && line[0] == '#') ++headers;
  CHECK(lines == headers + 1 + n_rows);
}

TEST_CASE("command line round trip: verdict in the exit code") {
  const auto cfg_path = write_config(chain_config(), "lillab_test_ok.json");
  const auto ok = run_cli("corrector --config " + cfg_path);
  CHECK(ok.code == 0);
  CHECK(ok.out.find("\"passed\": true") != std::string::npos);

  // same invocation twice: byte-identical stdout
  const auto again = run_cli("corrector --config " + cfg_path);
  CHECK(again.out == ok.out);

  json broken = chain_config();
  broken["model"]["kind"] = "pde";
  const auto bad_path = write_config(broken, "lillab_test_bad.json");
  const auto bad = run_cli("corrector --config " + bad_path);
  CHECK(bad.code == 1);
  CHECK(bad.out.find("error") != std::string::npos);

  // a flat observable: the run completes but certifies a failure
  json flat = chain_config();
  flat["observable"] = {{"kind", "zero"}};
  flat["n_paths"] = 150;
  const auto flat_path = write_config(flat, "lillab_test_flat.json");
  const auto degenerate = run_cli("lil --config " + flat_path);
  CHECK(degenerate.code == 2);
  CHECK(degenerate.out.find("\"degenerate_variance\": true") != std::string::npos);
}

TEST_CASE("command line seed precedence: flag beats environment beats config") {
  const auto cfg_path = write_config(chain_config(), "lillab_test_seed.json");
  const auto flag = run_cli("corrector --config " + cfg_path + " --seed 99");
  CHECK(flag.out.find("\"seed\": 99") != std::string::npos);

  const std::string env_cmd = std::string("LILLAB_SEED=123 ") + LILLAB_CLI_PATH +
                              " corrector --config " + cfg_path + " 2>&1";
  FILE* p = popen(env_cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  char buf[4096];
  for (;;) {
    const std::size_t n = fread(buf, 1, sizeof buf, p);
    if (n == 0) break;
    out.append(buf, n);
  }
  pclose(p);
  CHECK(out.find("\"seed\": 123") != std::string::npos);

  const auto from_config = run_cli("corrector --config " + cfg_path);
  CHECK(from_config.out.find("\"seed\": 11") != std::string::npos);
}

TEST_CASE("command line rendering options") {
  const auto cfg_path = write_config(chain_config(), "lillab_test_fmt.json");
  const auto csv = run_cli("corrector --config " + cfg_path + " --format csv");
  CHECK(csv.code == 0);
  CHECK(csv.out.rfind("# command=corrector", 0) == 0);

  const auto out_path =
      (std::filesystem::temp_directory_path() / "lillab_test_report.json").string();
  const auto to_file = run_cli("corrector --config " + cfg_path + " --out " + out_path);
  CHECK(to_file.code == 0);
  std::ifstream in(out_path);
  REQUIRE(in.good());
  const auto written = json::parse(in);
  CHECK(written["passed"] == true);

  const auto stamped =
      run_cli("corrector --config " + cfg_path + " --stamp");
  CHECK(stamped.out.find("generated_at") != std::string::npos);
}
