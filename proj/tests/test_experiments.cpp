#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dcp/experiments.hpp"
#include "dcp/io.hpp"

using namespace dcp;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("dcp_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string csv_bytes(const fs::path& p) { return read_text(p); }

// final data row of a CSV as doubles
std::vector<double> last_row(const fs::path& p) {
  std::istringstream is(read_text(p));
  std::string line, last;
  std::getline(is, line);  // header
  while (std::getline(is, line))
    if (!line.empty()) last = line;
  std::vector<double> out;
  std::istringstream row(last);
  std::string cell;
  while (std::getline(row, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("config parsing") {
  const std::string text =
      "# experiment\n"
      "kind = macro\n"
      "seed = 42\n"
      "\n"
      "[model]\n"
      "lambda = 4\n"
      "alpha = 1   # decay\n"
      "r = 1\n"
      "\n"
      "[run]\n"
      "T = 2.5\n";
  const ExperimentConfig cfg = parse_config_text(text);
  CHECK(cfg.kind() == "macro");
  CHECK(cfg.seed() == 42);
  CHECK(cfg.get_double("model.lambda", 0) == 4.0);
  CHECK(cfg.get_double("run.T", 0) == 2.5);
  const auto model = cfg.model();
  REQUIRE(model.has_value());
  CHECK(model->alpha == 1.0);

  SUBCASE("rho is an accepted alias for alpha") {
    const ExperimentConfig c2 = parse_config_text(
        "kind = macro\n[model]\nlambda = 100\nrho = 0.7\nr = 5\n[run]\nT = 1\n");
    CHECK(c2.model()->alpha == doctest::Approx(70.0));
  }
  SUBCASE("round trip through the canonical text form") {
    const ExperimentConfig again = parse_config_text(serialize_config(cfg));
    CHECK(again.kv == cfg.kv);
  }
  SUBCASE("malformed lines are rejected") {
    CHECK_THROWS(parse_config_text("kind macro\n"));
    CHECK_THROWS(parse_config_text("[model\nlambda = 1\n"));
  }
}

TEST_CASE("validate reports regime diagnostics") {
  SUBCASE("subcritical spectrum is an error") {
    const ExperimentConfig cfg = parse_config_text(
        "kind = spectrum\n[model]\nlambda = 1\nalpha = 1\nr = 1\n"
        "[run]\nreplicas = 4\n");
    const auto diags = validate(cfg);
    CHECK(has_errors(diags));
    bool found = false;
    for (const auto& d : diags)
      if (d.find("stationary spectrum undefined") != std::string::npos)
        found = true;
    CHECK(found);
  }
  SUBCASE("supercritical parameters report omega* and the stability class") {
    const ExperimentConfig cfg = parse_config_text(
        "kind = spectrum\n[model]\nlambda = 100\nalpha = 70\nr = 5\n"
        "[run]\nreplicas = 4\n");
    const auto diags = validate(cfg);
    CHECK_FALSE(has_errors(diags));
    bool has_omega = false, has_class = false;
    for (const auto& d : diags) {
      if (d.find("omega*") != std::string::npos &&
          d.find("12.24744") != std::string::npos)
        has_omega = true;
      if (d.find("stable-spiral") != std::string::npos) has_class = true;
    }
    CHECK(has_omega);
    CHECK(has_class);
  }
  SUBCASE("missing replicas for a spectrum run names the field") {
    const ExperimentConfig cfg = parse_config_text(
        "kind = spectrum\n[model]\nlambda = 100\nalpha = 70\nr = 5\n");
    const auto diags = validate(cfg);
    bool found = false;
    for (const auto& d : diags)
      if (d.rfind("error:", 0) == 0 &&
          d.find("run.replicas") != std::string::npos)
        found = true;
    CHECK(found);
  }
  SUBCASE("unknown kind") {
    CHECK(has_errors(validate(parse_config_text("kind = banana\n"))));
  }
  SUBCASE("rescaled scaling health note") {
    const ExperimentConfig cfg = parse_config_text(
        "kind = rescaled\n[model]\nlambda = 50\nrho = 0.7\nr = 5\n"
        "[rescaled]\nlambda_n = 50\nn = 100000\n");
    bool found = false;
    for (const auto& d : validate(cfg))
      if (d.find("healthy") != std::string::npos) found = true;
    CHECK(found);
  }
}

TEST_CASE("macro experiment lands on the endemic point") {
  const fs::path dir = fresh_dir("macro");
  ExperimentConfig cfg = parse_config_text(
      "kind = macro\nseed = 3\noutput = " + dir.string() +
      "\n[model]\nlambda = 4\nalpha = 1\nr = 1\n"
      "[macro]\nm0 = 0.9\nv0 = 0.9\nx2_0 = 0.81\nk0 = 0.1\n"
      "[run]\nT = 50\nh = 0.001\n");
  CHECK(run_experiment(cfg) == 0);
  CHECK(fs::exists(dir / "macro.csv"));
  CHECK(fs::exists(dir / "config.json"));
  CHECK(fs::exists(dir / "meta.json"));
  const auto row = last_row(dir / "macro.csv");  // t, m, v, x2, k
  CHECK(row[1] == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(row[2] == doctest::Approx(0.25).epsilon(1e-5));
}

TEST_CASE("invalid configuration exits with status 2") {
  const ExperimentConfig cfg = parse_config_text("kind = spectrum\n");
  CHECK(run_experiment(cfg) == 2);
}

TEST_CASE("determinism: identical config and seed give identical CSV bytes") {
  const std::string base =
      "kind = fluct\nseed = 99\n[model]\nlambda = 4\nalpha = 1\nr = 1\n"
      "[init]\nlaw = stationary\n[run]\nT = 1\nh = 0.01\nreplicas = 30\n"
      "[fluct]\nstride = 10\n";
  const fs::path d1 = fresh_dir("det1");
  const fs::path d2 = fresh_dir("det2");

  ExperimentConfig c1 = parse_config_text("output = " + d1.string() + "\n" + base);
  ExperimentConfig c2 = parse_config_text("output = " + d2.string() + "\n" + base);
  c2.kv["threads"] = "4";  // thread count must not change any number
  REQUIRE(run_experiment(c1) == 0);
  REQUIRE(run_experiment(c2) == 0);
  CHECK(csv_bytes(d1 / "fluct_paths.csv") == csv_bytes(d2 / "fluct_paths.csv"));
  CHECK(csv_bytes(d1 / "fluct_cov.json") == csv_bytes(d2 / "fluct_cov.json"));

  // rerun in place reproduces the same bytes
  const std::string first = csv_bytes(d1 / "fluct_paths.csv");
  REQUIRE(run_experiment(c1) == 0);
  CHECK(csv_bytes(d1 / "fluct_paths.csv") == first);
}

TEST_CASE("micro experiment artifacts") {
  const fs::path dir = fresh_dir("micro");
  ExperimentConfig cfg = parse_config_text(
      "kind = micro\nseed = 5\noutput = " + dir.string() +
      "\n[model]\nlambda = 4\nalpha = 1\nr = 1\n[init]\nlaw = uniform\n"
      "[run]\nT = 1\nn = 500\ngrid_dt = 0.05\n");
  REQUIRE(run_experiment(cfg) == 0);
  const std::string csv = csv_bytes(dir / "trajectory.csv");
  CHECK(csv.rfind("t,m_N,v_N,v_N2\n", 0) == 0);
  const auto row = last_row(dir / "trajectory.csv");
  CHECK(row[0] == doctest::Approx(1.0));
  CHECK(row[1] <= 1.0);
  // json sidecar carries the event count
  const std::string meta = read_text(dir / "meta.json");
  CHECK(meta.find("\"events\"") != std::string::npos);
}

TEST_CASE("figure3 emits an oscillator trajectory") {
  const fs::path dir = fresh_dir("fig3");
  ExperimentConfig cfg = parse_config_text(
      "kind = figure3\nseed = 8\noutput = " + dir.string() +
      "\n[run]\nT = 5\nh = 0.001\n");
  REQUIRE(run_experiment(cfg) == 0);
  CHECK(fs::exists(dir / "oscillator.csv"));
  const auto row = last_row(dir / "oscillator.csv");
  CHECK(row[0] == doctest::Approx(5.0));
}

TEST_CASE("rescaled experiment with a convergence ladder") {
  const fs::path dir = fresh_dir("rescladder");
  ExperimentConfig cfg = parse_config_text(
      "kind = rescaled\nseed = 9\noutput = " + dir.string() +
      "\n[model]\nlambda = 40\nrho = 0.7\nr = 5\n"
      "[rescaled]\nlambda_n = 40\nn = 20000\nT = 4\ndt = 0.1\n"
      "replicas = 4\nladder = 30:10000 60:20000\n");
  REQUIRE(run_experiment(cfg) == 0);
  CHECK(fs::exists(dir / "rescaled.csv"));
  CHECK(fs::exists(dir / "rescaled_psd.csv"));
  const std::string conv = read_text(dir / "convergence.json");
  CHECK(conv.find("\"entries\"") != std::string::npos);
  CHECK(conv.find("\"rel_gap\"") != std::string::npos);
}

TEST_CASE("output root falls back to the environment variable") {
  const fs::path root = fresh_dir("envroot");
  setenv("DCP_OUTPUT_ROOT", root.string().c_str(), 1);
  const ExperimentConfig cfg = parse_config_text("kind = macro\n");
  CHECK(cfg.output_dir() == root / "macro");
  unsetenv("DCP_OUTPUT_ROOT");
  const ExperimentConfig cfg2 = parse_config_text("kind = macro\n");
  CHECK(cfg2.output_dir() == fs::path("out") / "macro");
}

}  // TEST_SUITE
