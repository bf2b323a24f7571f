#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "run.hpp"
#include "spde/greens.hpp"
#include "spde/kernels.hpp"

using namespace spde;
using namespace spde::cli;

namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spde_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(std::vector<std::string> args, std::string* stdout_text = nullptr) {
  args.insert(args.begin(), "spde_ch");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int prev = max_threads();
  const int rc = main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
  set_threads(prev);
  if (stdout_text) *stdout_text = out.str();
  return rc;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

json simulate_config() {
  return json::parse(R"({
    "command": "simulate",
    "seed": 11,
    "model": {"bc": "neumann", "R": "double_well", "sigma": {"kind": "tanh", "a": 0.2, "b": 0.1, "c": 1.0}},
    "solver": {"d": 2, "M": 6, "dt": 0.001, "T": 0.01, "ensemble": 3, "truncation": 8, "q": 3},
    "covariance": {"kind": "riesz", "B": 1.0},
    "output": {"snapshots": true}
  })");
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config parsing") {
    const RunConfig rc = parse_config(simulate_config(), std::nullopt, std::nullopt);
    CHECK(rc.command == Command::Simulate);
    CHECK(rc.seed == 11);
    CHECK(rc.solver.d == 2);
    CHECK(rc.solver.truncation_level.value() == 8.0);
    CHECK(rc.covariance.kind == CovarianceSpec::Kind::RieszPower);
    CHECK(rc.covariance.d == 2);
    CHECK(rc.model.sigma.kind() == Coefficient::Kind::Tanh);
    const RunConfig over = parse_config(simulate_config(), Command::Green, 99);
    CHECK(over.command == Command::Green);
    CHECK(over.seed == 99);
    CHECK(config_hash(over.raw) != config_hash(rc.raw));

    json bad = simulate_config();
    bad["solver"]["Mx"] = 3;
    CHECK_THROWS_AS(parse_config(bad, std::nullopt, std::nullopt), ConfigError);
    json bad2 = simulate_config();
    bad2["covariance"]["kind"] = "gauss";
    CHECK_THROWS_AS(parse_config(bad2, std::nullopt, std::nullopt), ConfigError);
    json inf = simulate_config();
    inf["solver"]["q"] = "inf";
    CHECK(std::isinf(parse_config(inf, std::nullopt, std::nullopt).solver.q));
  }

  TEST_CASE("sha256") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("snapshot round trip") {
    const Basis b(3, 4, BoundaryCondition::Dirichlet);
    SpectralField u(b);
    for (std::size_t k = 0; k < u.coeffs.size(); ++k) u[k] = std::sin(1.0 + k) * 1e-3;
    const std::string s = encode_snapshot(u);
    CHECK(s.size() == 25 + 8 * u.coeffs.size());
    CHECK(s.substr(0, 5) == "SPDE1");
    const SpectralField v = decode_snapshot(s);
    CHECK(v.basis == b);
    CHECK(v.coeffs == u.coeffs);
    CHECK_THROWS_AS(decode_snapshot("SPDE0" + s.substr(5)), DomainError);
    CHECK_THROWS_AS(decode_snapshot(s.substr(0, s.size() - 1)), DomainError);
  }

  TEST_CASE("check-covariance straddles the threshold") {
    for (double B : {3.1, 3.3}) {
      json j = {{"command", "check-covariance"},
                {"solver", {{"d", 4}}},
                {"model", {{"epsilon", 0.2}}},
                {"covariance", {{"kind", "riesz"}, {"B", B}}}};
      const RunOutput out = execute(parse_config(j, std::nullopt, std::nullopt));
      const std::string& csv = out.files.at("conditions.csv");
      const auto at = csv.find("covch,covCH,");
      REQUIRE(at != std::string::npos);
      const std::string verdict = csv.substr(at + 12, csv.find(',', at + 12) - at - 12);
      CHECK(verdict == (B < 3.2 ? "Admissible" : "Inadmissible"));
      CHECK(csv.find("config_hash,module_version") != std::string::npos);
    }
  }

  TEST_CASE("zero model reproduces the semigroup") {
    json j = json::parse(R"({
      "command": "simulate",
      "model": {"lipschitz_only": true},
      "solver": {"d": 1, "M": 16, "dt": 0.001, "T": 0.02,
                 "u0": {"kind": "random", "value": 1.0, "decay": 1.0, "seed": 4}},
      "covariance": {"kind": "white"},
      "output": {"snapshots": true}
    })");
    const RunConfig rc = parse_config(j, std::nullopt, std::nullopt);
    const RunOutput out = execute(rc);
    const SpectralField u = decode_snapshot(out.files.at("snapshots/path_00000.spde1"));
    const SpectralField ref = apply_semigroup(rc.solver.u0.build(u.basis), 0.02);
    for (std::size_t k = 0; k < u.coeffs.size(); ++k) CHECK(u[k] == doctest::Approx(ref[k]).epsilon(1e-12));
  }

  TEST_CASE("simulate writes byte-identical outputs across runs and thread counts") {
    const fs::path d = scratch_dir("repro");
    const fs::path cfg = write_config(d, simulate_config());
    REQUIRE(run_cli({"simulate", "--config", cfg.string(), "--out", (d / "a").string()}) == 0);
    REQUIRE(run_cli({"simulate", "--config", cfg.string(), "--out", (d / "b").string(), "--threads", "4"}) == 0);
    for (const char* f : {"paths.jsonl", "summary.csv", "manifest.json", "validation.json",
                          "snapshots/path_00002.spde1"})
      CHECK(slurp(d / "a" / f) == slurp(d / "b" / f));
    const json man = json::parse(slurp(d / "a" / "manifest.json"));
    CHECK(man["command"] == "simulate");
    CHECK(man["seed"] == 11);
    bool listed = false;
    for (const auto& f : man["files"])
      if (f["name"] == "summary.csv") listed = f["sha256"] == sha256_hex(slurp(d / "a" / "summary.csv"));
    CHECK(listed);
    REQUIRE(run_cli({"simulate", "--config", cfg.string(), "--out", (d / "c").string(), "--seed", "12"}) == 0);
    CHECK(slurp(d / "a" / "paths.jsonl") != slurp(d / "c" / "paths.jsonl"));
    fs::remove_all(d);
  }

  TEST_CASE("errors are JSON with distinct exit codes") {
    const fs::path d = scratch_dir("errors");
    std::string text;
    CHECK(run_cli({"simulate", "--config", (d / "missing.json").string()}, &text) == 2);
    CHECK(json::parse(text)["error"]["kind"] == "config");

    json inadm = simulate_config();
    inadm["solver"]["d"] = 4;
    inadm["solver"]["M"] = 2;
    inadm["covariance"]["B"] = 3.9;
    const fs::path c1 = write_config(d, inadm);
    CHECK(run_cli({"simulate", "--config", c1.string(), "--out", (d / "o").string()}, &text) == 3);
    CHECK(json::parse(text)["error"]["kind"] == "precondition");

    json dom = simulate_config();
    dom["command"] = "green";
    dom["green"] = {{"tau_min", -1.0}};
    const fs::path c2 = write_config(d, dom);
    CHECK(run_cli({"green", "--config", c2.string(), "--out", (d / "o").string()}, &text) == 4);
    CHECK(json::parse(text)["error"]["kind"] == "domain");

    json blow = json::parse(R"({
      "model": {"R": {"r3": -1.0}, "lipschitz_only": false},
      "solver": {"d": 1, "M": 8, "dt": 0.01, "T": 1.0, "u0": {"kind": "constant", "value": 50.0}},
      "covariance": {"kind": "white"}
    })");
    const fs::path c3 = write_config(d, blow);
    CHECK(run_cli({"simulate", "--config", c3.string(), "--out", (d / "o").string()}, &text) == 3);
    CHECK(run_cli({"simulate", "--config", c3.string(), "--out", (d / "f").string(), "--force"}, &text) == 0);
    CHECK(json::parse(slurp(d / "f" / "paths.jsonl"))["exploded"] == true);
    CHECK(run_cli({"bogus"}, &text) == 2);
    CHECK(json::parse(text)["error"]["kind"] == "usage");
    fs::remove_all(d);
  }

  TEST_CASE("other subcommands produce their tables") {
    const fs::path d = scratch_dir("subs");
    json base = json::parse(R"({
      "model": {"lipschitz_only": true, "sigma": {"kind": "tanh", "a": 0.5, "b": 0.2, "c": 1.0}},
      "solver": {"d": 1, "M": 16, "dt": 0.001, "T": 0.05, "ensemble": 8},
      "covariance": {"kind": "riesz", "B": 0.5},
      "malliavin": {"tau": 0.01}
    })");
    const fs::path cfg = write_config(d, base);
    CHECK(run_cli({"green", "--config", cfg.string(), "--out", (d / "g").string()}) == 0);
    CHECK(fs::exists(d / "g" / "green.csv"));
    CHECK(run_cli({"picard", "--config", cfg.string(), "--out", (d / "p").string()}) == 0);
    CHECK(fs::exists(d / "p" / "picard.csv"));
    CHECK(run_cli({"regularity", "--config", cfg.string(), "--out", (d / "r").string()}) == 0);
    CHECK(fs::exists(d / "r" / "regularity.csv"));
    CHECK(run_cli({"malliavin", "--config", cfg.string(), "--out", (d / "m").string()}) == 0);
    for (const char* f : {"gamma.csv", "decomposition.csv", "density.csv"}) CHECK(fs::exists(d / "m" / f));
    fs::remove_all(d);
  }
}
