#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "spde/covariance.hpp"
#include "spde/model.hpp"
#include "spde/noise.hpp"
#include "spde/solver.hpp"

namespace spde::cli {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Command { CheckCovariance, Green, Simulate, Picard, Regularity, Malliavin };
const char* to_string(Command c);
Command parse_command(const std::string& s);

struct RunConfig {
  Command command = Command::Simulate;
  json raw;  // as read, with the seed override applied
  ModelSpec model;
  SolverConfig solver;
  CovarianceSpec covariance;
  std::optional<NoiseKind> noise;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  bool force = false;

  // command-specific block, empty object when absent
  const json& block(const char* name) const;
};

CovarianceSpec parse_covariance(const json& j, int d_default);
Coefficient parse_coefficient(const json& j);
Cubic parse_cubic(const json& j);
ModelSpec parse_model(const json& j);
InitialCondition parse_initial(const json& j);
SolverConfig parse_solver(const json& j);

// command may come from the file or be forced by the caller
RunConfig parse_config(const json& j, std::optional<Command> command = std::nullopt,
                       std::optional<std::uint64_t> seed = std::nullopt);
RunConfig load_config(const std::string& path, std::optional<Command> command = std::nullopt,
                      std::optional<std::uint64_t> seed = std::nullopt);

std::string sha256_hex(const std::string& bytes);
// hash of the canonical dump (sorted keys, no whitespace)
std::string config_hash(const json& raw);

}  // namespace spde::cli
