#include "config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <set>
#include <sstream>

namespace spde::cli {

namespace {

void only_keys(const json& j, const char* where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(std::string("unknown key '") + it.key() + "' in " + where);
}

template <class T>
T get(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

const char* to_string(Command c) {
  switch (c) {
    case Command::CheckCovariance: return "check-covariance";
    case Command::Green: return "green";
    case Command::Simulate: return "simulate";
    case Command::Picard: return "picard";
    case Command::Regularity: return "regularity";
    case Command::Malliavin: return "malliavin";
  }
  return "?";
}

Command parse_command(const std::string& s) {
  for (Command c : {Command::CheckCovariance, Command::Green, Command::Simulate, Command::Picard, Command::Regularity,
                    Command::Malliavin})
    if (s == to_string(c)) return c;
  throw ConfigError("unknown command '" + s + "'");
}

const json& RunConfig::block(const char* name) const {
  static const json empty = json::object();
  if (raw.contains(name) && raw[name].is_object()) return raw[name];
  return empty;
}

CovarianceSpec parse_covariance(const json& j, int d_default) {
  if (!j.is_object()) throw ConfigError("covariance must be an object");
  const std::string kind = lower(get<std::string>(j, "kind", "white"));
  const int d = get<int>(j, "d", d_default);
  if (kind == "white" || kind == "white_noise") return CovarianceSpec::white(d);
  if (kind == "constant") return CovarianceSpec::constant(d, get<double>(j, "c", 1.0));
  if (kind == "riesz" || kind == "riesz_power") {
    if (!j.contains("B")) throw ConfigError("riesz covariance needs B");
    return CovarianceSpec::riesz(d, get<double>(j, "B", 0.0));
  }
  if (kind == "tabulated")
    return CovarianceSpec::tabulated(d, get<std::vector<double>>(j, "r", {}), get<std::vector<double>>(j, "f", {}));
  throw ConfigError("unknown covariance kind '" + kind + "'");
}

Coefficient parse_coefficient(const json& j) {
  if (j.is_number()) return Coefficient::constant(j.get<double>());
  only_keys(j, "coefficient", {"kind", "a", "b", "c"});
  const std::string kind = lower(get<std::string>(j, "kind", "constant"));
  const double a = get<double>(j, "a", 0.0), b = get<double>(j, "b", 0.0), c = get<double>(j, "c", 0.0);
  if (kind == "constant") return Coefficient::constant(a);
  if (kind == "affine") return Coefficient::affine(a, b);
  if (kind == "tanh") return Coefficient::tanh(a, b, c);
  if (kind == "sine" || kind == "sin") return Coefficient::sine(a, b, c);
  if (kind == "quadratic") return Coefficient::quadratic(a, b, c);
  throw ConfigError("unknown coefficient kind '" + kind + "'");
}

Cubic parse_cubic(const json& j) {
  if (j.is_string()) {
    const std::string s = lower(j.get<std::string>());
    if (s == "double_well") return Cubic::double_well();
    if (s == "zero") return {};
    throw ConfigError("unknown cubic '" + s + "'");
  }
  only_keys(j, "R", {"r3", "r2", "r1", "r0"});
  return {get<double>(j, "r3", 0.0), get<double>(j, "r2", 0.0), get<double>(j, "r1", 0.0), get<double>(j, "r0", 0.0)};
}

ModelSpec parse_model(const json& j) {
  only_keys(j, "model", {"bc", "sigma", "R", "g", "drift", "lipschitz_only", "epsilon"});
  ModelSpec m;
  m.bc = parse_bc(get<std::string>(j, "bc", "neumann"));
  if (j.contains("sigma")) m.sigma = parse_coefficient(j["sigma"]);
  if (j.contains("R")) m.R = parse_cubic(j["R"]);
  if (j.contains("g")) m.g = parse_coefficient(j["g"]);
  if (j.contains("drift")) {
    if (!j["drift"].is_array()) throw ConfigError("drift must be an array");
    for (const auto& t : j["drift"]) {
      only_keys(t, "drift term", {"k", "b"});
      DriftTerm d;
      d.k = get<std::vector<int>>(t, "k", {});
      if (!t.contains("b")) throw ConfigError("drift term needs b");
      d.b = parse_coefficient(t["b"]);
      m.drift.push_back(std::move(d));
    }
  }
  m.lipschitz_only = get<bool>(j, "lipschitz_only", false);
  m.ch_epsilon = get<double>(j, "epsilon", 0.2);
  return m;
}

InitialCondition parse_initial(const json& j) {
  only_keys(j, "u0", {"kind", "value", "mode", "decay", "seed", "coeffs"});
  InitialCondition u;
  const std::string kind = lower(get<std::string>(j, "kind", "zero"));
  if (kind == "zero")
    u.kind = InitialCondition::Kind::Zero;
  else if (kind == "constant")
    u.kind = InitialCondition::Kind::Constant;
  else if (kind == "mode")
    u.kind = InitialCondition::Kind::Mode;
  else if (kind == "random")
    u.kind = InitialCondition::Kind::Random;
  else if (kind == "coefficients")
    u.kind = InitialCondition::Kind::Coefficients;
  else
    throw ConfigError("unknown u0 kind '" + kind + "'");
  u.value = get<double>(j, "value", 0.0);
  u.mode = get<std::vector<int>>(j, "mode", {});
  u.decay = get<double>(j, "decay", 2.0);
  u.seed = get<std::uint64_t>(j, "seed", 0);
  u.coeffs = get<std::vector<double>>(j, "coeffs", {});
  return u;
}

SolverConfig parse_solver(const json& j) {
  only_keys(j, "solver", {"d", "M", "dt", "T", "scheme", "truncation", "q", "ensemble", "record_every", "record_noise",
                          "stop_at_tau", "u0"});
  SolverConfig s;
  s.d = get<int>(j, "d", 1);
  s.M = get<int>(j, "M", 16);
  s.dt = get<double>(j, "dt", 1e-3);
  s.T = get<double>(j, "T", 0.1);
  s.scheme = parse_scheme(get<std::string>(j, "scheme", "exponential_euler"));
  if (j.contains("truncation") && !j["truncation"].is_null()) s.truncation_level = get<double>(j, "truncation", 0.0);
  if (j.contains("q") && j["q"].is_string()) {
    if (lower(j["q"].get<std::string>()) != "inf") throw ConfigError("q must be a number or \"inf\"");
    s.q = std::numeric_limits<double>::infinity();
  } else {
    s.q = get<double>(j, "q", 2.0);
  }
  s.ensemble = get<std::size_t>(j, "ensemble", 1);
  s.record_every = get<int>(j, "record_every", 1);
  s.record_noise = get<bool>(j, "record_noise", false);
  s.stop_at_tau = get<bool>(j, "stop_at_tau", true);
  if (j.contains("u0")) s.u0 = parse_initial(j["u0"]);
  if (s.d < 1 || s.d > 5) throw ConfigError("solver.d must be in 1..5");
  if (s.M < 1) throw ConfigError("solver.M must be positive");
  if (!(s.dt > 0.0) || !(s.T >= 0.0)) throw ConfigError("solver needs dt > 0 and T >= 0");
  if (s.ensemble < 1) throw ConfigError("solver.ensemble must be >= 1");
  return s;
}

RunConfig parse_config(const json& j0, std::optional<Command> command, std::optional<std::uint64_t> seed) {
  if (!j0.is_object()) throw ConfigError("config must be a JSON object");
  only_keys(j0, "config", {"command", "seed", "model", "solver", "covariance", "noise", "output", "green", "picard",
                           "regularity", "malliavin", "check"});
  RunConfig rc;
  rc.raw = j0;
  if (command) {
    rc.command = *command;
    rc.raw["command"] = to_string(*command);
  } else {
    if (!j0.contains("command")) throw ConfigError("config has no command");
    rc.command = parse_command(get<std::string>(j0, "command", ""));
  }
  rc.seed = get<std::uint64_t>(j0, "seed", 0);
  if (seed) {
    rc.seed = *seed;
    rc.raw["seed"] = *seed;
  }
  try {
    rc.solver = parse_solver(j0.contains("solver") ? j0["solver"] : json::object());
    rc.solver.seed = rc.seed;
    rc.model = parse_model(j0.contains("model") ? j0["model"] : json::object());
    rc.covariance = parse_covariance(j0.contains("covariance") ? j0["covariance"] : json::object(), rc.solver.d);
    if (j0.contains("noise")) {
      only_keys(j0["noise"], "noise", {"backend"});
      if (j0["noise"].contains("backend")) rc.noise = parse_noise_kind(get<std::string>(j0["noise"], "backend", ""));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return rc;
}

RunConfig load_config(const std::string& path, std::optional<Command> command, std::optional<std::uint64_t> seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j, command, seed);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string config_hash(const json& raw) { return sha256_hex(raw.dump()); }

}  // namespace spde::cli
