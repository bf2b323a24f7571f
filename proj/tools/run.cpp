#include "run.hpp"

#include <boost/version.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

#include "CLI11.hpp"
#include "spde/greens.hpp"
#include "spde/kernels.hpp"
#include "spde/malliavin.hpp"
#include "spde/regularity.hpp"
#include "spde/version.hpp"

namespace spde::cli {

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<double>& x, char sep = ';') {
  std::string s;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) s += sep;
    s += num(x[i]);
  }
  return s;
}

// CSV with the provenance columns appended to every row
class Table {
 public:
  Table(std::vector<std::string> cols, std::string hash, std::string module)
      : hash_(std::move(hash)), module_(std::move(module)) {
    cols.push_back("config_hash");
    cols.push_back("module_version");
    line(cols);
  }
  void row(const std::vector<std::string>& cells) {
    std::vector<std::string> c = cells;
    c.push_back(hash_);
    c.push_back(module_);
    line(c);
  }
  const std::string& str() const { return s_; }

 private:
  void line(const std::vector<std::string>& c) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (i) s_ += ',';
      s_ += c[i];
    }
    s_ += '\n';
  }
  std::string hash_, module_, s_;
};

std::string module_tag(const char* name) { return std::string(name) + "/" + kVersion; }

std::string short_hash(const RunConfig& rc) { return config_hash(rc.raw).substr(0, 16); }

NoiseBackend backend_for(const RunConfig& rc) {
  const Basis b = rc.solver.basis(rc.model.bc);
  const NoiseKind k = rc.noise ? *rc.noise : default_noise_kind(rc.covariance, rc.solver.d);
  return make_backend(rc.covariance, b, k);
}

std::vector<std::vector<double>> get_points(const json& blk, int d, std::vector<std::vector<double>> fallback) {
  if (!blk.contains("points")) return fallback;
  std::vector<std::vector<double>> p;
  try {
    p = blk["points"].get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("points must be a list of coordinate lists: ") + e.what());
  }
  for (const auto& x : p)
    if (static_cast<int>(x.size()) != d) throw ConfigError("point dimension does not match solver.d");
  return p;
}

template <class T>
T opt_get(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string validation_json(const ValidationReport& v) {
  json j;
  j["ok"] = v.ok();
  j["violations"] = json::array();
  for (const auto& i : v.violations) j["violations"].push_back({{"id", i.id}, {"message", i.message}});
  j["covariance"] = json::array();
  for (const auto& c : v.covariance)
    j["covariance"].push_back({{"id", c.id}, {"verdict", to_string(c.verdict)}, {"note", c.note}});
  return j.dump(2) + "\n";
}

void gate(const RunConfig& rc, RunOutput& out) {
  const ValidationReport v = validate_model(rc.model, rc.covariance, rc.solver.d, rc.solver.q);
  out.files["validation.json"] = validation_json(v);
  for (const auto& i : v.violations) out.summary += "violation " + i.id + ": " + i.message + "\n";
  if (!v.ok() && !rc.force) throw PreconditionError("model validation failed (use --force to run anyway)");
}

// ---------------------------------------------------------------- commands

void cmd_check_covariance(const RunConfig& rc, RunOutput& out) {
  const json& cov = rc.raw.contains("covariance") ? rc.raw["covariance"] : json::object();
  const json& chk = rc.block("check");
  auto pick = [&](const char* k, double fb) { return opt_get<double>(chk, k, opt_get<double>(cov, k, fb)); };
  const int d = rc.covariance.d;
  const double eps = pick("eps", rc.model.ch_epsilon);
  const double q = pick("q", d + 1.0);
  const double p = pick("p", std::max(q, 2.0));
  const double order = pick("order", 0.25);
  const KernelExponents ex = KernelExponents::cahn_hilliard(d);

  Table t({"condition", "id", "verdict", "value", "exponent", "log_power", "margin"}, short_hash(rc),
          module_tag("covariance"));
  auto add = [&](const std::string& name, const std::function<ConditionReport()>& fn) {
    try {
      const ConditionReport c = fn();
      t.row({name, c.id, to_string(c.verdict), num(c.value), num(c.exponent), std::to_string(c.log_power),
             num(c.margin)});
      out.summary += name + " " + c.id + " " + to_string(c.verdict) + "\n";
    } catch (const std::invalid_argument& e) {
      // precondition of this one condition not met; the others still apply
      t.row({name, name, "error", "nan", "nan", "0", "nan"});
      out.summary += name + " error: " + e.what() + "\n";
    }
  };
  add("cns", [&] { return cns_admissible(rc.covariance, ex, d); });
  if (d == 4 || d == 5) add("covch", [&] { return covch_admissible(rc.covariance, d, eps); });
  add("holder_space", [&] { return holder_condition(rc.covariance, ex, d, HolderWhich::Space, order); });
  add("holder_time", [&] { return holder_condition(rc.covariance, ex, d, HolderWhich::Time, order); });
  add("cprime3", [&] { return cprime3(rc.covariance, ex, d, q, p); });
  out.files["conditions.csv"] = t.str();
}

void cmd_green(const RunConfig& rc, RunOutput& out) {
  const json& g = rc.block("green");
  const int d = opt_get<int>(g, "d", rc.solver.d);
  const BoundaryCondition bc = parse_bc(opt_get<std::string>(g, "bc", to_string(rc.model.bc)));
  const double tmin = opt_get<double>(g, "tau_min", 1e-4), tmax = opt_get<double>(g, "tau_max", 1e-1);
  const int n_tau = opt_get<int>(g, "n_tau", 7), n_r = opt_get<int>(g, "n_r", 5);
  const int M = opt_get<int>(g, "M", d <= 2 ? 512 : 64);
  const MultiIndex a = opt_get<std::vector<int>>(g, "a", MultiIndex(d, 0));
  const int b = opt_get<int>(g, "b", 0);
  if (static_cast<int>(a.size()) != d) throw ConfigError("green.a must have d entries");
  std::optional<double> c;
  if (g.contains("c")) c = opt_get<double>(g, "c", 0.0);
  const KernelExponents ex = KernelExponents::cahn_hilliard(d);
  const auto probes = make_kernel_probes(d, tmin, tmax, n_tau, n_r);
  const KernelBoundFit fit = fit_kernel_bound(ex, a, b, probes, bc, M, c);
  const auto samples = sample_kernel(ex, a, b, probes, bc, M);
  int na = 0;
  for (int v : a) na += v;
  Table t({"tau", "x", "y", "value", "bound_rhs", "ratio"}, short_hash(rc), module_tag("greens"));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const double xi = std::pow(s.dist, ex.beta) / std::pow(s.tau, ex.gamma);
    const double rhs = fit.C * std::pow(s.tau, -(ex.alpha + na * ex.delta + b * ex.eta)) * std::exp(-fit.c * xi);
    t.row({num(s.tau), join(probes[i].x), join(probes[i].y), num(s.value), num(rhs), num(std::abs(s.value) / rhs)});
  }
  out.files["green.csv"] = t.str();
  out.summary += "fitted C = " + num(fit.C) + ", c = " + num(fit.c) + " over " + std::to_string(fit.probes) + " probes\n";
}

std::string path_json(const Trajectory& tr, const EnergySeries& e) {
  json j;
  j["path"] = tr.path;
  j["exploded"] = tr.exploded;
  j["last_valid_time"] = tr.last_valid_time;
  j["steps_taken"] = tr.steps_taken;
  j["stop_time"] = tr.stop_time ? json(*tr.stop_time) : json(nullptr);
  j["times"] = tr.times;
  j["norms"] = tr.norms;
  j["l2_sq"] = e.l2_sq;
  j["lap_integral"] = e.lap_integral;
  if (!e.mass_sq.empty()) j["mass_sq"] = e.mass_sq;
  if (!e.inv_sqrt_a_sq.empty()) j["inv_sqrt_a_sq"] = e.inv_sqrt_a_sq;
  if (!e.ch_energy.empty()) j["ch_energy"] = e.ch_energy;
  j["finite"] = e.finite;
  return j.dump();
}

void cmd_simulate(const RunConfig& rc, RunOutput& out) {
  gate(rc, out);
  const NoiseBackend nb = backend_for(rc);
  const std::vector<Trajectory> ens = run_ensemble(rc.model, rc.solver, nb, rc.force);
  const Cubic* R = rc.model.R.is_zero() ? nullptr : &rc.model.R;
  std::string jl;
  std::size_t exploded = 0, stopped = 0, finite = 0;
  std::vector<EnergySeries> es;
  for (const auto& tr : ens) {
    es.push_back(energy_diagnostics(tr, R));
    jl += path_json(tr, es.back()) + "\n";
    exploded += tr.exploded;
    stopped += tr.stop_time.has_value();
    finite += !tr.exploded && es.back().finite;
  }
  out.files["paths.jsonl"] = jl;

  // ensemble summary over the common record grid
  Table t({"time", "paths", "mean_norm", "se_norm", "mean_l2_sq", "mean_ch_energy", "fraction_stopped"}, short_hash(rc),
          module_tag("solver"));
  std::vector<double> grid;
  for (const auto& tr : ens)
    if (tr.times.size() > grid.size()) grid = tr.times;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::vector<double> nv, lv, ev;
    std::size_t stop = 0;
    for (std::size_t p = 0; p < ens.size(); ++p) {
      const auto& tr = ens[p];
      if (tr.stop_time && *tr.stop_time <= grid[i]) ++stop;
      if (tr.exploded || i >= tr.times.size() || tr.times[i] != grid[i]) continue;
      nv.push_back(tr.norms[i]);
      lv.push_back(es[p].l2_sq[i]);
      if (R) ev.push_back(es[p].ch_energy[i]);
    }
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return v.empty() ? std::nan("") : s / v.size();
    };
    const double mn = mean(nv);
    double var = 0.0;
    for (double x : nv) var += (x - mn) * (x - mn);
    const double se = nv.size() > 1 ? std::sqrt(var / (nv.size() - 1) / nv.size()) : 0.0;
    t.row({num(grid[i]), std::to_string(nv.size()), num(mn), num(se), num(mean(lv)), R ? num(mean(ev)) : "nan",
           num(static_cast<double>(stop) / ens.size())});
  }
  out.files["summary.csv"] = t.str();

  if (opt_get<bool>(rc.block("output"), "snapshots", false))
    for (const auto& tr : ens) {
      char name[64];
      std::snprintf(name, sizeof name, "snapshots/path_%05llu.spde1", static_cast<unsigned long long>(tr.path));
      out.files[name] = encode_snapshot(tr.state(tr.states.size() - 1));
    }
  out.summary += std::to_string(ens.size()) + " paths: " + std::to_string(exploded) + " exploded, " +
                 std::to_string(stopped) + " stopped at tau_n, " + std::to_string(finite) + " finite\n";
}

void cmd_picard(const RunConfig& rc, RunOutput& out) {
  gate(rc, out);
  const json& p = rc.block("picard");
  const double tol = opt_get<double>(p, "tol", 1e-8);
  const int max_iter = opt_get<int>(p, "max_iter", 20);
  const NoiseBackend nb = backend_for(rc);
  if (!rc.force) check_simulation_preconditions(rc.model, rc.solver, rc.covariance);
  Table t({"path", "iteration", "delta", "ratio", "converged", "non_contraction"}, short_hash(rc), module_tag("solver"));
  for (std::size_t path = 0; path < rc.solver.ensemble; ++path) {
    const PicardResult r = picard_solve(rc.model, rc.solver, nb, tol, max_iter, path);
    for (std::size_t i = 0; i < r.deltas.size(); ++i)
      t.row({std::to_string(path), std::to_string(i + 1), num(r.deltas[i]), i ? num(r.ratios[i - 1]) : "nan",
             r.converged ? "1" : "0", r.non_contraction ? "1" : "0"});
    out.summary += "path " + std::to_string(path) + ": " + (r.converged ? "converged" : "not converged") + " after " +
                   std::to_string(r.iterations) + " iterations\n";
  }
  out.files["picard.csv"] = t.str();
}

void cmd_regularity(const RunConfig& rc, RunOutput& out) {
  gate(rc, out);
  const json& r = rc.block("regularity");
  const int d = rc.solver.d;
  SFOptions opt;
  const std::string axis = opt_get<std::string>(r, "axis", "time");
  if (axis != "time" && axis != "space") throw ConfigError("regularity.axis must be time or space");
  opt.axis = axis == "time" ? SFAxis::Time : SFAxis::Space;
  opt.space_axis = opt_get<int>(r, "space_axis", 0);
  if (opt.space_axis < 0 || opt.space_axis >= d) throw ConfigError("regularity.space_axis out of range");
  opt.t_ref = opt_get<double>(r, "t_ref", 0.1);
  opt.dt = rc.solver.dt;
  opt.points = get_points(r, d, {std::vector<double>(d, 1.0)});
  std::vector<double> lags = opt_get<std::vector<double>>(r, "lags", {});
  if (lags.empty()) {
    if (opt.axis == SFAxis::Time)
      for (int i = 2; i <= 12; ++i) lags.push_back(i * rc.solver.dt);
    else
      for (int i = 0; i < 6; ++i) lags.push_back(4.0 * std::numbers::pi / rc.solver.M * std::pow(1.25, i));
  }
  const double hmax = *std::max_element(lags.begin(), lags.end());
  SolverConfig c = rc.solver;
  c.record_every = 1;
  c.T = opt.axis == SFAxis::Time ? std::max(opt.t_ref + hmax, 4.0 * hmax) : opt.t_ref;
  opt.T = c.T;
  const NoiseBackend nb = backend_for(rc);
  const auto ens = run_ensemble(rc.model, c, nb, rc.force);
  const StructureFunction sf = structure_function_ensemble(ens, opt, lags);
  const bool oracle_ok = rc.model.linear() && rc.model.sigma.is_constant();
  StructureFunction so;
  if (oracle_ok) so = structure_function_oracle(nb, rc.model.sigma.a(), c.u0.build(nb.basis()), opt, lags);
  const double lo = opt_get<double>(r, "fit_lo", lags.front()), hi = opt_get<double>(r, "fit_hi", hmax);
  HolderFit fit;
  bool have_fit = true;
  try {
    fit = holder_exponent(sf, lo, hi);
  } catch (const DomainError& e) {
    have_fit = false;
    out.summary += std::string("no fit: ") + e.what() + "\n";
  }
  HolderFit ofit;
  if (oracle_ok) ofit = holder_exponent(so, lo, hi);
  Table t({"lag", "S2", "stderr", "oracle_S2", "slope", "exponent", "ci", "saturated", "oracle_slope"}, short_hash(rc),
          module_tag("regularity"));
  for (std::size_t i = 0; i < lags.size(); ++i)
    t.row({num(lags[i]), num(sf.values[i]), num(sf.stderr_[i]), oracle_ok ? num(so.values[i]) : "nan",
           have_fit ? num(fit.slope) : "nan", have_fit ? num(fit.exponent) : "nan", have_fit ? num(fit.ci) : "nan",
           have_fit ? (fit.saturated ? "1" : "0") : "nan", oracle_ok ? num(ofit.slope) : "nan"});
  out.files["regularity.csv"] = t.str();
  const HolderBounds hb = rc.model.lipschitz_only ? lipschitz_holder_bounds(rc.model, rc.covariance, d)
                                                  : ch_holder_bounds(rc.model, d, opt_get<double>(r, "u0_order", 1.0));
  out.summary += "slope " + num(fit.slope) + " exponent " + num(fit.exponent) + "; theorem " + hb.theorem +
                 " allows " + (opt.axis == SFAxis::Time ? num(hb.time_sup) : num(hb.space_sup)) + "\n";
}

void cmd_malliavin(const RunConfig& rc, RunOutput& out) {
  gate(rc, out);
  const json& m = rc.block("malliavin");
  const int d = rc.solver.d;
  const double t0 = opt_get<double>(m, "t0", rc.solver.T);
  const auto points = get_points(m, d, {std::vector<double>(d, 0.5 * std::numbers::pi)});
  TangentOptions to;
  to.thin = opt_get<std::size_t>(m, "thin", 1);
  const double tau = opt_get<double>(m, "tau", -1.0);
  double nu_default = 0.01;
  if (rc.covariance.kind == CovarianceSpec::Kind::RieszPower) nu_default = std::min(rc.covariance.B, 1.0) / 32.0;
  const double nu = opt_get<double>(m, "nu", nu_default);
  const NoiseBackend nb = backend_for(rc);
  const MalliavinRun run = malliavin_ensemble(rc.model, rc.solver, nb, t0, points, to, tau, rc.force);

  Table g({"path", "index", "eigenvalue", "min_eigenvalue", "clipped", "thinning_delta"}, short_hash(rc),
          module_tag("malliavin"));
  for (std::size_t p = 0; p < run.gammas.size(); ++p) {
    const auto& mm = run.gammas[p];
    for (Eigen::Index i = 0; i < mm.eigenvalues.size(); ++i)
      g.row({std::to_string(p), std::to_string(i), num(mm.eigenvalues(i)), num(mm.min_eigenvalue),
             mm.clipped ? "1" : "0", num(mm.thinning_delta)});
  }
  out.files["gamma.csv"] = g.str();
  if (!run.terms.empty()) {
    Table t({"path", "tau", "point", "I1", "I2_row_sum", "I3", "I4", "gamma_vv", "lower_bound"}, short_hash(rc),
            module_tag("malliavin"));
    for (std::size_t p = 0; p < run.terms.size(); ++p) {
      const auto& dt = run.terms[p];
      for (std::size_t i = 0; i < points.size(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < points.size(); ++j)
          if (j != i) row += dt.I2(i, j);
        t.row({std::to_string(p), num(dt.tau), std::to_string(i), num(dt.I1), num(row), num(dt.I3[i]), num(dt.I4[i]),
               num(dt.gamma_vv), num(dt.lower_bound)});
      }
    }
    out.files["decomposition.csv"] = t.str();
  }
  const DensityReport dr = density_criterion(run.gammas, rc.model.sigma.abs_lower_bound(), rc.covariance, d, nu);
  Table s({"min_eigenvalue", "fraction_positive", "analytic_holds", "verdict", "note"}, short_hash(rc),
          module_tag("malliavin"));
  std::string note = dr.analytic_note;
  std::replace(note.begin(), note.end(), ',', ';');
  s.row({num(dr.min_eigenvalue), num(dr.fraction_positive), dr.analytic_holds ? "1" : "0", dr.verdict, note});
  out.files["density.csv"] = s.str();
  out.summary += "density: " + dr.verdict + " (" + dr.analytic_note + ")\n";
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s += static_cast<char>((v >> (8 * i)) & 0xFF);
}
void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s += static_cast<char>((v >> (8 * i)) & 0xFF);
}
std::uint64_t get_le(const std::string& s, std::size_t at, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_snapshot(const SpectralField& u) {
  std::string s = "SPDE1";
  put_u32(s, static_cast<std::uint32_t>(u.basis.dim()));
  put_u32(s, static_cast<std::uint32_t>(u.basis.modes_per_axis()));
  put_u32(s, u.basis.bc() == BoundaryCondition::Neumann ? 0u : 1u);
  put_u64(s, u.coeffs.size());
  for (double c : u.coeffs) {
    std::uint64_t bits;
    std::memcpy(&bits, &c, 8);
    put_u64(s, bits);
  }
  return s;
}

SpectralField decode_snapshot(const std::string& s) {
  if (s.size() < 25 || s.compare(0, 5, "SPDE1") != 0) throw DomainError("not an SPDE1 snapshot");
  const int d = static_cast<int>(get_le(s, 5, 4)), M = static_cast<int>(get_le(s, 9, 4));
  const std::uint32_t bc = static_cast<std::uint32_t>(get_le(s, 13, 4));
  const std::uint64_t n = get_le(s, 17, 8);
  if (bc > 1) throw DomainError("snapshot: bad boundary code");
  const Basis b(d, M, bc == 0 ? BoundaryCondition::Neumann : BoundaryCondition::Dirichlet);
  if (n != b.mode_count() || s.size() != 25 + 8 * n) throw DomainError("snapshot: size mismatch");
  SpectralField u(b);
  for (std::uint64_t k = 0; k < n; ++k) {
    const std::uint64_t bits = get_le(s, 25 + 8 * k, 8);
    std::memcpy(&u.coeffs[k], &bits, 8);
  }
  return u;
}

std::string error_json(const std::string& kind, const std::string& message) {
  return json{{"error", {{"kind", kind}, {"message", message}}}}.dump();
}

RunOutput execute(const RunConfig& rc) {
  RunOutput out;
  switch (rc.command) {
    case Command::CheckCovariance: cmd_check_covariance(rc, out); break;
    case Command::Green: cmd_green(rc, out); break;
    case Command::Simulate: cmd_simulate(rc, out); break;
    case Command::Picard: cmd_picard(rc, out); break;
    case Command::Regularity: cmd_regularity(rc, out); break;
    case Command::Malliavin: cmd_malliavin(rc, out); break;
  }
  return out;
}

std::string write_outputs(const RunConfig& rc, const RunOutput& out) {
  namespace fs = std::filesystem;
  const fs::path dir(rc.out_dir);
  fs::create_directories(dir);
  json files = json::array();
  for (const auto& [name, bytes] : out.files) {
    const fs::path p = dir / name;
    fs::create_directories(p.parent_path());
    std::ofstream o(p, std::ios::binary);
    o.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!o) throw std::runtime_error("cannot write " + p.string());
    files.push_back({{"name", name}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}});
  }
  json man;
  man["command"] = to_string(rc.command);
  man["seed"] = rc.seed;
  man["config_hash"] = config_hash(rc.raw);
  man["config"] = rc.raw;
  man["versions"] = {{"spde", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"boost", BOOST_LIB_VERSION},
                     {"spdlog", std::to_string(SPDLOG_VER_MAJOR) + "." + std::to_string(SPDLOG_VER_MINOR) + "." +
                                    std::to_string(SPDLOG_VER_PATCH)}};
  man["files"] = files;
  const fs::path mp = dir / "manifest.json";
  std::ofstream o(mp, std::ios::binary);
  o << man.dump(2) << "\n";
  if (!o) throw std::runtime_error("cannot write " + mp.string());
  return mp.string();
}

int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"spde_ch: stochastic Cahn-Hilliard toolkit"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool force = false;
  for (Command c : {Command::CheckCovariance, Command::Green, Command::Simulate, Command::Picard, Command::Regularity,
                    Command::Malliavin}) {
    auto* sub = app.add_subcommand(to_string(c));
    sub->add_option("--config", config_path, "JSON config")->required();
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--threads", threads, "OpenMP threads (default SPDE_CH_THREADS)");
    sub->add_flag("--force", force, "run even when condition checks fail");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    out << error_json("usage", e.what()) << "\n";
    return 2;
  }
  const Command cmd = parse_command(app.get_subcommands().front()->get_name());
  if (threads <= 0)
    if (const char* env = std::getenv("SPDE_CH_THREADS")) threads = std::atoi(env);
  if (threads > 0) set_threads(threads);
  try {
    RunConfig rc = load_config(config_path, cmd, seed);
    rc.out_dir = out_dir;
    rc.force = force;
    const RunOutput res = execute(rc);
    write_outputs(rc, res);
    out << res.summary;
    return 0;
  } catch (const ConfigError& e) {
    out << error_json("config", e.what()) << "\n";
    return 2;
  } catch (const PreconditionError& e) {
    out << error_json("precondition", e.what()) << "\n";
    return 3;
  } catch (const BlowUpError& e) {
    out << error_json("blow_up", e.what()) << "\n";
    return 5;
  } catch (const std::invalid_argument& e) {
    out << error_json("domain", e.what()) << "\n";
    return 4;
  } catch (const std::exception& e) {
    out << error_json("runtime", e.what()) << "\n";
    err << e.what() << "\n";
    return 1;
  }
}

}  // namespace spde::cli
