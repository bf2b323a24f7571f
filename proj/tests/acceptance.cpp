// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "spde/covariance.hpp"
#include "spde/greens.hpp"
#include "spde/kernels.hpp"
#include "spde/malliavin.hpp"
#include "spde/noise.hpp"
#include "spde/regularity.hpp"
#include "spde/solver.hpp"

using namespace spde;
using std::numbers::pi;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::vector<double> geometric(double lo, double hi, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
  return v;
}

// ------------------------------------------------------------------ 1
Outcome riesz_thresholds() {
  std::size_t n = 0, agree = 0, skipped = 0;
  for (int d : {4, 5})
    for (int e10 = 1; e10 <= 9; ++e10) {
      const double eps = e10 / 10.0;
      const double thr = 4.0 - d * eps;
      for (double off : {-0.1, -0.05, -0.01, 0.01, 0.05, 0.1}) {
        const double B = thr + off;
        if (!(B > 0.0)) {
          ++skipped;
          continue;
        }
        const bool expect = d * eps + B < 4.0;
        const bool got = covch_admissible(CovarianceSpec::riesz(d, B), d, eps).verdict == Verdict::Admissible;
        ++n;
        agree += expect == got;
      }
    }
  return {agree == n && n > 0, fmt("%zu/%zu agree (%zu grid points with B <= 0 not representable)", agree, n, skipped)};
}

// ------------------------------------------------------------------ 2
Outcome cns_thresholds() {
  std::size_t n = 0, agree = 0;
  const std::vector<std::pair<int, double>> cases{{3, 3.0}, {4, 4.0}, {5, 4.0}};
  for (const auto& [d, thr] : cases) {
    const KernelExponents ex = KernelExponents::cahn_hilliard(d);
    for (double off : {-0.1, -0.05, -0.01, 0.01, 0.05, 0.1}) {
      const double B = thr + off;
      const bool got = cns_admissible(CovarianceSpec::riesz(d, B), ex, d).verdict == Verdict::Admissible;
      ++n;
      agree += got == (B < thr);
    }
  }
  return {agree == n, fmt("%zu/%zu agree (d=3: B<3, d=4 log case: B<4, d=5: B<4)", agree, n)};
}

// ------------------------------------------------------------------ 3
Outcome green_function() {
  bool sym = true;
  for (auto bc : {BoundaryCondition::Neumann, BoundaryCondition::Dirichlet})
    for (int d : {1, 2})
      for (double tau : {1e-4, 1e-2, 0.5}) {
        std::vector<double> x(d), y(d);
        for (int i = 0; i < d; ++i) {
          x[i] = 0.4 + 0.7 * i;
          y[i] = 2.3 - 0.5 * i;
        }
        const int M = d == 1 ? 512 : 128;
        sym = sym && green_eval(1.0, x, 1.0 - tau, y, bc, M) == green_eval(1.0, y, 1.0 - tau, x, bc, M);
      }
  double ck = 0.0;
  for (auto bc : {BoundaryCondition::Neumann, BoundaryCondition::Dirichlet}) {
    const Basis b1(1, 64, bc), b2(2, 16, bc);
    ck = std::max(ck, chapman_kolmogorov_check(0.3, 0.2, 0.05, b1, b1));
    ck = std::max(ck, chapman_kolmogorov_check(0.3, 0.2, 0.05, b2, b2));
    ck = std::max(ck, chapman_kolmogorov_check(0.02, 0.011, 0.01, b1, b1));
  }
  bool mass = true;
  for (int d : {1, 2, 3}) {
    const Basis b(d, 8, BoundaryCondition::Neumann);
    InitialCondition ic;
    ic.kind = InitialCondition::Kind::Random;
    ic.value = 1.0;
    ic.decay = 0.0;
    const SpectralField u = ic.build(b);
    for (double t : {1e-4, 0.1, 3.0}) mass = mass && apply_semigroup(u, t)[0] == u[0];
  }
  double spread = 0.0;
  for (int d : {1, 2}) {
    const auto r = diagonal_lower_check(BoundaryCondition::Neumann, d, 1e-4, 1e-1, 0.3, 13, d == 1 ? 5 : 3,
                                        d == 1 ? kDefaultKernelModeCap : 256);
    spread = std::max(spread, r.ratio_spread);
  }
  return {sym && ck <= 1e-10 && mass && spread <= 10.0,
          fmt("symmetry %s, CK error %.3g, mass %s, diagonal spread %.3g", sym ? "exact" : "broken", ck,
              mass ? "exact" : "drifts", spread)};
}

// ------------------------------------------------------------------ 4
Outcome noise_covariance() {
  const Basis b(1, 16, BoundaryCondition::Neumann);
  const Grid g = matching_grid(b);
  GridField one(g, std::vector<double>(g.size(), 1.0)), cosx(g), bump(g), ramp(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x = g.coordinates(i)[0];
    cosx.values[i] = std::cos(x);
    bump.values[i] = std::exp(-4.0 * (x - 1.0) * (x - 1.0));
    ramp.values[i] = x / pi;
  }
  const std::size_t n = 10000;
  const auto c = empirical_covariance_test(make_backend(CovarianceSpec::constant(1, 1.0), b, NoiseKind::SpectralCholesky),
                                           one, one, 1.0, n, 1);
  const auto r1 = empirical_covariance_test(make_backend(CovarianceSpec::riesz(1, 0.5), b, NoiseKind::SpectralCholesky),
                                            cosx, bump, 0.5, n, 2);
  const auto r2 = empirical_covariance_test(make_backend(CovarianceSpec::riesz(1, 0.5), b, NoiseKind::GridCellCholesky),
                                            bump, ramp, 1.0, n, 3);
  const bool pi_ok = std::abs(c.target - pi * pi) <= 1e-10 * pi * pi;
  const double zmax = std::max({std::abs(c.z), std::abs(r1.z), std::abs(r2.z)});
  return {pi_ok && zmax < 4.0, fmt("z = %.2f (constant, target %.6f = pi^2), %.2f, %.2f; n = %zu", c.z, c.target, r1.z,
                                   r2.z, n)};
}

// ------------------------------------------------------------------ 5
Outcome linear_oracle() {
  ModelSpec m;
  m.lipschitz_only = true;
  m.sigma = Coefficient::constant(1.0);
  SolverConfig cfg;
  cfg.d = 1;
  cfg.M = 64;
  cfg.dt = 1e-3;
  cfg.T = 0.1;
  cfg.ensemble = 1000;
  cfg.seed = 1;
  cfg.record_every = static_cast<int>(cfg.steps());
  const NoiseBackend nb = make_backend(CovarianceSpec::white(1), cfg.basis(m.bc));
  const auto ens = run_ensemble(m, cfg, nb);
  const Basis& b = nb.basis();
  // each mode is centred Gaussian, so the variance estimate has SE target * sqrt(2 / n)
  double worst = 0.0, worst_sample = 0.0;
  std::size_t worst_k = 0;
  for (std::size_t k = 0; k <= 16; ++k) {
    double s2 = 0.0, s4 = 0.0;
    for (const auto& tr : ens) {
      const double v = tr.states.back()[k];
      s2 += v * v;
      s4 += v * v * v * v;
    }
    const double nn = static_cast<double>(ens.size());
    const double var = s2 / nn;
    const double mu = b.eigenvalue(k) * b.eigenvalue(k);
    const double target = ou_mode_variance(1.0, mu, ens.front().times.back());
    const double z = std::abs(var - target) / (target * std::sqrt(2.0 / nn));
    worst_sample = std::max(worst_sample, std::abs(var - target) / std::sqrt((s4 / nn - var * var) / nn));
    if (z > worst) {
      worst = z;
      worst_k = k;
    }
  }
  return {worst <= 3.0, fmt("max |var - oracle| / SE = %.2f at mode %zu over k <= 16, %zu paths (sample-SE z %.2f)",
                            worst, worst_k, ens.size(), worst_sample)};
}

// ------------------------------------------------------------------ 6
Outcome holder() {
  const Basis b(1, 64, BoundaryCondition::Neumann);
  const NoiseBackend nb = make_backend(CovarianceSpec::white(1), b);
  SFOptions o;
  o.t_ref = 0.02;
  o.dt = 1e-4;
  o.points = {{0.7}, {1.3}, {2.1}, {2.6}};
  const auto lags = geometric(2e-4, 2e-3, 6);
  const StructureFunction orc = structure_function_oracle(nb, 1.0, SpectralField(b), o, lags);
  const HolderFit fo = holder_exponent(orc, lags.front(), lags.back());

  ModelSpec m;
  m.lipschitz_only = true;
  m.sigma = Coefficient::constant(1.0);
  SolverConfig cfg;
  cfg.d = 1;
  cfg.M = 64;
  cfg.dt = 1e-4;
  cfg.T = o.t_ref + lags.back();
  cfg.ensemble = 400;
  cfg.seed = 6;
  const auto ens = run_ensemble(m, cfg, nb);
  const StructureFunction mc = structure_function_ensemble(ens, o, lags);
  const HolderFit fm = holder_exponent(mc, lags.front(), lags.back());
  const bool ok = std::abs(fo.slope - 0.75) <= 0.01 && std::abs(fo.exponent - 0.375) <= 0.005 &&
                  std::abs(fm.slope - fo.slope) <= 0.1;
  return {ok, fmt("oracle slope %.4f (exponent %.4f), MC slope %.4f from %zu paths", fo.slope, fo.exponent, fm.slope,
                  mc.paths)};
}

// ------------------------------------------------------------------ 7
Outcome picard() {
  ModelSpec m;
  m.lipschitz_only = true;
  m.sigma = Coefficient::tanh(0.5, 0.5, 1.0);
  m.g = Coefficient::sine(0.0, 0.5, 1.0);
  m.drift.push_back({{2}, Coefficient::tanh(0.0, 0.3, 1.0)});
  SolverConfig cfg;
  cfg.d = 1;
  cfg.M = 32;
  cfg.dt = 1e-3;
  cfg.T = 0.1;
  cfg.q = 4.0;
  cfg.u0.kind = InitialCondition::Kind::Random;
  cfg.u0.value = 1.0;
  const NoiseBackend nb = make_backend(CovarianceSpec::riesz(1, 0.5), cfg.basis(m.bc));
  int worst_it = 0;
  double worst_ratio = 0.0;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SolverConfig c = cfg;
    c.seed = seed;
    const PicardResult r = picard_solve(m, c, nb, 1e-8, 20);
    const double last = r.ratios.empty() ? 1.0 : r.ratios.back();
    ok = ok && r.converged && !r.non_contraction && last <= 0.5;
    worst_it = std::max(worst_it, r.iterations);
    worst_ratio = std::max(worst_ratio, last);
  }
  return {ok, fmt("5 seeds: at most %d iterations to 1e-8, final ratio <= %.3g", worst_it, worst_ratio)};
}

// ------------------------------------------------------------------ 8
Outcome truncated_ch() {
  ModelSpec m;
  m.R = Cubic::double_well();
  SolverConfig cfg;
  cfg.d = 2;
  cfg.M = 16;
  cfg.dt = 1e-3;
  cfg.T = 0.2;
  cfg.q = 3.0;
  cfg.u0.kind = InitialCondition::Kind::Random;
  cfg.u0.value = 1.0;
  cfg.u0.seed = 8;
  const NoiseBackend nb = make_backend(CovarianceSpec::riesz(2, 1.0), cfg.basis(m.bc));
  const Trajectory det = simulate(m, cfg, nb);
  bool mass = true, energy = true;
  for (const auto& s : det.states) mass = mass && s[0] == det.states[0][0];
  const EnergySeries de = energy_diagnostics(det, &m.R);
  double rise = 0.0;
  for (std::size_t i = 1; i < de.ch_energy.size(); ++i) rise = std::max(rise, de.ch_energy[i] - de.ch_energy[i - 1]);
  energy = rise <= 1e-12 * std::abs(de.ch_energy.front());

  ModelSpec ms = m;
  ms.sigma = Coefficient::constant(0.3);
  SolverConfig sc = cfg;
  sc.T = 0.05;
  sc.ensemble = 100;
  sc.seed = 9;
  sc.record_every = 10;
  sc.u0.kind = InitialCondition::Kind::Constant;
  sc.u0.value = 0.9;
  std::vector<double> frac;
  bool finite = true;
  std::size_t exploded = 0;
  for (double level : {2.0, 4.0, 8.0}) {
    sc.truncation_level = level;
    const auto ens = run_ensemble(ms, sc, nb);
    std::size_t stopped = 0;
    for (const auto& tr : ens) {
      stopped += tr.stop_time.has_value() && *tr.stop_time < sc.T;
      if (tr.exploded) {
        ++exploded;
        continue;
      }
      finite = finite && energy_diagnostics(tr, &m.R).finite;
    }
    frac.push_back(static_cast<double>(stopped) / ens.size());
  }
  const bool mono = frac[1] <= frac[0] && frac[2] <= frac[1] && frac[2] == 0.0;
  return {mass && energy && mono && finite,
          fmt("mass %s, max energy rise %.3g, fraction{tau_n < T} = %.2f, %.2f, %.2f for n = 2, 4, 8; "
              "diagnostics %s (%zu exploded)",
              mass ? "exact" : "drifts", rise, frac[0], frac[1], frac[2], finite ? "finite" : "NOT finite", exploded)};
}

// ------------------------------------------------------------------ 9
Outcome d4_smoke() {
  ModelSpec m;
  m.R = Cubic::double_well();
  m.sigma = Coefficient::tanh(0.2, 0.1, 1.0);
  m.ch_epsilon = 0.2;
  SolverConfig cfg;
  cfg.d = 4;
  cfg.M = 8;
  cfg.dt = 1e-3;
  cfg.T = 0.05;
  cfg.q = 5.0;
  cfg.ensemble = 10;
  cfg.seed = 4;
  cfg.record_every = 10;
  cfg.truncation_level = 50.0;
  cfg.u0.kind = InitialCondition::Kind::Random;
  cfg.u0.value = 0.5;
  const CovarianceSpec f = CovarianceSpec::riesz(4, 1.0);
  const ValidationReport v = validate_model(m, f, 4, cfg.q);
  const NoiseBackend nb = make_backend(f, cfg.basis(m.bc));
  const auto ens = run_ensemble(m, cfg, nb);
  std::size_t good = 0;
  for (const auto& tr : ens) {
    const EnergySeries e = energy_diagnostics(tr, &m.R);
    bool fin = !tr.exploded && e.finite && tr.times.back() >= cfg.T - 1e-12;
    for (const auto& s : tr.states)
      for (double c : s) fin = fin && std::isfinite(c);
    good += fin;
  }
  return {v.ok() && good == ens.size(),
          fmt("validator %s, %zu/%zu paths finite to T = %.2f (backend %s)", v.ok() ? "passes" : "FAILS", good,
              ens.size(), cfg.T, to_string(nb.kind()))};
}

// ------------------------------------------------------------------ 10
Outcome malliavin() {
  // linear additive, diagonal Q: Gamma against the closed form
  ModelSpec m;
  m.lipschitz_only = true;
  const double s0 = 0.8;
  m.sigma = Coefficient::constant(s0);
  SolverConfig cfg;
  cfg.d = 1;
  cfg.M = 32;
  cfg.dt = 1e-3;
  cfg.T = 0.04;
  cfg.ensemble = 300;
  cfg.seed = 10;
  const double t0 = 0.04;
  const std::vector<std::vector<double>> pts{{1.0}, {1.8}, {2.4}};
  const CovarianceSpec f = CovarianceSpec::riesz(1, 0.5);
  const NoiseBackend nb = make_backend(f, cfg.basis(m.bc), NoiseKind::DiagonalSpectral);
  const Basis& b = nb.basis();
  const MalliavinRun lin = malliavin_ensemble(m, cfg, nb, t0, pts, {}, 0.01);
  const std::size_t l = pts.size();
  double worst = 0.0;
  bool psd = lin.refused == 0;
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(l, l), sq = Eigen::MatrixXd::Zero(l, l);
  for (const auto& g : lin.gammas) {
    mean += g.gamma;
    sq += g.gamma.cwiseProduct(g.gamma);
    psd = psd && g.min_eigenvalue >= 0.0;
  }
  const double P = static_cast<double>(lin.gammas.size());
  mean /= P;
  for (std::size_t a = 0; a < l; ++a)
    for (std::size_t c = 0; c < l; ++c) {
      double ref = 0.0;
      for (std::size_t k = 0; k < b.mode_count(); ++k) {
        const double mu = b.eigenvalue(k) * b.eigenvalue(k), q = nb.diag_factor()[k] * nb.diag_factor()[k];
        ref += s0 * s0 * q * eval_eigenfunction(b.multi_index(k), pts[a], b.bc()) *
               eval_eigenfunction(b.multi_index(k), pts[c], b.bc()) * ou_mode_variance(1.0, mu, t0);
      }
      const double var = std::max(sq(a, c) / P - mean(a, c) * mean(a, c), 0.0);
      const double se = std::sqrt(var / P);
      // Gamma is deterministic here, so SE vanishes; allow rounding of the sums
      const double tol = std::max(3.0 * se, 1e-9 * std::abs(ref));
      worst = std::max(worst, std::abs(mean(a, c) - ref) / tol);
    }
  bool i3 = true;
  for (const auto& t : lin.terms)
    for (double v : t.I3) i3 = i3 && v == 0.0;

  // multiplicative noise: PSD on every path
  ModelSpec mm;
  mm.R = Cubic::double_well();
  mm.sigma = Coefficient::tanh(0.6, 0.3, 2.0);
  SolverConfig mc = cfg;
  mc.M = 16;
  mc.T = 0.02;
  const NoiseBackend nb2 = make_backend(f, mc.basis(mm.bc));
  const MalliavinRun mult = malliavin_ensemble(mm, mc, nb2, 0.02, pts, {});
  std::size_t psd_paths = 0;
  for (const auto& g : mult.gammas) psd_paths += g.min_eigenvalue >= 0.0;
  psd = psd && mult.refused == 0 && psd_paths == mult.gammas.size();

  // I1 slope in d = 4 against the analytic I(C2 tau^(1/4 + nu))
  ModelSpec m4;
  m4.lipschitz_only = true;
  m4.sigma = Coefficient::constant(1.0);
  SolverConfig c4;
  c4.d = 4;
  c4.M = 8;
  c4.dt = 2e-4;
  c4.T = 0.04;
  c4.seed = 3;
  const CovarianceSpec f4 = CovarianceSpec::riesz(4, 1.0);
  const NoiseBackend nb4 = make_backend(f4, c4.basis(m4.bc), NoiseKind::DiagonalSpectral);
  const Stepper st4(m4, c4, &nb4);
  const Trajectory tr4 = simulate(st4, 0);
  const auto taus = geometric(1e-3, 1e-2, 6);
  const double nu = std::min(f4.B, 1.0) / 32.0;
  const std::vector<double> I1 = i1_sweep(tr4, st4, {std::vector<double>(4, pi / 2)}, c4.T, taus, {1.0});
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    const double x = std::log(taus[i]), y = std::log(I1[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(taus.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double analytic = analytic_i1_slope(f4, 4, taus, nu);
  const bool slope_ok = std::abs(slope - analytic) <= 0.15;
  return {worst <= 1.0 && psd && i3 && slope_ok,
          fmt("Gamma error/tolerance %.3g over %zu paths, PSD %s (%zu+%zu paths), I3 %s, d=4 I1 slope %.3f vs "
              "analytic %.3f",
              worst, lin.gammas.size(), psd ? "on every path" : "VIOLATED", lin.gammas.size(), mult.gammas.size(),
              i3 ? "= 0 exactly" : "nonzero", slope, analytic)};
}

// ------------------------------------------------------------------ 11
Outcome convolution_bound() {
  double worst = 1.0;
  std::string parts;
  bool ok = true;
  for (int d : {1, 2})
    for (ConvKernel k : {ConvKernel::G, ConvKernel::LaplacianG}) {
      ConvolutionProbe p;
      p.d = d;
      p.M = d == 1 ? 16 : 8;
      const auto a = convolution_bound_check(p, k, 2.0, 2.0, 200, 1);
      const auto b = convolution_bound_check(p, k, 2.0, 2.0, 200, 2);
      const double r = std::max(a.C, b.C) / std::min(a.C, b.C);
      ok = ok && std::isfinite(r) && r <= 2.0 && a.C > 0.0;
      worst = std::max(worst, r);
      parts += fmt("; %s/d=%d: %.3g vs %.3g", k == ConvKernel::G ? "G" : "LapG", d, a.C, b.C);
    }
  return {ok, fmt("max C ratio %.3f over two 200-sample ensembles%s", worst, parts.c_str())};
}

}  // namespace


int main() {
  spdlog::set_level(spdlog::level::err);
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "Riesz thresholds", 1.0, riesz_thresholds},
      {2, "CNS thresholds", 1.0, cns_thresholds},
      {3, "Green function", 30.0, green_function},
      {4, "noise covariance", 60.0, noise_covariance},
      {5, "linear oracle", 300.0, linear_oracle},
      {6, "Holder exponent", 300.0, holder},
      {7, "Picard contraction", 120.0, picard},
      {8, "truncated CH d=2", 600.0, truncated_ch},
      {9, "d=4 smoke test", 600.0, d4_smoke},
      {10, "Malliavin matrix", 600.0, malliavin},
      {11, "convolution bound", 120.0, convolution_bound},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s [%d] %s: %s; %.2f s (budget %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.budget_s, in_time ? "" : ", EXCEEDED");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}
