#include "spde/malliavin.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "spde/kernels.hpp"

namespace spde {

namespace {

// Noise increments of the trajectory, either recorded or regenerated from the seed.
std::vector<double> increment_at(const Trajectory& traj, const Stepper& st, std::size_t n, std::vector<double>& scratch) {
  if (n < traj.noise.size()) return traj.noise[n];
  std::vector<double> dF(st.basis().mode_count(), 0.0);
  const CounterNormal rng(st.config().seed, Stream::Noise);
  sample_increment_into(*st.backend(), st.config().dt, rng, traj.path, n, dF.data(), nullptr, scratch);
  return dF;
}

std::size_t steps_until(double t, double dt) { return static_cast<std::size_t>(std::llround(t / dt)); }

void check_trajectory(const Trajectory& traj, std::size_t n0, double t0) {
  if (traj.exploded && traj.last_valid_time < t0) throw PreconditionError("trajectory exploded before t0");
  if (traj.stop_time && *traj.stop_time < t0) throw PreconditionError("trajectory was stopped at tau_n before t0");
  if (traj.step_index.size() <= n0) throw PreconditionError("trajectory does not reach t0 with every step recorded");
  for (std::size_t i = 0; i <= n0; ++i)
    if (traj.step_index[i] != i) throw PreconditionError("Malliavin tangents need states at every step (record_every = 1)");
}

void check_c1_model(const ModelSpec& m) {
  bool ok = m.sigma.differentiable() && m.g.differentiable();
  for (const auto& t : m.drift) ok = ok && t.b.differentiable();
  if (!ok) throw PreconditionError("Malliavin derivative needs C^1 coefficients");
}

// coordinates of a coefficient vector in the Cameron-Martin basis: L^T phi
void h_coords(const NoiseBackend& b, const double* phi, double* out) {
  const std::size_t N = b.basis().mode_count();
  if (b.diagonal()) {
    const auto& dg = b.diag_factor();
    for (std::size_t k = 0; k < N; ++k) out[k] = dg[k] * phi[k];
    return;
  }
  Eigen::Map<const Eigen::VectorXd> p(phi, static_cast<Eigen::Index>(N));
  Eigen::Map<Eigen::VectorXd> o(out, static_cast<Eigen::Index>(b.rank()));
  o.noalias() = b.factor().transpose() * p;
}

double sq(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

std::vector<double> mode_values(const Basis& b, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != b.dim()) throw DomainError("point dimension does not match the basis");
  for (double xi : x)
    if (!(xi >= 0.0 && xi <= std::numbers::pi)) throw DomainError("point outside [0,pi]^d");
  std::vector<double> e(b.mode_count());
  for (std::size_t k = 0; k < e.size(); ++k) e[k] = eval_eigenfunction(b.multi_index(k), x, b.bc());
  return e;
}

double dot(const double* a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) s += a[k] * b[k];
  return s;
}

void check_margin(const std::vector<std::vector<double>>& points, double need) {
  for (const auto& x : points)
    for (double xi : x)
      if (std::min(xi, std::numbers::pi - xi) < need) {
        std::ostringstream os;
        os << "point too close to the boundary: need distance >= " << need;
        throw DomainError(os.str());
      }
}

std::size_t rank_of(const NoiseBackend& b) { return b.diagonal() ? b.basis().mode_count() : b.rank(); }

}  // namespace

TangentState tangent_propagate(const Trajectory& traj, const Stepper& st, double t0, const TangentOptions& opt) {
  check_c1_model(st.model());
  if (!st.backend()) throw PreconditionError("Malliavin tangents need a noise backend");
  const SolverConfig& cfg = st.config();
  const Basis& b = st.basis();
  const std::size_t N = b.mode_count();
  const std::size_t n0 = steps_until(t0, cfg.dt);
  if (std::abs(n0 * cfg.dt - t0) > 1e-9 * std::max(1.0, t0)) throw DomainError("t0 must be a multiple of dt");
  if (n0 == 0) throw DomainError("t0 must be positive");
  check_trajectory(traj, n0, t0);
  const std::size_t thin = std::max<std::size_t>(opt.thin, 1);

  TangentState ts;
  ts.basis = b;
  ts.t0 = t0;
  ts.dt = cfg.dt;
  ts.n0 = n0;
  ts.thin = thin;
  ts.rank = rank_of(*st.backend());
  const std::size_t J = ts.rank;

  std::size_t last = traj.steps_taken;
  if (std::isfinite(opt.r_max)) last = std::min(last, steps_until(std::max(opt.r_max, 0.0), cfg.dt));
  const std::size_t first = opt.r_min > 0.0 ? static_cast<std::size_t>(std::ceil(opt.r_min / cfg.dt - 1e-9)) : 0;
  for (std::size_t m = first; m < std::max(last, n0); m += thin) {
    ts.r_steps.push_back(m);
    const std::size_t stop = std::min(m + thin, std::max(last, n0));
    ts.r_weight.push_back(cfg.dt * static_cast<double>(stop - m));
  }
  const std::size_t rows = ts.r_steps.size();
  ts.data.assign(rows * J * N, 0.0);
  ts.lead.assign(rows * J * N, 0.0);

  // base states on the grid and noise for each step before t0
  std::vector<StepWorkspace> base(n0);
  std::vector<std::vector<double>> dF(n0);
  std::vector<double> scratch;
  const bool sigma_varies = !st.model().sigma.is_constant();
  for (std::size_t n = 0; n < n0; ++n) {
    st.evaluate(traj.states[n].data(), base[n]);
    if (sigma_varies) dF[n] = increment_at(traj, st, n, scratch);
  }

  StepWorkspace tmp;
  std::vector<double> col(N), init(N), delta(N), lead(N), dn(N), nt(N), next(N), zero(N, 0.0);
  for (std::size_t row = 0; row < rows; ++row) {
    const std::size_t m = ts.r_steps[row];
    if (m >= n0) continue;  // adaptedness: D_r u(t0) = 0 for r >= t0
    const double tm = m * cfg.dt;
    for (std::size_t j = 0; j < J; ++j) {
      st.backend()->column(j, col.data());
      StepWorkspace bw = base[m];
      st.noise_term(tm, col.data(), bw, init.data());
      // state at t_{m+1}: u_{m+1} = ... + w (sigma(u_m) dF_m)
      std::fill(dn.begin(), dn.end(), 0.0);
      st.combine(zero.data(), dn.data(), init.data(), delta.data());
      lead = delta;
      for (std::size_t n = m + 1; n < n0; ++n) {
        const double t = n * cfg.dt;
        st.drift_tangent(t, base[n], delta.data(), tmp, dn.data());
        st.noise_tangent(t, base[n], sigma_varies ? dF[n].data() : nullptr, delta.data(), tmp, nt.data());
        st.combine(delta.data(), dn.data(), nt.data(), next.data());
        delta.swap(next);
        std::fill(dn.begin(), dn.end(), 0.0);
        std::fill(nt.begin(), nt.end(), 0.0);
        st.combine(lead.data(), dn.data(), nt.data(), next.data());
        lead.swap(next);
      }
      std::copy(delta.begin(), delta.end(), ts.data.begin() + (row * J + j) * N);
      std::copy(lead.begin(), lead.end(), ts.lead.begin() + (row * J + j) * N);
    }
  }
  return ts;
}

namespace {

Eigen::MatrixXd assemble(const TangentState& ts, const std::vector<std::vector<double>>& e, std::size_t stride) {
  const std::size_t l = e.size();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(l));
  std::vector<double> vals(l);
  for (std::size_t row = 0; row < ts.r_steps.size(); row += stride) {
    if (ts.r_steps[row] >= ts.n0) continue;
    double wgt = 0.0;
    for (std::size_t r = row; r < std::min(row + stride, ts.r_steps.size()); ++r) wgt += ts.r_weight[r];
    for (std::size_t j = 0; j < ts.rank; ++j) {
      const double* D = ts.D(row, j);
      for (std::size_t a = 0; a < l; ++a) vals[a] = dot(D, e[a]);
      for (std::size_t a = 0; a < l; ++a)
        for (std::size_t c = a; c < l; ++c) G(a, c) += wgt * vals[a] * vals[c];
    }
  }
  for (std::size_t a = 0; a < l; ++a)
    for (std::size_t c = 0; c < a; ++c) G(a, c) = G(c, a);
  return G;
}

}  // namespace

MalliavinMatrix malliavin_matrix(const TangentState& ts, const std::vector<std::vector<double>>& points) {
  if (points.empty()) throw DomainError("malliavin_matrix needs at least one point");
  for (std::size_t a = 0; a < points.size(); ++a)
    for (std::size_t c = 0; c < a; ++c)
      if (points[a] == points[c]) spdlog::warn("malliavin_matrix: points {} and {} coincide, Gamma is singular", c, a);
  std::vector<std::vector<double>> e;
  for (const auto& x : points) e.push_back(mode_values(ts.basis, x));

  MalliavinMatrix mm;
  mm.points = points;
  mm.t0 = ts.t0;
  mm.gamma = assemble(ts, e, 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mm.gamma, Eigen::EigenvaluesOnly);
  mm.eigenvalues = es.eigenvalues();
  mm.min_eigenvalue = mm.eigenvalues.minCoeff();
  mm.clipped = mm.min_eigenvalue < 0.0;
  if (ts.r_steps.size() >= 2) {
    const Eigen::MatrixXd G2 = assemble(ts, e, 2);
    const double nrm = mm.gamma.norm();
    mm.thinning_delta = nrm > 0.0 ? (G2 - mm.gamma).norm() / nrm : 0.0;
  }
  return mm;
}

DecompositionTerms decomposition_terms(const Trajectory& traj, const Stepper& st, const TangentState* tangent,
                                       const std::vector<std::vector<double>>& points, double t0, double tau,
                                       const std::vector<double>& v, double C2) {
  if (!st.backend()) throw PreconditionError("decomposition needs a noise backend");
  const std::size_t l = points.size();
  if (l == 0 || v.size() != l) throw DomainError("decomposition needs one weight per point");
  if (!(tau > 0.0 && tau <= 0.5 * t0 * (1.0 + 1e-12))) throw DomainError("decomposition needs 0 < tau <= t0/2");
  const SolverConfig& cfg = st.config();
  const Basis& b = st.basis();
  const std::size_t N = b.mode_count();
  const std::size_t n0 = steps_until(t0, cfg.dt);
  const std::size_t nt = std::max<std::size_t>(steps_until(tau, cfg.dt), 1);
  check_trajectory(traj, n0, t0);

  DecompositionTerms out;
  out.tau = tau;
  out.margin_needed = 2.0 * C2 * std::pow(tau, 0.25);
  check_margin(points, out.margin_needed);
  out.I2 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(l));
  out.I3.assign(l, 0.0);
  out.I4.assign(l, std::numeric_limits<double>::quiet_NaN());

  const NoiseBackend& nb = *st.backend();
  const Coefficient& sigma = st.model().sigma;
  const std::size_t R = rank_of(nb);
  const auto& E = st.propagator();
  const auto& w = st.noise_weight();
  const Grid& grid = st.grid();
  const std::size_t G = grid.size();

  std::vector<std::vector<double>> e(l), g(l), hg(l, std::vector<double>(R));
  for (std::size_t i = 0; i < l; ++i) {
    e[i] = mode_values(b, points[i]);
    g[i].resize(N);
    for (std::size_t k = 0; k < N; ++k) g[i][k] = w[k] * e[i][k];
  }
  std::vector<std::vector<double>> coords;
  if (sigma.depends_on_tx()) {
    coords.resize(G);
    for (std::size_t i = 0; i < G; ++i) coords[i] = grid.coordinates(i);
  }
  std::vector<double> ug(G), kg(G), phi(N), hphi(R), sig(l);
  const std::size_t first = n0 >= nt ? n0 - nt : 0;
  for (std::size_t m = n0; m-- > first;) {
    const double t = m * cfg.dt;
    const auto& u = traj.states[m];
    for (std::size_t i = 0; i < l; ++i) {
      sig[i] = sigma.value(t, points[i].data(), dot(u.data(), e[i]));
      h_coords(nb, g[i].data(), hg[i].data());
    }
    for (std::size_t i = 0; i < l; ++i) {
      out.I1 += v[i] * v[i] * cfg.dt * sig[i] * sig[i] * sq(hg[i]);
      for (std::size_t j = i + 1; j < l; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < R; ++r) s += hg[i][r] * hg[j][r];
        out.I2(i, j) += cfg.dt * sig[i] * sig[j] * s;
      }
    }
    if (!sigma.is_constant()) {
      st.transform().inverse(u.data(), ug.data());
      for (std::size_t i = 0; i < l; ++i) {
        st.transform().inverse(g[i].data(), kg.data());
        for (std::size_t p = 0; p < G; ++p)
          kg[p] *= sigma.value(t, coords.empty() ? nullptr : coords[p].data(), ug[p]) - sig[i];
        st.transform().forward(kg.data(), phi.data());
        h_coords(nb, phi.data(), hphi.data());
        out.I3[i] += cfg.dt * sq(hphi);
      }
    }
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t k = 0; k < N; ++k) g[i][k] *= E[k];
  }
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < i; ++j) out.I2(i, j) = out.I2(j, i);

  double lb = out.I1 / 4.0;
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < l; ++j)
      if (i != j) lb += 0.25 * v[i] * v[j] * out.I2(i, j);
  for (std::size_t i = 0; i < l; ++i) lb -= 0.5 * static_cast<double>(l) * v[i] * v[i] * out.I3[i];

  if (tangent) {
    if (tangent->n0 != n0) throw DomainError("tangent was propagated to a different t0");
    std::fill(out.I4.begin(), out.I4.end(), 0.0);
    double gvv = 0.0;
    for (std::size_t row = 0; row < tangent->r_steps.size(); ++row) {
      const std::size_t m = tangent->r_steps[row];
      if (m < first || m >= n0) continue;
      const double wgt = tangent->r_weight[row];
      for (std::size_t j = 0; j < tangent->rank; ++j) {
        const double* D = tangent->D(row, j);
        const double* Ld = tangent->L(row, j);
        double s = 0.0;
        for (std::size_t i = 0; i < l; ++i) {
          const double di = dot(D, e[i]);
          const double ui = di - dot(Ld, e[i]);
          out.I4[i] += wgt * ui * ui;
          s += v[i] * di;
        }
        gvv += wgt * s * s;
      }
    }
    out.gamma_vv = gvv;
    for (std::size_t i = 0; i < l; ++i) lb -= static_cast<double>(l) * v[i] * v[i] * out.I4[i];
  }
  out.lower_bound = lb;
  return out;
}

std::vector<double> i1_sweep(const Trajectory& traj, const Stepper& st, const std::vector<std::vector<double>>& points,
                             double t0, const std::vector<double>& taus, const std::vector<double>& v, double C2) {
  if (taus.empty()) return {};
  if (!st.backend()) throw PreconditionError("I1 needs a noise backend");
  const std::size_t l = points.size();
  if (l == 0 || v.size() != l) throw DomainError("I1 needs one weight per point");
  const double tmax = *std::max_element(taus.begin(), taus.end());
  if (!(tmax <= 0.5 * t0 * (1.0 + 1e-12)) || *std::min_element(taus.begin(), taus.end()) <= 0.0)
    throw DomainError("I1 needs 0 < tau <= t0/2");
  check_margin(points, 2.0 * C2 * std::pow(tmax, 0.25));
  const SolverConfig& cfg = st.config();
  const Basis& b = st.basis();
  const std::size_t N = b.mode_count();
  const std::size_t n0 = steps_until(t0, cfg.dt);
  const std::size_t nmax = std::max<std::size_t>(steps_until(tmax, cfg.dt), 1);
  check_trajectory(traj, n0, t0);
  const NoiseBackend& nb = *st.backend();
  const std::size_t R = rank_of(nb);
  const auto& E = st.propagator();
  const auto& w = st.noise_weight();

  std::vector<std::vector<double>> e(l), g(l);
  for (std::size_t i = 0; i < l; ++i) {
    e[i] = mode_values(b, points[i]);
    g[i].resize(N);
    for (std::size_t k = 0; k < N; ++k) g[i][k] = w[k] * e[i][k];
  }
  std::vector<double> hg(R), prefix(1, 0.0);  // prefix[n] = contribution of the last n steps
  const std::size_t first = n0 >= nmax ? n0 - nmax : 0;
  for (std::size_t m = n0; m-- > first;) {
    const double t = m * cfg.dt;
    double c = 0.0;
    for (std::size_t i = 0; i < l; ++i) {
      const double s = st.model().sigma.value(t, points[i].data(), dot(traj.states[m].data(), e[i]));
      h_coords(nb, g[i].data(), hg.data());
      c += v[i] * v[i] * cfg.dt * s * s * sq(hg);
      for (std::size_t k = 0; k < N; ++k) g[i][k] *= E[k];
    }
    prefix.push_back(prefix.back() + c);
  }
  std::vector<double> out;
  for (double tau : taus) out.push_back(prefix[std::min(std::max<std::size_t>(steps_until(tau, cfg.dt), 1), prefix.size() - 1)]);
  return out;
}

double analytic_i1_slope(const CovarianceSpec& f, int d, const std::vector<double>& taus, double nu, double C2) {
  if (taus.size() < 2) throw DomainError("analytic slope needs at least two taus");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (double t : taus) {
    const RadialIntegral r = I_tau(f, d, C2 * std::pow(t, 0.25 + nu));
    if (r.divergent || !(r.value > 0.0)) throw DomainError("I(tau) is not finite and positive");
    const double x = std::log(t), y = std::log(r.value);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(taus.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

bool density_limit_condition(const CovarianceSpec& f, int d, double nu, std::string* note) {
  auto say = [&](const std::string& s) {
    if (note) *note = s;
  };
  if (!(nu > 0.0 && nu < 0.25)) {
    say("nu must lie in (0, 1/4)");
    return false;
  }
  switch (f.kind) {
    case CovarianceSpec::Kind::WhiteNoise:
      say("white noise: I(tau) diverges, the theorem does not apply");
      return false;
    case CovarianceSpec::Kind::Constant:
      say("constant covariance: I(tau) ~ tau^4 log, tau / I(tau^(1/4+nu)) diverges");
      return false;
    case CovarianceSpec::Kind::RieszPower: {
      const double B = f.B;
      if (!(B > 0.0 && B < 4.0)) {
        say("Riesz exponent outside (0, 4)");
        return false;
      }
      const double c1 = B / (4.0 * (4.0 - B)), c2 = 1.0 / (4.0 * (4.0 - B));
      std::ostringstream os;
      os << "power law: need nu < " << c1 << " and nu < " << c2;
      say(os.str());
      return nu < c1 && nu < c2;
    }
    case CovarianceSpec::Kind::Tabulated: {
      // ratio at shrinking tau must decrease towards 0
      double prev = std::numeric_limits<double>::infinity();
      bool ok = true;
      double ratio = 0.0;
      for (double t : {1e-2, 1e-4, 1e-6, 1e-8, 1e-10}) {
        const RadialIntegral a = I_tau(f, d, std::pow(t, 0.25 + nu));
        const RadialIntegral c = I_tau(f, d, std::pow(t, 0.25 - nu));
        if (a.divergent || c.divergent || !(a.value > 0.0)) {
          ok = false;
          break;
        }
        ratio = (t + std::sqrt(t) * c.value) / a.value;
        if (!(ratio < prev)) ok = false;
        prev = ratio;
      }
      ok = ok && ratio < 1e-2;
      std::ostringstream os;
      os << "numerical: ratio at tau = 1e-10 is " << ratio;
      say(os.str());
      return ok;
    }
  }
  return false;
}

DensityReport density_criterion(const std::vector<MalliavinMatrix>& gammas, double sigma_lower,
                                const CovarianceSpec& f, int d, double nu) {
  DensityReport r;
  r.analytic_holds = density_limit_condition(f, d, nu, &r.analytic_note);
  if (gammas.empty()) {
    r.verdict = "inconclusive";
    return r;
  }
  r.min_eigenvalue = std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  for (const auto& g : gammas) {
    r.min_eigenvalue = std::min(r.min_eigenvalue, g.min_eigenvalue);
    double scale = g.eigenvalues.size() ? std::abs(g.eigenvalues.maxCoeff()) : 0.0;
    if (g.min_eigenvalue > 1e-12 * scale && g.min_eigenvalue > 0.0) ++pos;
  }
  r.fraction_positive = static_cast<double>(pos) / static_cast<double>(gammas.size());
  if (sigma_lower <= 0.0 && r.fraction_positive == 0.0)
    r.verdict = "degenerate";
  else if (r.analytic_holds && sigma_lower > 0.0 && r.fraction_positive == 1.0)
    r.verdict = "nondegenerate";
  else if (r.fraction_positive == 0.0)
    r.verdict = "degenerate";
  else
    r.verdict = "inconclusive";
  return r;
}

MalliavinRun malliavin_ensemble(const ModelSpec& model, const SolverConfig& cfg, const NoiseBackend& backend,
                                double t0, const std::vector<std::vector<double>>& points, const TangentOptions& topt,
                                double tau, bool force, Exec exec) {
  if (!force) check_simulation_preconditions(model, cfg, backend.covariance_spec());
  check_c1_model(model);
  SolverConfig c = cfg;
  c.record_every = 1;
  if (c.T < t0) c.T = t0;
  const Stepper st(model, c, &backend);
  const long long P = static_cast<long long>(c.ensemble);
  std::vector<std::optional<MalliavinMatrix>> gam(c.ensemble);
  std::vector<std::optional<DecompositionTerms>> terms(c.ensemble);
  const std::vector<double> v(points.size(), 1.0);
  auto one = [&](long long p) {
    const Trajectory tr = simulate(st, static_cast<std::uint64_t>(p));
    try {
      const TangentState ts = tangent_propagate(tr, st, t0, topt);
      gam[p] = malliavin_matrix(ts, points);
      if (tau > 0.0) terms[p] = decomposition_terms(tr, st, &ts, points, t0, tau, v);
    } catch (const PreconditionError&) {
    }
  };
  if (exec == Exec::Parallel && kernels::can_fork()) {
#pragma omp parallel for schedule(dynamic, 1)
    for (long long p = 0; p < P; ++p) one(p);
  } else {
    for (long long p = 0; p < P; ++p) one(p);
  }
  MalliavinRun run;
  for (std::size_t p = 0; p < c.ensemble; ++p) {
    if (!gam[p]) {
      ++run.refused;
      continue;
    }
    run.gammas.push_back(std::move(*gam[p]));
    if (terms[p]) run.terms.push_back(std::move(*terms[p]));
  }
  if (run.refused) spdlog::warn("malliavin: {} of {} paths stopped or exploded before t0", run.refused, c.ensemble);
  return run;
}

}  // namespace spde
