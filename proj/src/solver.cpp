#include "spde/solver.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "spde/greens.hpp"
#include "spde/quadrature.hpp"
#include "spde/rng.hpp"

namespace spde {

const char* to_string(Scheme s) { return s == Scheme::ExponentialEuler ? "exponential_euler" : "semi_implicit"; }

Scheme parse_scheme(const std::string& s) {
  if (s == "exponential_euler") return Scheme::ExponentialEuler;
  if (s == "semi_implicit") return Scheme::SemiImplicit;
  throw std::invalid_argument("unknown scheme '" + s + "'");
}

std::size_t SolverConfig::steps() const {
  if (!(dt > 0.0) || !(T >= 0.0)) throw DomainError("solver needs dt > 0 and T >= 0");
  return static_cast<std::size_t>(std::llround(T / dt));
}

double truncation_weight(double n, double r) {
  if (std::isinf(n)) return 1.0;
  const double s = r - n;
  if (s <= 0.0) return 1.0;
  if (s >= 1.0) return 0.0;
  return 1.0 - 3.0 * s * s + 2.0 * s * s * s;
}

double phi1(double z) {
  if (z == 0.0) return 1.0;
  if (std::abs(z) < 1e-5) return 1.0 + z / 2.0 + z * z / 6.0;
  return std::expm1(z) / z;
}

double phi2(double z) {
  if (std::abs(z) < 0.1) {
    // sum z^n / (n+2)!
    double term = 0.5, s = 0.0;
    for (int n = 0; n <= 12; ++n) {
      s += term;
      term *= z / (n + 3);
    }
    return s;
  }
  return (std::expm1(z) - z) / (z * z);
}

double ou_mode_variance(double q, double mu, double t) {
  if (mu == 0.0) return q * t;
  return q * (-std::expm1(-2.0 * mu * t)) / (2.0 * mu);
}

namespace {

double grid_norm(const std::vector<double>& g, double q, double vol) {
  if (std::isinf(q)) {
    double m = 0.0;
    for (double v : g) {
      if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
      m = std::max(m, std::abs(v));
    }
    return m;
  }
  double s = 0.0;
  if (q == 2.0)
    for (double v : g) s += v * v;
  else
    for (double v : g) s += std::pow(std::abs(v), q);
  return std::pow(s * vol, 1.0 / q);
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

Stepper::Stepper(const ModelSpec& model, const SolverConfig& cfg, const NoiseBackend* backend)
    : model_(model),
      cfg_(cfg),
      backend_(backend),
      basis_(cfg.d, cfg.M, model.bc),
      tr_(basis_, basis_.padded_points()) {
  if (backend_ && backend_->basis() != basis_) throw DomainError("noise backend basis does not match the solver");
  const std::size_t N = basis_.mode_count();
  const double dt = cfg.dt;
  if (!(dt > 0.0)) throw DomainError("solver needs dt > 0");
  E_.resize(N);
  phi_dt_.resize(N);
  w_.resize(N);
  lap_.resize(N);
  semi_.resize(N);
  for (std::size_t k = 0; k < N; ++k) {
    const double lam = basis_.eigenvalue(k);
    const double mu = lam * lam;
    E_[k] = std::exp(-mu * dt);
    phi_dt_[k] = dt * phi1(-mu * dt);
    // matches the exact one-step variance (1 - e^{-2 mu dt}) / (2 mu)
    w_[k] = std::sqrt(phi1(-2.0 * mu * dt));
    lap_[k] = -lam;
    semi_[k] = 1.0 / (1.0 + mu * dt);
  }
  for (const auto& t : model.drift) drift_symbol_.push_back(operator_symbol(basis_, Operator::derivative(t.k)));

  needs_grid_ = !model.linear() || !model.sigma.is_constant() || cfg.truncation_level.has_value() || cfg.q != 2.0;
  bool tx = model.sigma.depends_on_tx() || model.g.depends_on_tx();
  for (const auto& t : model.drift) tx = tx || t.b.depends_on_tx();
  if (tx) {
    const Grid& g = tr_.grid();
    coords_.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) coords_[i] = g.coordinates(i);
  }
}

double Stepper::evaluate(const double* u, StepWorkspace& ws) const {
  const std::size_t N = basis_.mode_count();
  if (!needs_grid_) {
    double s = 0.0;
    for (std::size_t k = 0; k < N; ++k) s += u[k] * u[k];
    return std::sqrt(s);
  }
  ws.ug.resize(tr_.grid().size());
  tr_.inverse(u, ws.ug.data());
  return grid_norm(ws.ug, cfg_.q, tr_.grid().cell_volume());
}

void Stepper::drift(double t, double K, StepWorkspace& ws, double* N) const {
  const std::size_t n = basis_.mode_count();
  const std::size_t G = tr_.grid().size();
  std::fill(N, N + n, 0.0);
  if (model_.linear()) return;
  ws.g1.resize(G);
  ws.c1.resize(n);
  auto x_at = [&](std::size_t i) -> const double* { return coords_.empty() ? nullptr : coords_[i].data(); };
  if (!model_.R.is_zero() && K != 0.0) {
    for (std::size_t i = 0; i < G; ++i) ws.g1[i] = model_.R.value(ws.ug[i]);
    tr_.forward(ws.g1.data(), ws.c1.data());
    for (std::size_t k = 0; k < n; ++k) N[k] += K * (lap_[k] * ws.c1[k]);
  }
  if (!model_.g.is_zero() && K != 0.0) {
    for (std::size_t i = 0; i < G; ++i) ws.g1[i] = model_.g.value(t, x_at(i), ws.ug[i]);
    tr_.forward(ws.g1.data(), ws.c1.data());
    for (std::size_t k = 0; k < n; ++k) N[k] += K * ws.c1[k];
  }
  for (std::size_t j = 0; j < model_.drift.size(); ++j) {
    const auto& term = model_.drift[j];
    if (term.b.is_zero()) continue;
    for (std::size_t i = 0; i < G; ++i) ws.g1[i] = term.b.value(t, x_at(i), ws.ug[i]);
    tr_.forward(ws.g1.data(), ws.c1.data());
    for (std::size_t k = 0; k < n; ++k) N[k] += drift_symbol_[j][k] * ws.c1[k];
  }
}

void Stepper::noise_term(double t, const double* dF, StepWorkspace& ws, double* out) const {
  const std::size_t n = basis_.mode_count();
  const Coefficient& s = model_.sigma;
  if (s.is_zero() || dF == nullptr) {
    std::fill(out, out + n, 0.0);
    return;
  }
  if (s.is_constant()) {
    for (std::size_t k = 0; k < n; ++k) out[k] = s.a() * dF[k];
    return;
  }
  const std::size_t G = tr_.grid().size();
  ws.noise.resize(G);
  tr_.inverse(dF, ws.noise.data());
  for (std::size_t i = 0; i < G; ++i)
    ws.noise[i] *= s.value(t, coords_.empty() ? nullptr : coords_[i].data(), ws.ug[i]);
  tr_.forward(ws.noise.data(), out);
}

void Stepper::combine(const double* u, const double* N, const double* noise, double* out) const {
  const std::size_t n = basis_.mode_count();
  if (cfg_.scheme == Scheme::ExponentialEuler) {
    for (std::size_t k = 0; k < n; ++k) out[k] = E_[k] * u[k] + phi_dt_[k] * N[k] + w_[k] * noise[k];
  } else {
    for (std::size_t k = 0; k < n; ++k) out[k] = semi_[k] * (u[k] + cfg_.dt * N[k] + noise[k]);
  }
}

double Stepper::step(const double* u, double t, const double* dF, StepWorkspace& ws, double* out) const {
  const std::size_t n = basis_.mode_count();
  const double norm = evaluate(u, ws);
  const double K = cfg_.truncation_level ? truncation_weight(*cfg_.truncation_level, norm) : 1.0;
  ws.c2.resize(n);
  std::vector<double> noise(n);
  drift(t, K, ws, ws.c2.data());
  noise_term(t, dF, ws, noise.data());
  combine(u, ws.c2.data(), noise.data(), out);
  return norm;
}

void Stepper::drift_tangent(double t, const StepWorkspace& base, const double* delta, StepWorkspace& tmp,
                            double* out) const {
  const std::size_t n = basis_.mode_count();
  std::fill(out, out + n, 0.0);
  if (model_.linear()) return;
  const std::size_t G = tr_.grid().size();
  tmp.g1.resize(G);
  tmp.g2.resize(G);
  tmp.c1.resize(n);
  tr_.inverse(delta, tmp.g2.data());
  auto x_at = [&](std::size_t i) -> const double* { return coords_.empty() ? nullptr : coords_[i].data(); };
  if (!model_.R.is_zero()) {
    for (std::size_t i = 0; i < G; ++i) tmp.g1[i] = model_.R.deriv(base.ug[i]) * tmp.g2[i];
    tr_.forward(tmp.g1.data(), tmp.c1.data());
    for (std::size_t k = 0; k < n; ++k) out[k] += lap_[k] * tmp.c1[k];
  }
  if (!model_.g.is_zero()) {
    for (std::size_t i = 0; i < G; ++i) tmp.g1[i] = model_.g.du(t, x_at(i), base.ug[i]) * tmp.g2[i];
    tr_.forward(tmp.g1.data(), tmp.c1.data());
    for (std::size_t k = 0; k < n; ++k) out[k] += tmp.c1[k];
  }
  for (std::size_t j = 0; j < model_.drift.size(); ++j) {
    const auto& term = model_.drift[j];
    if (term.b.is_zero()) continue;
    for (std::size_t i = 0; i < G; ++i) tmp.g1[i] = term.b.du(t, x_at(i), base.ug[i]) * tmp.g2[i];
    tr_.forward(tmp.g1.data(), tmp.c1.data());
    for (std::size_t k = 0; k < n; ++k) out[k] += drift_symbol_[j][k] * tmp.c1[k];
  }
}

void Stepper::noise_tangent(double t, const StepWorkspace& base, const double* dF, const double* delta,
                            StepWorkspace& tmp, double* out) const {
  const std::size_t n = basis_.mode_count();
  if (model_.sigma.is_constant() || dF == nullptr) {
    std::fill(out, out + n, 0.0);
    return;
  }
  const std::size_t G = tr_.grid().size();
  tmp.g1.resize(G);
  tmp.g2.resize(G);
  tr_.inverse(delta, tmp.g2.data());
  tr_.inverse(dF, tmp.g1.data());
  for (std::size_t i = 0; i < G; ++i)
    tmp.g1[i] *= model_.sigma.du(t, coords_.empty() ? nullptr : coords_[i].data(), base.ug[i]) * tmp.g2[i];
  tr_.forward(tmp.g1.data(), out);
}

void check_simulation_preconditions(const ModelSpec& model, const SolverConfig& cfg, const CovarianceSpec& f) {
  if (f.d != cfg.d) throw PreconditionError("covariance dimension does not match the solver");
  ConditionReport c;
  if (!model.lipschitz_only && (cfg.d == 4 || cfg.d == 5))
    c = covch_admissible(f, cfg.d, model.ch_epsilon);
  else
    c = cns_admissible(f, KernelExponents::cahn_hilliard(cfg.d), cfg.d);
  if (c.verdict != Verdict::Admissible)
    throw PreconditionError("covariance condition " + c.id + " is " + to_string(c.verdict) +
                            " for " + f.describe() + " (use --force to run anyway)");
}

SpectralField step(const SpectralField& state, double t, double dt, const ModelSpec& model, const NoiseIncrement& noise,
                   const SolverConfig& cfg, const NoiseBackend* backend) {
  SolverConfig c = cfg;
  c.dt = dt;
  if (!state.finite()) throw BlowUpError("step: non-finite state", t);
  const Stepper s(model, c, backend);
  if (state.basis != s.basis()) throw DomainError("step: state basis does not match the configuration");
  if (!noise.coeffs.empty() && noise.coeffs.size() != s.basis().mode_count())
    throw DomainError("step: noise increment does not match the basis");
  StepWorkspace ws;
  SpectralField out(s.basis());
  s.step(state.coeffs.data(), t, noise.coeffs.empty() ? nullptr : noise.coeffs.data(), ws, out.coeffs.data());
  if (!out.finite()) throw BlowUpError("step: non-finite state", t);
  return out;
}

Trajectory simulate(const Stepper& st, std::uint64_t path) {
  const SolverConfig& cfg = st.config();
  const Basis& b = st.basis();
  const std::size_t n = b.mode_count();
  const std::size_t steps = cfg.steps();
  const double dt = cfg.dt;
  const bool sample = st.backend() && (!st.model().sigma.is_zero() || cfg.record_noise);
  const CounterNormal rng(cfg.seed, Stream::Noise);

  Trajectory tr;
  tr.basis = b;
  tr.path = path;
  tr.dt = dt;
  std::vector<double> u = cfg.u0.build(b).coeffs, next(n), N(n), noise(n), dF(n, 0.0), Z(n, 0.0), scratch;
  StepWorkspace ws;
  const int every = std::max(cfg.record_every, 1);

  for (std::size_t m = 0;; ++m) {
    const double t = m * dt;
    const double norm = st.evaluate(u.data(), ws);
    if (!std::isfinite(norm) || norm > kExplosionNorm || !all_finite(u)) {
      tr.exploded = true;
      break;
    }
    tr.last_valid_time = t;
    tr.steps_taken = m;
    bool stopping = false;
    if (cfg.truncation_level && !tr.stop_time && norm >= *cfg.truncation_level) {
      tr.stop_time = t;
      stopping = cfg.stop_at_tau;
    }
    if (m % every == 0 || m == steps || stopping) {
      tr.times.push_back(t);
      tr.step_index.push_back(m);
      tr.states.push_back(u);
      tr.norms.push_back(norm);
      if (cfg.track_convolution) tr.convolution.push_back(Z);
    }
    if (stopping || m == steps) break;

    const double* dFp = nullptr;
    if (sample) {
      sample_increment_into(*st.backend(), dt, rng, path, m, dF.data(), nullptr, scratch);
      dFp = dF.data();
      if (cfg.record_noise) tr.noise.push_back(dF);
    }
    const double K = cfg.truncation_level ? truncation_weight(*cfg.truncation_level, norm) : 1.0;
    st.drift(t, K, ws, N.data());
    st.noise_term(t, dFp, ws, noise.data());
    st.combine(u.data(), N.data(), noise.data(), next.data());
    if (cfg.track_convolution) {
      std::fill(N.begin(), N.end(), 0.0);
      st.combine(Z.data(), N.data(), noise.data(), Z.data());
    }
    u.swap(next);
  }
  return tr;
}

Trajectory simulate(const ModelSpec& model, const SolverConfig& cfg, const NoiseBackend& backend, std::uint64_t path,
                    bool force) {
  if (!force) check_simulation_preconditions(model, cfg, backend.covariance_spec());
  const Stepper st(model, cfg, &backend);
  return simulate(st, path);
}

std::vector<Trajectory> run_ensemble(const ModelSpec& model, const SolverConfig& cfg, const NoiseBackend& backend,
                                     bool force, Exec exec) {
  if (!force) check_simulation_preconditions(model, cfg, backend.covariance_spec());
  const Stepper st(model, cfg, &backend);
  const long long P = static_cast<long long>(cfg.ensemble);
  std::vector<Trajectory> out(cfg.ensemble);
  if (exec == Exec::Parallel && kernels::can_fork()) {
#pragma omp parallel for schedule(dynamic, 1)
    for (long long p = 0; p < P; ++p) out[p] = simulate(st, static_cast<std::uint64_t>(p));
  } else {
    for (long long p = 0; p < P; ++p) out[p] = simulate(st, static_cast<std::uint64_t>(p));
  }
  std::size_t exploded = 0;
  for (const auto& t : out) exploded += t.exploded;
  if (exploded) spdlog::warn("ensemble: {} of {} paths exploded", exploded, out.size());
  return out;
}

PicardResult picard_solve(const ModelSpec& model, const SolverConfig& cfg, const NoiseBackend& backend, double tol,
                          int max_iter, std::uint64_t path) {
  if (!model.lipschitz_only) throw PreconditionError("picard_solve needs a model flagged lipschitz_only");
  if (!model.R.is_zero()) throw PreconditionError("picard_solve: cubic drift is not Lipschitz");
  const Stepper st(model, cfg, &backend);
  const Basis& b = st.basis();
  const std::size_t n = b.mode_count();
  const std::size_t steps = cfg.steps();
  const double dt = cfg.dt;

  // one noise realization, reused by every iteration
  std::vector<std::vector<double>> dF(steps, std::vector<double>(n, 0.0));
  if (!model.sigma.is_zero()) {
    const CounterNormal rng(cfg.seed, Stream::Noise);
    std::vector<double> scratch;
    for (std::size_t m = 0; m < steps; ++m) sample_increment_into(backend, dt, rng, path, m, dF[m].data(), nullptr, scratch);
  }
  const std::vector<double> u0 = cfg.u0.build(b).coeffs;
  std::vector<std::vector<double>> old(steps + 1, u0), cur(steps + 1, u0);
  StepWorkspace ws;
  std::vector<double> N(n), noise(n), diff(n);
  const Grid& grid = st.grid();
  const SpectralTransform& tr = st.transform();
  std::vector<double> dg(grid.size());

  PicardResult res;
  int increases = 0;
  for (int it = 1; it <= max_iter; ++it) {
    cur[0] = u0;
    for (std::size_t m = 0; m < steps; ++m) {
      const double t = m * dt;
      st.evaluate(old[m].data(), ws);
      st.drift(t, 1.0, ws, N.data());
      st.noise_term(t, dF[m].data(), ws, noise.data());
      st.combine(cur[m].data(), N.data(), noise.data(), cur[m + 1].data());
    }
    double delta = 0.0;
    for (std::size_t m = 0; m <= steps; ++m) {
      for (std::size_t k = 0; k < n; ++k) diff[k] = cur[m][k] - old[m][k];
      double v;
      if (cfg.q == 2.0) {
        v = 0.0;
        for (double c : diff) v += c * c;
        v = std::sqrt(v);
      } else {
        tr.inverse(diff.data(), dg.data());
        v = grid_norm(dg, cfg.q, grid.cell_volume());
      }
      delta = std::max(delta, v);
    }
    if (!std::isfinite(delta)) throw BlowUpError("picard_solve: iterates are not finite", 0.0);
    if (!res.deltas.empty()) {
      res.ratios.push_back(res.deltas.back() > 0.0 ? delta / res.deltas.back() : 0.0);
      increases = delta > res.deltas.back() ? increases + 1 : 0;
    }
    res.deltas.push_back(delta);
    res.iterations = it;
    old.swap(cur);
    if (delta < tol) {
      res.converged = true;
      break;
    }
    if (increases >= 5) {
      res.non_contraction = true;
      spdlog::warn("picard_solve: distance increased for 5 consecutive iterations");
      break;
    }
  }
  res.states = std::move(old);
  return res;
}

SpectralField deterministic_convolution(const std::vector<double>& times, const std::vector<GridField>& v,
                                        const Basis& basis, ConvKernel kernel, double t0, double t,
                                        const MultiIndex& a) {
  if (times.size() != v.size() || times.empty()) throw DomainError("deterministic_convolution: times and values differ");
  if (!(t0 <= t)) throw DomainError("deterministic_convolution: t0 > t");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw DomainError("deterministic_convolution: times must increase");
  const double eps = 1e-12 * std::max(1.0, std::abs(times.back()));
  if (t0 < times.front() - eps || t > times.back() + eps)
    throw DomainError("deterministic_convolution: [t0, t] outside the sampled times");
  const std::size_t n = basis.mode_count();
  std::vector<double> sym(n, 1.0);
  if (kernel == ConvKernel::LaplacianG) sym = operator_symbol(basis, Operator::laplacian());
  if (kernel == ConvKernel::DerivativeG) sym = operator_symbol(basis, Operator::derivative(a));

  std::vector<std::vector<double>> c(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) c[i] = transform(v[i], basis).coeffs;
  auto at = [&](double s) {
    std::size_t i = std::upper_bound(times.begin(), times.end(), s) - times.begin();
    if (i == 0) return c.front();
    if (i >= times.size()) return c.back();
    const double th = (s - times[i - 1]) / (times[i] - times[i - 1]);
    std::vector<double> r(n);
    for (std::size_t k = 0; k < n; ++k) r[k] = (1.0 - th) * c[i - 1][k] + th * c[i][k];
    return r;
  };
  std::vector<double> knots{t0};
  for (double s : times)
    if (s > t0 && s < t) knots.push_back(s);
  knots.push_back(t);

  SpectralField out(basis);
  if (t == t0) return out;
  std::vector<double> va = at(knots[0]);
  for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
    const double lo = knots[j], hi = knots[j + 1], h = hi - lo;
    const std::vector<double> vb = at(hi);
    if (h > 0.0) {
      for (std::size_t k = 0; k < n; ++k) {
        const double lam = basis.eigenvalue(k), mu = lam * lam;
        const double z = -mu * h;
        const double p1 = phi1(z), p2 = phi2(z);
        out[k] += std::exp(-mu * (t - hi)) * h * (va[k] * (p1 - p2) + vb[k] * p2);
      }
    }
    va = vb;
  }
  for (std::size_t k = 0; k < n; ++k) out[k] *= sym[k];
  return out;
}

ConvolutionBoundResult convolution_bound_check(const ConvolutionProbe& probe, ConvKernel kernel, double q,
                                               double rho, std::size_t n_samples, std::uint64_t seed,
                                               std::optional<double> fitted_C, const MultiIndex& a) {
  if (!(q >= 1.0) || !(rho >= 1.0)) throw DomainError("convolution_bound_check: q, rho must be >= 1");
  if (rho > q) throw DomainError("convolution_bound_check: rho > q makes 1/r > 1");
  const double inv_r = (std::isinf(q) ? 0.0 : 1.0 / q) - (std::isinf(rho) ? 0.0 : 1.0 / rho) + 1.0;
  const int d = probe.d;
  const KernelExponents ex = KernelExponents::cahn_hilliard(d);
  int order = 0;
  if (kernel == ConvKernel::LaplacianG) order = 2;
  if (kernel == ConvKernel::DerivativeG)
    for (int v : a) order += v;
  ConvolutionBoundResult res;
  res.exponent = -(ex.alpha + order * ex.delta) + ex.gamma * d * inv_r / ex.beta;
  if (!(res.exponent > -1.0)) throw DomainError("convolution_bound_check: time integrand not integrable");

  const Basis basis(d, probe.M, probe.bc);
  const std::size_t n = basis.mode_count();
  const SpectralTransform coarse(basis, probe.M), fine(basis, basis.padded_points());
  const double vol = fine.grid().cell_volume();
  const int nt = std::max(probe.time_nodes, 2);
  std::vector<double> times(nt);
  for (int i = 0; i < nt; ++i) times[i] = probe.T * i / (nt - 1);
  const double h = times[1] - times[0];
  const quad::Rule gl = quad::gauss_legendre(10, 0.0, h);
  const quad::Rule pw = quad::power_weighted(10, res.exponent, h);
  const CounterNormal rng(seed, Stream::Test);

  std::vector<double> xi(n), grid_vals(fine.grid().size()), cs(n);
  for (std::size_t sidx = 0; sidx < n_samples; ++sidx) {
    std::vector<std::vector<double>> c(nt, std::vector<double>(n));
    std::vector<GridField> v;
    for (int i = 0; i < nt; ++i) {
      rng.fill(sidx, static_cast<std::uint64_t>(i), xi.data(), n);
      for (std::size_t k = 0; k < n; ++k) c[i][k] = xi[k] * std::pow(1.0 + basis.eigenvalue(k), -probe.decay / 2.0);
      v.push_back(coarse.inverse(SpectralField(basis, c[i])));
    }
    const SpectralField J = deterministic_convolution(times, v, basis, kernel, 0.0, probe.T, a);
    fine.inverse(J.coeffs.data(), grid_vals.data());
    const double lhs = grid_norm(grid_vals, q, vol);

    auto vnorm = [&](double s) {
      const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(s / h), nt - 2);
      const double th = (s - times[i]) / h;
      for (std::size_t k = 0; k < n; ++k) cs[k] = (1.0 - th) * c[i][k] + th * c[i + 1][k];
      fine.inverse(cs.data(), grid_vals.data());
      return grid_norm(grid_vals, rho, vol);
    };
    double rhs = 0.0;
    for (int i = 0; i + 2 < nt; ++i)
      for (std::size_t j = 0; j < gl.x.size(); ++j) {
        const double s = times[i] + gl.x[j];
        rhs += gl.w[j] * std::pow(probe.T - s, res.exponent) * vnorm(s);
      }
    for (std::size_t j = 0; j < pw.x.size(); ++j) rhs += pw.w[j] * vnorm(probe.T - pw.x[j]);

    const double ratio = lhs / rhs;
    res.ratios.push_back(ratio);
    res.C = std::max(res.C, ratio);
    if (fitted_C && ratio > *fitted_C) ++res.violations;
    ++res.samples;
  }
  return res;
}

double ch_energy(const SpectralField& u, const Cubic& R) {
  const Basis& b = u.basis;
  double grad = 0.0;
  for (std::size_t k = 0; k < u.coeffs.size(); ++k) grad += b.eigenvalue(k) * u[k] * u[k];
  const SpectralTransform tr(b, b.padded_points());
  std::vector<double> g(tr.grid().size());
  tr.inverse(u.coeffs.data(), g.data());
  double W = 0.0;
  for (double v : g) W += R.potential(v);
  return 0.5 * grad + W * tr.grid().cell_volume();
}

EnergySeries energy_diagnostics(const Trajectory& traj, const Cubic* R) {
  EnergySeries e;
  const Basis& b = traj.basis;
  const bool neumann = b.bc() == BoundaryCondition::Neumann;
  double integral = 0.0, prev_lap = 0.0;
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    const auto& c = traj.states[i];
    double l2 = 0.0, lap = 0.0, inv = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) {
      const double lam = b.eigenvalue(k);
      l2 += c[k] * c[k];
      lap += lam * lam * c[k] * c[k];
      if (lam > 0.0) inv += c[k] * c[k] / lam;
    }
    if (i > 0) integral += 0.5 * (traj.times[i] - traj.times[i - 1]) * (lap + prev_lap);
    prev_lap = lap;
    e.times.push_back(traj.times[i]);
    e.l2_sq.push_back(l2);
    e.lap_integral.push_back(integral);
    if (neumann) {
      e.mass_sq.push_back(c[0] * c[0]);
      e.inv_sqrt_a_sq.push_back(inv);
    }
    if (R) e.ch_energy.push_back(ch_energy(traj.state(i), *R));
  }
  for (const auto* s : {&e.l2_sq, &e.lap_integral, &e.mass_sq, &e.inv_sqrt_a_sq, &e.ch_energy})
    for (double v : *s) e.finite = e.finite && std::isfinite(v);
  return e;
}

}  // namespace spde
