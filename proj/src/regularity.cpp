#include "spde/regularity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "spde/greens.hpp"

namespace spde {

namespace {

// e_k(x) for every mode of the basis
std::vector<double> point_values(const Basis& b, const std::vector<double>& x) {
  const int d = b.dim(), M = b.modes_per_axis();
  std::vector<std::vector<double>> e1(d, std::vector<double>(M));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < M; ++j) e1[i][j] = eigenfunction_1d(b.mode_number(j), x[i], b.bc());
  std::vector<double> v(b.mode_count());
  for (std::size_t f = 0; f < v.size(); ++f) {
    std::size_t r = f;
    double p = 1.0;
    for (int i = d - 1; i >= 0; --i) {
      p *= e1[i][r % M];
      r /= M;
    }
    v[f] = p;
  }
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Fit {
  double slope = 0.0, intercept = 0.0, slope_se = 0.0;
};

Fit loglog_fit(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>* rel_err) {
  const std::size_t n = x.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  Fit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ly[i] - f.intercept - f.slope * lx[i];
    rss += r * r;
  }
  double var = n > 2 ? rss / (n - 2) / sxx : 0.0;
  if (rel_err) {
    // independent errors on log y
    double v2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) v2 += (lx[i] - mx) * (lx[i] - mx) * (*rel_err)[i] * (*rel_err)[i];
    var += v2 / (sxx * sxx);
  }
  f.slope_se = std::sqrt(var);
  return f;
}

void check_lags(const SFOptions& opt, const Basis& b, const std::vector<double>& lags) {
  if (lags.empty()) throw DomainError("structure_function: no lags");
  const double tol = 1e-9;
  for (double h : lags) {
    if (!(h > 0.0)) throw DomainError("structure_function: lags must be positive");
    if (opt.axis == SFAxis::Time) {
      const double T = opt.T > 0.0 ? opt.T : opt.t_ref + *std::max_element(lags.begin(), lags.end());
      if (h < 2.0 * opt.dt * (1.0 - tol) || h > T / 4.0 * (1.0 + tol))
        throw DomainError("structure_function: time lag outside [2 dt, T/4]");
    } else {
      const double lo = 2.0 * std::numbers::pi / b.modes_per_axis() * 2.0;
      if (h < lo * (1.0 - tol) || h > std::numbers::pi / 4.0 * (1.0 + tol))
        throw DomainError("structure_function: space lag outside [4 pi / M, pi / 4]");
    }
  }
  if (opt.points.empty()) throw DomainError("structure_function: no probe points");
  for (const auto& x : opt.points) {
    if (static_cast<int>(x.size()) != b.dim()) throw DomainError("structure_function: probe point dimension");
    if (opt.axis == SFAxis::Space) {
      const double hmax = *std::max_element(lags.begin(), lags.end());
      if (x[opt.space_axis] + hmax > std::numbers::pi || x[opt.space_axis] < 0.0)
        throw DomainError("structure_function: shifted probe leaves the domain");
    }
  }
}

std::vector<double> shifted(std::vector<double> x, int axis, double h) {
  x[axis] += h;
  return x;
}

}  // namespace

StructureFunction structure_function_oracle(const NoiseBackend& backend, double sigma0, const SpectralField& u0,
                                            const SFOptions& opt, const std::vector<double>& lags) {
  const Basis& b = backend.basis();
  check_lags(opt, b, lags);
  if (u0.basis != b) throw DomainError("structure_function: initial field basis mismatch");
  const std::size_t N = b.mode_count();
  const double s2 = sigma0 * sigma0;
  const double t = opt.t_ref;
  std::vector<double> mu(N);
  for (std::size_t k = 0; k < N; ++k) mu[k] = b.eigenvalue(k) * b.eigenvalue(k);
  const bool diag = backend.diagonal();
  const Eigen::MatrixXd Q = diag ? Eigen::MatrixXd() : backend.covariance();
  std::vector<double> qd(N);
  if (diag)
    for (std::size_t k = 0; k < N; ++k) qd[k] = backend.diag_factor()[k] * backend.diag_factor()[k];
  // int_0^s e^{-(mu_k + mu_l) r} dr
  auto ker = [](double m, double s) { return m == 0.0 ? s : -std::expm1(-m * s) / m; };

  StructureFunction sf;
  sf.axis = opt.axis;
  sf.space_axis = opt.space_axis;
  sf.oracle = true;
  sf.lags = lags;
  for (double h : lags) {
    double acc = 0.0;
    for (const auto& x : opt.points) {
      std::vector<double> a = point_values(b, x);
      std::vector<double> c(N);  // multiplier of u(t) in the increment
      double mean = 0.0;
      if (opt.axis == SFAxis::Time) {
        for (std::size_t k = 0; k < N; ++k) {
          c[k] = a[k] * std::expm1(-mu[k] * h);
          mean += c[k] * std::exp(-mu[k] * t) * u0[k];
        }
      } else {
        const std::vector<double> a2 = point_values(b, shifted(x, opt.space_axis, h));
        for (std::size_t k = 0; k < N; ++k) {
          c[k] = a2[k] - a[k];
          mean += c[k] * std::exp(-mu[k] * t) * u0[k];
        }
      }
      double var = 0.0;
      if (diag) {
        for (std::size_t k = 0; k < N; ++k) {
          var += c[k] * c[k] * s2 * qd[k] * ker(2.0 * mu[k], t);
          if (opt.axis == SFAxis::Time) var += a[k] * a[k] * s2 * qd[k] * ker(2.0 * mu[k], h);
        }
      } else {
        for (std::size_t k = 0; k < N; ++k)
          for (std::size_t l = 0; l < N; ++l) {
            const double q = Q(k, l);
            if (q == 0.0) continue;
            var += c[k] * c[l] * s2 * q * ker(mu[k] + mu[l], t);
            if (opt.axis == SFAxis::Time) var += a[k] * a[l] * s2 * q * ker(mu[k] + mu[l], h);
          }
      }
      acc += var + mean * mean;
    }
    sf.values.push_back(acc / opt.points.size());
    sf.stderr_.push_back(0.0);
  }
  return sf;
}

StructureFunction structure_function_ensemble(const std::vector<Trajectory>& ens, const SFOptions& opt,
                                              const std::vector<double>& lags) {
  if (ens.empty()) throw DomainError("structure_function: empty ensemble");
  const Basis& b = ens.front().basis;
  SFOptions o = opt;
  o.dt = ens.front().dt;
  check_lags(o, b, lags);
  const double dt = o.dt;
  std::vector<std::vector<double>> pv;
  for (const auto& x : opt.points) pv.push_back(point_values(b, x));

  StructureFunction sf;
  sf.axis = opt.axis;
  sf.space_axis = opt.space_axis;
  sf.lags = lags;
  const std::size_t base = static_cast<std::size_t>(std::llround(opt.t_ref / dt));
  auto field = [&](const Trajectory& tr, std::size_t step) -> const std::vector<double>* {
    auto it = std::lower_bound(tr.step_index.begin(), tr.step_index.end(), step);
    if (it == tr.step_index.end() || *it != step) return nullptr;
    const std::size_t i = it - tr.step_index.begin();
    return opt.use_convolution ? &tr.convolution.at(i) : &tr.states[i];
  };
  for (double h : lags) {
    std::vector<std::vector<double>> pv2;
    if (opt.axis == SFAxis::Space)
      for (const auto& x : opt.points) pv2.push_back(point_values(b, shifted(x, opt.space_axis, h)));
    const std::size_t lag_steps = static_cast<std::size_t>(std::llround(h / dt));
    std::vector<double> per_path;
    for (const auto& tr : ens) {
      if (tr.exploded && tr.last_valid_time < opt.t_ref + (opt.axis == SFAxis::Time ? h : 0.0)) continue;
      const auto* u1 = field(tr, base);
      const auto* u2 = opt.axis == SFAxis::Time ? field(tr, base + lag_steps) : u1;
      if (!u1 || !u2) continue;
      double acc = 0.0;
      for (std::size_t p = 0; p < pv.size(); ++p) {
        const double inc = opt.axis == SFAxis::Time ? dot(pv[p], *u2) - dot(pv[p], *u1) : dot(pv2[p], *u1) - dot(pv[p], *u1);
        acc += inc * inc;
      }
      per_path.push_back(acc / pv.size());
    }
    if (per_path.size() < 2) throw DomainError("structure_function: ensemble lacks recorded states at the lags");
    double m = 0.0;
    for (double v : per_path) m += v;
    m /= per_path.size();
    double var = 0.0;
    for (double v : per_path) var += (v - m) * (v - m);
    var /= per_path.size() - 1;
    sf.values.push_back(m);
    sf.stderr_.push_back(std::sqrt(var / per_path.size()));
    sf.paths = per_path.size();
  }
  return sf;
}

HolderFit holder_exponent(const StructureFunction& sf, double lo, double hi) {
  std::vector<double> x, y, rel;
  for (std::size_t i = 0; i < sf.lags.size(); ++i) {
    const double h = sf.lags[i];
    if (h < lo * (1.0 - 1e-12) || h > hi * (1.0 + 1e-12)) continue;
    if (!(sf.values[i] > 0.0)) throw DomainError("holder_exponent: non-positive structure function in window");
    x.push_back(h);
    y.push_back(sf.values[i]);
    rel.push_back(sf.stderr_[i] / sf.values[i]);
  }
  if (x.size() < 5) throw DomainError("holder_exponent: need at least 5 lags in the fit window");
  const Fit f = loglog_fit(x, y, &rel);
  HolderFit r;
  r.slope = f.slope;
  r.exponent = f.slope / 2.0;
  r.ci = f.slope_se;  // two standard errors of the slope, halved
  r.saturated = r.exponent >= 0.95;
  r.used = x.size();
  return r;
}

HolderBounds ch_holder_bounds(const ModelSpec& m, int d, double u0_order) {
  HolderBounds hb;
  hb.theorem = "holdCH";
  int kmax = 0;
  for (const auto& t : m.drift) {
    int o = 0;
    for (int v : t.k) o += v;
    kmax = std::max(kmax, o);
  }
  const double eps = m.ch_epsilon;
  const double lam = std::min(1.0 - std::max(kmax, 2) / 4.0, eps * d / 8.0);
  hb.time_sup = std::min(lam, u0_order / 4.0);
  hb.space_sup = std::min(u0_order, eps * d / 2.0);
  hb.note = "max_i k_i read as max_i |k_i|";
  return hb;
}

HolderBounds lipschitz_holder_bounds(const ModelSpec& m, const CovarianceSpec& f, int d) {
  HolderBounds hb;
  hb.theorem = "holdlip";
  const KernelExponents ex = KernelExponents::cahn_hilliard(d);
  double inf_i = std::numeric_limits<double>::infinity();
  for (const auto& t : m.drift) {
    int o = 0;
    for (int v : t.k) o += v;
    inf_i = std::min(inf_i, 1.0 - o * ex.delta);  // 1 + alpha - alpha_i, alpha_i = alpha + |k_i| delta
  }
  const bool white = f.kind == CovarianceSpec::Kind::WhiteNoise;
  if (ex.alpha < 1.0 && white) {
    hb.time_sup = std::min(inf_i, (1.0 - ex.alpha) / 2.0);
    hb.space_sup = std::min({inf_i / ex.delta, (1.0 - ex.alpha) / (2.0 * ex.delta), 1.0});
    hb.note = "part (i): white noise, alpha < 1";
  } else if (ex.alpha >= 1.0 && !white) {
    const double eps = m.ch_epsilon;
    hb.time_sup = std::min({inf_i, eps * d * ex.delta, 1.0});
    hb.space_sup = std::min({inf_i / ex.delta, eps * d, 1.0});
    hb.note = "part (ii): correlated noise, alpha >= 1, epsilon from the model";
  } else {
    hb.note = "not covered by the theorem for this (alpha, noise) pair";
  }
  return hb;
}

double admissible_holder_sup(const CovarianceSpec& f, int d, HolderWhich which) {
  const KernelExponents ex = KernelExponents::cahn_hilliard(d);
  double sup = 0.0;
  for (int i = 1; i <= 999; ++i) {
    const double o = i * 1e-3;
    if (holder_condition(f, ex, d, which, o).verdict == Verdict::Admissible) sup = o;
  }
  return sup;
}

IncrementScaling increment_moment_scaling(const ModelSpec& m, const SolverConfig& cfg, const NoiseBackend& backend,
                                          const IncrementOptions& opt) {
  if (!m.sigma.bounded()) throw PreconditionError("increment_moment_scaling needs a bounded sigma");
  if (!(opt.p >= 1.0)) throw DomainError("increment_moment_scaling: p must be >= 1");
  if (opt.lags.size() < 2) throw DomainError("increment_moment_scaling: need at least two lags");
  const CovarianceSpec& f = backend.covariance_spec();
  const HolderWhich which = opt.axis == SFAxis::Time ? HolderWhich::Time : HolderWhich::Space;
  IncrementScaling res;
  res.admissible = admissible_holder_sup(f, cfg.d, which);
  res.condition = holder_condition(f, KernelExponents::cahn_hilliard(cfg.d), cfg.d, which,
                                   res.admissible > 0.0 ? res.admissible : 1e-3);
  if (res.admissible <= 0.0) throw PreconditionError("increment_moment_scaling: no admissible Hölder order");
  res.predicted = opt.p * res.admissible;

  SolverConfig c = cfg;
  c.track_convolution = true;
  c.record_every = 1;
  const double hmax = *std::max_element(opt.lags.begin(), opt.lags.end());
  c.T = opt.t_ref + (opt.axis == SFAxis::Time ? hmax : 0.0);
  const std::vector<Trajectory> ens = run_ensemble(m, c, backend);
  const Basis& b = ens.front().basis;

  std::vector<std::vector<double>> pv;
  for (const auto& x : opt.points) pv.push_back(point_values(b, x));
  const std::size_t base = static_cast<std::size_t>(std::llround(opt.t_ref / c.dt));
  for (double h : opt.lags) {
    std::vector<std::vector<double>> pv2;
    if (opt.axis == SFAxis::Space)
      for (const auto& x : opt.points) pv2.push_back(point_values(b, shifted(x, opt.space_axis, h)));
    const std::size_t lag_steps = static_cast<std::size_t>(std::llround(h / c.dt));
    if (opt.axis == SFAxis::Time && lag_steps < 1) throw DomainError("increment_moment_scaling: lag below dt");
    std::vector<double> per_path;
    for (const auto& tr : ens) {
      const std::size_t i1 = base, i2 = opt.axis == SFAxis::Time ? base + lag_steps : base;
      if (i2 >= tr.convolution.size() || tr.step_index[i2] != i2) continue;
      double acc = 0.0;
      for (std::size_t p = 0; p < pv.size(); ++p) {
        const double inc = opt.axis == SFAxis::Time ? dot(pv[p], tr.convolution[i2]) - dot(pv[p], tr.convolution[i1])
                                                    : dot(pv2[p], tr.convolution[i1]) - dot(pv[p], tr.convolution[i1]);
        acc += std::pow(std::abs(inc), 2.0 * opt.p);
      }
      per_path.push_back(acc / pv.size());
    }
    if (per_path.size() < 2) throw DomainError("increment_moment_scaling: too few usable paths");
    double mean = 0.0;
    for (double v : per_path) mean += v;
    mean /= per_path.size();
    double var = 0.0;
    for (double v : per_path) var += (v - mean) * (v - mean);
    var /= per_path.size() - 1;
    res.lags.push_back(h);
    res.moments.push_back(mean);
    res.stderr_.push_back(std::sqrt(var / per_path.size()));
    res.paths = per_path.size();
  }
  res.slope = loglog_fit(res.lags, res.moments, nullptr).slope;
  return res;
}

MomentTrack moment_track(const std::vector<Trajectory>& ens, double q, double p) {
  MomentTrack mt;
  if (ens.empty()) return mt;
  const Basis& b = ens.front().basis;
  const SpectralTransform tr(b, b.padded_points());
  const double vol = tr.grid().cell_volume();
  std::size_t len = 0;
  for (const auto& t : ens) {
    if (t.exploded) {
      ++mt.exploded;
      continue;
    }
    len = std::max(len, t.states.size());
  }
  std::vector<double> g(tr.grid().size());
  for (std::size_t i = 0; i < len; ++i) {
    std::vector<double> vals;
    double time = 0.0;
    for (const auto& t : ens) {
      if (t.exploded || i >= t.states.size()) continue;
      time = t.times[i];
      tr.inverse(t.states[i].data(), g.data());
      double nrm;
      if (std::isinf(q)) {
        nrm = 0.0;
        for (double v : g) nrm = std::max(nrm, std::abs(v));
      } else {
        double s = 0.0;
        for (double v : g) s += std::pow(std::abs(v), q);
        nrm = std::pow(s * vol, 1.0 / q);
      }
      vals.push_back(std::pow(nrm, p));
    }
    if (vals.empty()) continue;
    double m = 0.0;
    for (double v : vals) m += v;
    m /= vals.size();
    double var = 0.0;
    for (double v : vals) var += (v - m) * (v - m);
    var = vals.size() > 1 ? var / (vals.size() - 1) : 0.0;
    mt.times.push_back(time);
    mt.values.push_back(m);
    mt.stderr_.push_back(std::sqrt(var / vals.size()));
  }
  mt.used = ens.size() - mt.exploded;
  for (std::size_t i = 0; i < mt.values.size(); ++i) {
    mt.sup = std::max(mt.sup, mt.values[i]);
    if (i % 2 == 0) mt.sup_coarse = std::max(mt.sup_coarse, mt.values[i]);
  }
  mt.unbounded = mt.sup > 2.0 * mt.sup_coarse;
  return mt;
}

const char* to_string(U0Mode m) {
  switch (m) {
    case U0Mode::LqContinuity:
      return "lq_continuity";
    case U0Mode::InteriorHolder:
      return "interior_holder";
    case U0Mode::BoundaryHolder:
      return "boundary_holder";
  }
  return "?";
}

U0Report u0_regularity_check(const GridField& u0, BoundaryCondition bc, U0Mode mode, const U0Options& opt) {
  if (u0.grid.bc != bc) throw DomainError("u0_regularity_check: grid bc mismatch");
  const SpectralField u = transform(u0);
  const Basis& b = u.basis;
  const SpectralTransform fine(b, b.padded_points());
  const Grid& g = fine.grid();
  U0Report rep;
  rep.mode = mode;
  rep.lags = opt.lags;
  if (rep.lags.empty()) {
    const bool space = mode == U0Mode::BoundaryHolder;
    const double lo = space ? 0.05 : 1e-6, hi = space ? 0.5 : 1e-2;
    for (int i = 0; i < 8; ++i) rep.lags.push_back(lo * std::pow(hi / lo, i / 7.0));
  }
  std::vector<double> a(g.size()), c(g.size());
  if (mode == U0Mode::LqContinuity || mode == U0Mode::InteriorHolder) {
    fine.inverse(apply_semigroup(u, opt.s).coeffs.data(), a.data());
    for (double h : rep.lags) {
      fine.inverse(apply_semigroup(u, opt.s + h).coeffs.data(), c.data());
      double v = 0.0;
      if (mode == U0Mode::LqContinuity) {
        std::vector<double> diff(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) diff[i] = c[i] - a[i];
        if (std::isinf(opt.q)) {
          for (double x : diff) v = std::max(v, std::abs(x));
        } else {
          for (double x : diff) v += std::pow(std::abs(x), opt.q);
          v = std::pow(v * g.cell_volume(), 1.0 / opt.q);
        }
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) {
          const auto x = g.coordinates(i);
          bool inside = true;
          for (double xi : x) inside = inside && xi >= opt.margin && xi <= std::numbers::pi - opt.margin;
          if (inside) v = std::max(v, std::abs(c[i] - a[i]));
        }
      }
      rep.values.push_back(v);
    }
    rep.target = mode == U0Mode::InteriorHolder ? opt.order / 4.0 : 0.0;
  } else {
    if (bc == BoundaryCondition::Dirichlet) {
      double mx = 0.0, edge = 0.0;
      const int P = u0.grid.P;
      for (std::size_t i = 0; i < u0.values.size(); ++i) {
        mx = std::max(mx, std::abs(u0.values[i]));
        std::size_t r = i;
        bool at_edge = false;
        for (int ax = 0; ax < u0.grid.d; ++ax) {
          const int j = static_cast<int>(r % P);
          r /= P;
          at_edge = at_edge || j == 0 || j == P - 1;
        }
        if (at_edge) edge = std::max(edge, std::abs(u0.values[i]));
      }
      if (edge > 0.1 * mx) throw DomainError("u0_regularity_check: Dirichlet boundary case needs u0 = 0 on the boundary");
    }
    const SpectralField ut = apply_semigroup(u, opt.t_space);
    // probe lines along axis 0 through the grid, including the boundary
    const int nx = 64;
    for (double h : rep.lags) {
      double v = 0.0;
      for (int j = 0; j <= nx; ++j) {
        std::vector<double> x(b.dim(), std::numbers::pi / 2.0);
        x[0] = (std::numbers::pi - h) * j / nx;
        const double d1 = dot(point_values(b, shifted(x, 0, h)), ut.coeffs) - dot(point_values(b, x), ut.coeffs);
        v = std::max(v, std::abs(d1));
      }
      rep.values.push_back(v);
    }
    rep.target = opt.order;
  }
  rep.at_zero = rep.values.front();
  bool positive = true;
  for (double v : rep.values) positive = positive && v > 0.0;
  if (positive) {
    rep.slope = loglog_fit(rep.lags, rep.values, nullptr).slope;
    for (std::size_t i = 0; i < rep.lags.size(); ++i)
      rep.fitted_C = std::max(rep.fitted_C, rep.values[i] / std::pow(rep.lags[i], rep.target));
  }
  if (mode == U0Mode::LqContinuity) {
    bool mono = true;
    for (std::size_t i = 1; i < rep.values.size(); ++i) mono = mono && rep.values[i] >= rep.values[i - 1] * (1.0 - 1e-9);
    rep.pass = mono && rep.at_zero < rep.values.back();
    rep.note = "modulus of t -> G_t u0 in L^q, decreasing to 0 with the lag";
  } else {
    rep.pass = positive && rep.slope >= rep.target - 0.1 && std::isfinite(rep.fitted_C);
    rep.note = mode == U0Mode::InteriorHolder ? "sup over interior x of |G_{s+h}u0 - G_s u0|" : "space modulus up to the boundary";
  }
  return rep;
}

}  // namespace spde
