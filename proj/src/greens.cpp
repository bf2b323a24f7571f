#include "spde/greens.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

namespace spde {

using std::numbers::pi;

KernelExponents KernelExponents::petrovskii(int n, int d) {
  if (n < 1) throw DomainError("operator order must be positive");
  if (d < 1 || d > 5) throw DomainError("dimension must be in 1..5");
  KernelExponents e;
  e.alpha = static_cast<double>(d) / (2.0 * n);
  e.beta = 2.0 * n / (2.0 * n - 1.0);
  e.gamma = 1.0 / (2.0 * n - 1.0);
  e.delta = 1.0 / (2.0 * n);
  e.eta = 1.0;
  return e;
}

namespace {

const double kLogCut = std::log(1e16);

struct AxisTables {
  std::vector<std::vector<double>> fx, fy;
  std::vector<int> kn;  // mode numbers shared by every axis
};

AxisTables tables(double tau, const std::vector<double>& x, const std::vector<double>& y, BoundaryCondition bc,
                  int M, const MultiIndex& a) {
  const int d = static_cast<int>(x.size());
  const double kcut = std::sqrt(std::sqrt(kLogCut / tau));
  AxisTables t;
  const int first = bc == BoundaryCondition::Dirichlet ? 1 : 0;
  for (int k = first; k < first + M; ++k) {
    if (k > kcut + 1.0) break;
    t.kn.push_back(k);
  }
  t.fx.assign(d, {});
  t.fy.assign(d, {});
  for (int i = 0; i < d; ++i) {
    for (int k : t.kn) {
      t.fx[i].push_back(eigenfunction_1d_derivative(k, x[i], bc, a.empty() ? 0 : a[i]));
      t.fy[i].push_back(eigenfunction_1d(k, y[i], bc));
    }
  }
  return t;
}

double kernel_sum(double tau, const AxisTables& t, int b) {
  const int d = static_cast<int>(t.fx.size());
  const double lam_cut = std::sqrt(kLogCut / tau);
  double total = 0.0;
  std::function<void(int, double, double)> rec = [&](int axis, double lam, double prod) {
    for (std::size_t j = 0; j < t.kn.size(); ++j) {
      const double k = t.kn[j];
      const double l = lam + k * k;
      if (l > lam_cut) break;
      const double p = prod * (t.fx[axis][j] * t.fy[axis][j]);
      if (axis + 1 < d) {
        rec(axis + 1, l, p);
      } else {
        double w = std::exp(-l * l * tau);
        for (int q = 0; q < b; ++q) w *= -(l * l);
        total += w * p;
      }
    }
  };
  rec(0, 0.0, 1.0);
  return total;
}

void check_points(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty() || x.size() > 5) throw DomainError("point dimension mismatch");
  for (double v : x)
    if (!(v >= -1e-12 && v <= pi + 1e-12)) throw DomainError("point outside [0,pi]^d");
  for (double v : y)
    if (!(v >= -1e-12 && v <= pi + 1e-12)) throw DomainError("point outside [0,pi]^d");
}

}  // namespace

double green_eval(double t, const std::vector<double>& x, double s, const std::vector<double>& y,
                  BoundaryCondition bc, int M) {
  if (!(t > s)) throw DomainError("green_eval requires t > s");
  if (M < 1) throw DomainError("truncation must be >= 1");
  check_points(x, y);
  const double tau = t - s;
  return kernel_sum(tau, tables(tau, x, y, bc, M, {}), 0);
}

double green_derivative(double tau, const std::vector<double>& x, const std::vector<double>& y,
                        BoundaryCondition bc, int M, const MultiIndex& a, int b) {
  if (!(tau > 0.0)) throw DomainError("green_derivative requires tau > 0");
  if (M < 1) throw DomainError("truncation must be >= 1");
  check_points(x, y);
  if (!a.empty() && a.size() != x.size()) throw DomainError("derivative order dimension mismatch");
  if (b < 0) throw DomainError("negative time-derivative order");
  return kernel_sum(tau, tables(tau, x, y, bc, M, a), b);
}

SpectralField apply_semigroup(const SpectralField& u0, double t) {
  if (!(t >= 0.0)) throw DomainError("apply_semigroup requires t >= 0");
  SpectralField u = u0;
  if (t == 0.0) return u;
  for (std::size_t f = 0; f < u.coeffs.size(); ++f) {
    const double l = u.basis.eigenvalue(f);
    u[f] *= std::exp(-l * l * t);
  }
  return u;
}

std::vector<KernelProbe> make_kernel_probes(int d, double tau_min, double tau_max, int n_tau, int n_r,
                                            double r_max) {
  if (n_tau < 1 || n_r < 1) return {};
  std::vector<KernelProbe> p;
  const double centre = 0.5 * pi;
  const double step = r_max / std::sqrt(static_cast<double>(d));  // max |x-y| = r_max
  for (int it = 0; it < n_tau; ++it) {
    const double f = n_tau == 1 ? 0.0 : static_cast<double>(it) / (n_tau - 1);
    const double tau = tau_min * std::pow(tau_max / tau_min, f);
    for (int ir = 0; ir < n_r; ++ir) {
      const double off = n_r == 1 ? 0.0 : step * ir / (n_r - 1);
      KernelProbe k{tau, std::vector<double>(d, centre), std::vector<double>(d, centre)};
      for (int i = 0; i < d; ++i) k.y[i] = centre + off;
      p.push_back(std::move(k));
    }
  }
  return p;
}

namespace {

double dist(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

double time_exponent(const KernelExponents& e, const MultiIndex& a, int b) {
  int na = 0;
  for (int v : a) na += v;
  return e.alpha + na * e.delta + b * e.eta;
}

void check_order(const MultiIndex& a, int b) {
  int na = 0;
  for (int v : a) {
    if (v < 0) throw DomainError("negative derivative order");
    na += v;
  }
  if (b < 0 || na + 4 * b > 4) throw DomainError("derivative order outside |a| + 4b <= 4");
}

}  // namespace

std::vector<KernelSample> sample_kernel(const KernelExponents& e, const MultiIndex& a, int b,
                                        const std::vector<KernelProbe>& probe, BoundaryCondition bc, int M,
                                        Exec exec) {
  check_order(a, b);
  const double texp = time_exponent(e, a, b);
  std::vector<KernelSample> out(probe.size());
  for (const auto& p : probe)
    if (!(p.tau >= kKernelTimeFloor)) throw DomainError("probe time below the kernel time floor");
  const long long n = static_cast<long long>(probe.size());
  auto body = [&](long long i) {
    const auto& p = probe[i];
    const double v = green_derivative(p.tau, p.x, p.y, bc, M, a.empty() ? MultiIndex(p.x.size(), 0) : a, b);
    out[i] = {p.tau, dist(p.x, p.y), v, std::abs(v) * std::pow(p.tau, texp)};
  };
  if (exec == Exec::Parallel && kernels::can_fork()) {
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < n; ++i) body(i);
  } else {
    for (long long i = 0; i < n; ++i) body(i);
  }
  return out;
}

KernelBoundFit fit_kernel_bound(const KernelExponents& e, const MultiIndex& a, int b,
                                const std::vector<KernelProbe>& probe, BoundaryCondition bc, int M,
                                std::optional<double> c, Exec exec) {
  if (probe.empty()) throw DomainError("empty probe set");
  const auto s = sample_kernel(e, a, b, probe, bc, M, exec);
  double cmax = 0.0;
  for (const auto& v : s) cmax = std::max(cmax, v.scaled);
  double ctight = std::numeric_limits<double>::infinity();
  for (const auto& v : s) {
    const double xi = std::pow(v.dist, e.beta) / std::pow(v.tau, e.gamma);
    if (xi <= 0.0 || v.scaled <= 0.0) continue;
    ctight = std::min(ctight, std::log(cmax / v.scaled) / xi);
  }
  if (!std::isfinite(ctight)) ctight = 0.0;
  KernelBoundFit fit;
  fit.c_tight = ctight;
  fit.c = c ? *c : std::max(0.5 * ctight, 1e-6);
  fit.probes = s.size();
  double C = 0.0;
  for (const auto& v : s) {
    const double xi = std::pow(v.dist, e.beta) / std::pow(v.tau, e.gamma);
    C = std::max(C, v.scaled * std::exp(fit.c * xi));
  }
  fit.C = C;
  double viol = -std::numeric_limits<double>::infinity();
  for (const auto& v : s) {
    const double xi = std::pow(v.dist, e.beta) / std::pow(v.tau, e.gamma);
    viol = std::max(viol, v.scaled * std::exp(fit.c * xi) / C - 1.0);
  }
  fit.max_violation = C > 0.0 ? viol : 0.0;
  return fit;
}

double kernel_bound_violation(const KernelBoundFit& fit, const KernelExponents& e, const MultiIndex& a, int b,
                              const std::vector<KernelProbe>& probe, BoundaryCondition bc, int M) {
  if (probe.empty()) throw DomainError("empty probe set");
  const auto s = sample_kernel(e, a, b, probe, bc, M);
  double viol = -std::numeric_limits<double>::infinity();
  for (const auto& v : s) {
    const double xi = std::pow(v.dist, e.beta) / std::pow(v.tau, e.gamma);
    viol = std::max(viol, v.scaled * std::exp(fit.c * xi) / fit.C - 1.0);
  }
  return viol;
}

DiagonalLowerResult diagonal_lower_check(BoundaryCondition bc, int d, double tau_min, double tau_max,
                                         double interior_margin, int n_tau, int n_x, int M, Exec exec) {
  if (d < 1 || d > 5) throw DomainError("dimension must be in 1..5");
  if (!(tau_min > 0.0 && tau_min <= tau_max && tau_max <= 0.1 + 1e-15))
    throw DomainError("tau range must lie in (0, 0.1]");
  if (!(interior_margin >= 0.0) || interior_margin > 0.5 * pi) throw DomainError("margin leaves no probe points");
  const double lo = interior_margin, hi = pi - interior_margin;
  std::vector<double> xs;
  if (n_x <= 1 || hi - lo < 1e-12) {
    xs.push_back(0.5 * (lo + hi));
  } else {
    for (int j = 0; j < n_x; ++j) xs.push_back(lo + (hi - lo) * j / (n_x - 1));
  }
  std::vector<std::vector<double>> pts;
  std::size_t npts = 1;
  for (int i = 0; i < d; ++i) npts *= xs.size();
  for (std::size_t f = 0; f < npts; ++f) {
    std::vector<double> x(d);
    std::size_t r = f;
    for (int i = d - 1; i >= 0; --i) {
      x[i] = xs[r % xs.size()];
      r /= xs.size();
    }
    pts.push_back(std::move(x));
  }
  std::vector<double> taus;
  for (int it = 0; it < n_tau; ++it) {
    const double f = n_tau == 1 ? 0.0 : static_cast<double>(it) / (n_tau - 1);
    taus.push_back(tau_min * std::pow(tau_max / tau_min, f));
  }
  const long long n = static_cast<long long>(taus.size() * pts.size());
  std::vector<double> val(n);
  auto body = [&](long long i) {
    const double tau = taus[i / pts.size()];
    const auto& x = pts[i % pts.size()];
    val[i] = std::pow(tau, 0.25 * d) * green_eval(tau, x, 0.0, x, bc, M);
  };
  if (exec == Exec::Parallel && kernels::can_fork()) {
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < n; ++i) body(i);
  } else {
    for (long long i = 0; i < n; ++i) body(i);
  }
  DiagonalLowerResult r;
  double mn = std::numeric_limits<double>::infinity(), mx = 0.0;
  for (double v : val) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  r.C0 = mn;
  r.ratio_spread = mn > 0.0 ? mx / mn : std::numeric_limits<double>::infinity();
  r.probes = val.size();
  return r;
}

double chapman_kolmogorov_check(double t, double r, double s, const Basis& left, const Basis& right, int n_probe) {
  if (!(s < r && r < t)) throw DomainError("chapman_kolmogorov_check requires s < r < t");
  if (left.bc() != right.bc() || left.dim() != right.dim())
    throw DomainError("mismatched boundary conditions between kernel factors");
  const int d = left.dim();
  const BoundaryCondition bc = left.bc();
  const Basis common(d, std::min(left.modes_per_axis(), right.modes_per_axis()), bc);
  const int P = std::max(left.modes_per_axis(), right.modes_per_axis());
  const SpectralTransform tl(left, P), tr(right, P);
  const double vol = tl.grid().cell_volume();

  // probe points strictly inside the box
  const double margin = 0.1;
  std::vector<std::vector<double>> pts;
  std::size_t npts = 1;
  for (int i = 0; i < d; ++i) npts *= static_cast<std::size_t>(n_probe);
  for (std::size_t f = 0; f < npts; ++f) {
    std::vector<double> x(d);
    std::size_t q = f;
    for (int i = d - 1; i >= 0; --i) {
      const int j = static_cast<int>(q % n_probe);
      q /= n_probe;
      x[i] = n_probe == 1 ? 0.5 * pi : margin + (pi - 2 * margin) * j / (n_probe - 1);
    }
    pts.push_back(std::move(x));
  }

  auto kernel_on_grid = [&](const Basis& b, const SpectralTransform& tf, const std::vector<double>& x, double tau) {
    SpectralField c(b);
    for (std::size_t f = 0; f < b.mode_count(); ++f) {
      const double l = b.eigenvalue(f);
      c[f] = std::exp(-l * l * tau) * eval_eigenfunction(b.multi_index(f), x, bc);
    }
    return tf.inverse(c).values;
  };

  std::vector<std::vector<double>> A, B;
  for (const auto& x : pts) A.push_back(kernel_on_grid(left, tl, x, t - r));
  for (const auto& y : pts) B.push_back(kernel_on_grid(right, tr, y, r - s));
  double err = 0.0;
  for (std::size_t px = 0; px < npts; ++px) {
    for (std::size_t py = 0; py < npts; ++py) {
      double comp = 0.0;
      for (std::size_t z = 0; z < A[px].size(); ++z) comp += A[px][z] * B[py][z];
      comp *= vol;
      double direct = 0.0;
      for (std::size_t f = 0; f < common.mode_count(); ++f) {
        const double l = common.eigenvalue(f);
        const auto k = common.multi_index(f);
        direct += std::exp(-l * l * (t - s)) * eval_eigenfunction(k, pts[px], bc) * eval_eigenfunction(k, pts[py], bc);
      }
      err = std::max(err, std::abs(comp - direct));
    }
  }
  return err;
}

}  // namespace spde
