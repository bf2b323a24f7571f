#include "spde/covariance.hpp"

#include <spdlog/spdlog.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <sstream>

#include "spde/quadrature.hpp"

namespace spde {

using std::numbers::pi;

CovarianceSpec CovarianceSpec::white(int d) {
  if (d < 1 || d > 5) throw DomainError("dimension must be in 1..5");
  CovarianceSpec s;
  s.kind = Kind::WhiteNoise;
  s.d = d;
  return s;
}

CovarianceSpec CovarianceSpec::constant(int d, double c) {
  if (d < 1 || d > 5) throw DomainError("dimension must be in 1..5");
  if (!(c > 0.0)) throw DomainError("constant covariance needs c > 0");
  CovarianceSpec s;
  s.kind = Kind::Constant;
  s.d = d;
  s.c = c;
  return s;
}

CovarianceSpec CovarianceSpec::riesz(int d, double B) {
  if (d < 1 || d > 5) throw DomainError("dimension must be in 1..5");
  if (!(B > 0.0) || !std::isfinite(B)) throw DomainError("Riesz exponent must be positive");
  CovarianceSpec s;
  s.kind = Kind::RieszPower;
  s.d = d;
  s.B = B;
  return s;
}

CovarianceSpec CovarianceSpec::tabulated(int d, std::vector<double> r, std::vector<double> f) {
  if (d < 1 || d > 5) throw DomainError("dimension must be in 1..5");
  if (r.size() != f.size() || r.size() < 2) throw DomainError("tabulated covariance needs >= 2 matching samples");
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!(r[i] > 0.0)) throw DomainError("tabulated radii must be positive");
    if (i > 0 && !(r[i] > r[i - 1])) throw DomainError("tabulated radii must increase");
    if (!(f[i] > 0.0) || !std::isfinite(f[i])) throw DomainError("tabulated values must be positive and finite");
  }
  CovarianceSpec s;
  s.kind = Kind::Tabulated;
  s.d = d;
  s.r = std::move(r);
  s.f = std::move(f);
  return s;
}

double CovarianceSpec::singular_exponent() const {
  switch (kind) {
    case Kind::WhiteNoise:
      return static_cast<double>(d);
    case Kind::Constant:
      return 0.0;
    case Kind::RieszPower:
      return B;
    case Kind::Tabulated:
      return -std::log(f[1] / f[0]) / std::log(r[1] / r[0]);
  }
  return 0.0;
}

double CovarianceSpec::value(double rho) const {
  switch (kind) {
    case Kind::WhiteNoise:
      throw DomainError("white noise has no pointwise correlation function");
    case Kind::Constant:
      return c;
    case Kind::RieszPower:
      return std::pow(rho, -B);
    case Kind::Tabulated: {
      if (rho <= r[0]) return f[0] * std::pow(rho / r[0], -singular_exponent());
      if (rho > r.back() * (1.0 + 1e-12)) throw DomainError("tabulated covariance evaluated beyond its samples");
      const auto it = std::upper_bound(r.begin(), r.end(), rho);
      const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(it - r.begin()), r.size() - 1);
      const std::size_t i = j - 1;
      const double s = (std::log(rho) - std::log(r[i])) / (std::log(r[j]) - std::log(r[i]));
      return std::exp((1.0 - s) * std::log(f[i]) + s * std::log(f[j]));
    }
  }
  return 0.0;
}

bool CovarianceSpec::locally_integrable() const {
  switch (kind) {
    case Kind::WhiteNoise:
      return false;
    case Kind::Constant:
      return true;
    case Kind::RieszPower:
    case Kind::Tabulated:
      return singular_exponent() < d - kThresholdTol;
  }
  return false;
}

double CovarianceSpec::max_radius() const {
  return kind == Kind::Tabulated ? r.back() : std::numeric_limits<double>::infinity();
}

std::string CovarianceSpec::describe() const {
  std::ostringstream os;
  os << to_string(kind) << "(d=" << d;
  if (kind == Kind::Constant) os << ", c=" << c;
  if (kind == Kind::RieszPower) os << ", B=" << B;
  if (kind == Kind::Tabulated) os << ", samples=" << r.size();
  os << ")";
  return os.str();
}

const char* to_string(CovarianceSpec::Kind k) {
  switch (k) {
    case CovarianceSpec::Kind::WhiteNoise:
      return "white";
    case CovarianceSpec::Kind::Constant:
      return "constant";
    case CovarianceSpec::Kind::RieszPower:
      return "riesz";
    case CovarianceSpec::Kind::Tabulated:
      return "tabulated";
  }
  return "?";
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Admissible:
      return "Admissible";
    case Verdict::Inadmissible:
      return "Inadmissible";
    case Verdict::Borderline:
      return "Borderline";
  }
  return "?";
}

double sphere_area(int d) { return 2.0 * std::pow(pi, 0.5 * d) / std::tgamma(0.5 * d); }

namespace {

// integral_0^r rho^(m-1) ln(1/rho)^kappa, m > 0, r <= 1
double log_power_moment(double m, int kappa, double r) {
  const double L = std::log(1.0 / r);
  const double rm = std::pow(r, m);
  double s = 0.0, fact = 1.0;  // kappa!/(kappa-j)!
  for (int j = 0; j <= kappa; ++j) {
    s += fact * rm * std::pow(L, kappa - j) / std::pow(m, j + 1);
    fact *= (kappa - j);
  }
  return s;
}

}  // namespace

RadialIntegral radial_integral(const CovarianceSpec& f, double e, int kappa, double r0) {
  if (!(r0 > 0.0 && r0 <= 1.0)) throw DomainError("radial_integral: r0 must lie in (0,1]");
  if (kappa < 0) throw DomainError("radial_integral: negative log power");
  if (f.kind == CovarianceSpec::Kind::WhiteNoise) throw DomainError("radial_integral: white noise has no density");
  const int d = f.d;
  const double S = sphere_area(d);
  const double Bs = f.singular_exponent();
  RadialIntegral res;
  res.margin = d - Bs - e;
  if (f.kind == CovarianceSpec::Kind::Tabulated && f.r.back() < r0 * (1.0 - 1e-12))
    throw DomainError("tabulated covariance samples do not reach r0");
  if (!(res.margin > kThresholdTol)) {
    res.divergent = true;
    return res;
  }
  if (f.kind != CovarianceSpec::Kind::Tabulated) {
    const double amp = f.kind == CovarianceSpec::Kind::Constant ? f.c : 1.0;
    res.value = S * amp * log_power_moment(res.margin, kappa, r0);
    return res;
  }
  // power-law below the first sample, adaptive quadrature above
  const double r_lo = std::min(f.r[0], r0);
  const double amp = f.f[0] * std::pow(f.r[0], Bs);
  double v = S * amp * log_power_moment(res.margin, kappa, r_lo);
  auto integrand = [&](double rho) {
    return S * std::pow(rho, d - 1.0 - e) * f.value(rho) * std::pow(std::log(1.0 / rho), kappa);
  };
  double a = r_lo;
  for (std::size_t i = 1; i < f.r.size() && a < r0; ++i) {
    const double b = std::min(f.r[i], r0);
    if (b > a) v += quad::integrate(integrand, a, b);
    a = std::max(a, b);
  }
  res.value = v;
  return res;
}

namespace {

Verdict verdict_from_margin(double m) {
  if (std::abs(m) <= kThresholdTol) return Verdict::Borderline;
  return m > 0.0 ? Verdict::Admissible : Verdict::Inadmissible;
}

// condition integral_B(0,1) f |v|^-[theta - dref]^+ (log when theta == dref)
ConditionReport threshold_condition(const std::string& id, const CovarianceSpec& f, int d, double theta,
                                    double dref) {
  ConditionReport rep;
  rep.id = id;
  const bool eq = std::abs(theta - dref) <= kThresholdTol;
  rep.log_power = eq ? 1 : 0;
  rep.exponent = eq ? 0.0 : std::max(theta - dref, 0.0);
  if (f.kind == CovarianceSpec::Kind::WhiteNoise) {
    // formal B = d: finite only strictly below the threshold
    rep.margin = dref - theta;
    rep.verdict = verdict_from_margin(rep.margin);
    rep.note = "white noise: admissible iff theta < " + std::to_string(dref);
    return rep;
  }
  const RadialIntegral ri = radial_integral(f, rep.exponent, rep.log_power, 1.0);
  rep.margin = ri.margin;
  rep.verdict = verdict_from_margin(ri.margin);
  if (rep.verdict == Verdict::Admissible) rep.value = ri.value;
  (void)d;
  return rep;
}

}  // namespace

ConditionReport cns_admissible(const CovarianceSpec& f, const KernelExponents& ex, int d) {
  if (f.d != d) throw DomainError("covariance dimension does not match d");
  const double theta = ex.beta / ex.gamma * (2.0 * ex.alpha - 1.0);
  const bool eq = std::abs(theta - d) <= kThresholdTol;
  return threshold_condition(eq ? "Acov_eq" : "Acov_diff", f, d, theta, d);
}

ConditionReport holder_condition(const CovarianceSpec& f, const KernelExponents& ex, int d, HolderWhich which,
                                 double order) {
  if (!(order > 0.0 && order < 1.0)) throw DomainError("holder_condition: order must lie in (0,1)");
  if (f.d != d) throw DomainError("covariance dimension does not match d");
  const double two_alpha = 2.0 * ex.alpha + order * (which == HolderWhich::Space ? ex.delta : ex.eta);
  const double theta = ex.beta / ex.gamma * (two_alpha - 1.0);
  return threshold_condition(which == HolderWhich::Space ? "covIS_space" : "covIS_time", f, d, theta, d);
}

ConditionReport cprime3(const CovarianceSpec& f, const KernelExponents& ex, int d, double q, double p) {
  if (!(q >= 2.0)) throw DomainError("cprime3 requires q >= 2");
  if (q > p) throw DomainError("cprime3 requires q <= p");
  if (!std::isfinite(p)) throw DomainError("cprime3 requires p < infinity");
  if (f.d != d) throw DomainError("covariance dimension does not match d");
  const double theta = ex.beta / ex.gamma * (2.0 * ex.alpha - 1.0);
  return threshold_condition("Cprime3", f, d, theta, d * q / p);
}

ConditionReport covch_admissible(const CovarianceSpec& f, int d, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("covch_admissible: eps must lie in (0,1)");
  if (d != 4 && d != 5) throw DomainError("covch_admissible: d must be 4 or 5");
  if (f.d != d) throw DomainError("covariance dimension does not match d");
  ConditionReport rep;
  rep.id = "covCH";
  rep.exponent = d * (1.0 + eps) - 4.0;
  if (f.kind == CovarianceSpec::Kind::WhiteNoise) {
    rep.margin = -rep.exponent;
    rep.verdict = verdict_from_margin(rep.margin);
    rep.note = "white noise";
    return rep;
  }
  const RadialIntegral ri = radial_integral(f, rep.exponent, 0, 1.0);
  rep.margin = ri.margin;
  rep.verdict = verdict_from_margin(ri.margin);
  if (rep.verdict == Verdict::Admissible) rep.value = ri.value;
  return rep;
}

RadialIntegral I_tau(const CovarianceSpec& f, int d, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("I_tau: tau must lie in (0,1)");
  if (f.d != d) throw DomainError("covariance dimension does not match d");
  const int kappa = std::max(5 - d, 0);
  if (f.kind == CovarianceSpec::Kind::WhiteNoise) {
    RadialIntegral r;
    r.divergent = true;
    r.margin = 4.0 - d;
    return r;
  }
  return radial_integral(f, d - 4.0, kappa, tau);
}

C1Result check_c1(const RadialFunction& f, double C1, double c1, const std::vector<std::pair<double, double>>& pairs) {
  if (!(c1 > 0.0 && c1 <= 1.0)) throw DomainError("check_c1: c1 must lie in (0,1]");
  C1Result res;
  for (const auto& [u, v] : pairs) {
    if (!(v <= c1 * u * (1.0 + 1e-14))) continue;
    ++res.checked;
    const double fu = f(u), fv = f(v);
    if (fu > C1 * fv * (1.0 + 1e-12)) {
      res.pass = false;
      res.witness_u = u;
      res.witness_v = v;
      res.fu = fu;
      res.fv = fv;
      return res;
    }
  }
  return res;
}

C1Result check_c1(const CovarianceSpec& f, double C1, double c1, const std::vector<std::pair<double, double>>& pairs) {
  return check_c1([&](double r) { return f.value(r); }, C1, c1, pairs);
}

std::vector<std::pair<double, double>> c1_sample_pairs(double r_max, int n) {
  std::vector<double> rad;
  for (int i = 0; i < n; ++i) rad.push_back(r_max * std::pow(1e-4, 1.0 - static_cast<double>(i) / (n - 1)));
  std::vector<std::pair<double, double>> p;
  for (double u : rad)
    for (double v : rad) p.emplace_back(u, v);
  return p;
}

namespace {

double tanh_sinh_integrate(const std::function<double(double)>& g, double a, double b) {
  static thread_local boost::math::quadrature::tanh_sinh<double> ts(12);
  return ts.integrate(g, a, b, 1e-12);
}

}  // namespace

PsiResult psi_integral(const CovarianceSpec& f, const KernelExponents& ex, int d, double T, double shift,
                       PsiOptions opt) {
  if (!(T > 0.0)) throw DomainError("psi_integral: T must be positive");
  if (!(shift >= 0.0)) throw DomainError("psi_integral: shift must be >= 0");
  if (f.d != d) throw DomainError("covariance dimension does not match d");
  if (f.kind == CovarianceSpec::Kind::WhiteNoise) throw DomainError("psi_integral: white noise has no density");
  if (f.kind == CovarianceSpec::Kind::Tabulated && f.r.back() < opt.R) throw DomainError("samples do not reach R");
  const double Bs = f.singular_exponent();
  const double S = sphere_area(d);
  const double pre = ex.gamma * d / ex.beta - 2.0 * ex.alpha - shift;
  PsiResult res;
  res.exponent = pre + ex.gamma * (d - Bs) / ex.beta;
  if (!(Bs < d - kThresholdTol) || !(res.exponent > -1.0 + kThresholdTol)) {
    res.divergent = true;
    return res;
  }
  const double P = res.exponent;
  const double c = opt.c, R = opt.R, beta = ex.beta, gam = ex.gamma;

  // psi(t) / t^P, numerically: rho = l s with l^beta = t^gamma / c
  auto inner_numeric = [&](double t) {
    const double l = std::pow(std::pow(t, gam) / c, 1.0 / beta);
    const double smax = std::min(R / l, std::pow(80.0, 1.0 / beta));
    auto g = [&](double s) {
      const double rho = l * s;
      if (!(rho > 0.0)) return 0.0;
      const double w = f.value(rho) * std::pow(rho, Bs);
      if (!std::isfinite(w)) return 0.0;
      return std::exp(-std::pow(s, beta)) * w * std::pow(s, d - 1.0 - Bs);
    };
    // t^pre * l^(d - Bs) * S * integral  ==  t^P * const
    const double scale = std::pow(c, -(d - Bs) / beta);
    return S * scale * tanh_sinh_integrate(g, 0.0, smax);
  };
  auto inner_closed = [&](double t) {
    const double a = (d - Bs) / beta;
    const double amp = f.kind == CovarianceSpec::Kind::Constant ? f.c : 1.0;
    return amp * S / beta * std::pow(c, -a) * boost::math::tgamma_lower(a, c * std::pow(R, beta) / std::pow(t, gam));
  };
  auto outer = [&](const std::function<double(double)>& inner) {
    auto h = [&](double u) {
      if (u <= 0.0) return inner(std::numeric_limits<double>::min());
      return inner(T * std::pow(u, 1.0 / (P + 1.0)));
    };
    return std::pow(T, P + 1.0) / (P + 1.0) * tanh_sinh_integrate(h, 0.0, 1.0);
  };
  res.value = outer(inner_numeric);
  if (f.kind != CovarianceSpec::Kind::Tabulated) res.closed_form = outer(inner_closed);
  return res;
}

double overlap_1d(int k, int l, double w, BoundaryCondition bc) {
  const double L = pi - w;
  auto J = [&](int m, double phi) {
    if (m == 0) return L * std::cos(phi);
    return (std::sin(m * L + phi) - std::sin(phi)) / m;
  };
  const double phi = k * w;
  if (bc == BoundaryCondition::Neumann) {
    const double ck = k == 0 ? 1.0 / std::sqrt(pi) : std::sqrt(2.0 / pi);
    const double cl = l == 0 ? 1.0 / std::sqrt(pi) : std::sqrt(2.0 / pi);
    return ck * cl * 0.5 * (J(k + l, phi) + J(k - l, phi));
  }
  return (2.0 / pi) * 0.5 * (J(k - l, phi) - J(k + l, phi));
}

namespace {

void auto_nodes(int d, int M, GramOptions& opt, bool diagonal) {
  if (opt.nodes_s <= 0) opt.nodes_s = (d <= 2 && !diagonal) ? static_cast<int>(std::ceil(3.2 * M)) + 16 : 2 * M + 8;
  if (opt.nodes_t <= 0) opt.nodes_t = (d <= 2 && !diagonal) ? static_cast<int>(std::ceil(3.2 * M)) + 16 : 2 * M + 4;
}

// S[m][a][b] = K_ab(v_m) + K_ba(v_m), storage indices a, b
std::vector<double> overlap_table(const std::vector<double>& values, const Basis& b) {
  const int M = b.modes_per_axis();
  std::vector<double> T(values.size() * M * M);
  for (std::size_t m = 0; m < values.size(); ++m) {
    for (int x = 0; x < M; ++x) {
      for (int y = x; y < M; ++y) {
        const int kx = b.mode_number(x), ky = b.mode_number(y);
        const double s = overlap_1d(kx, ky, values[m], b.bc()) + overlap_1d(ky, kx, values[m], b.bc());
        T[(m * M + x) * M + y] = s;
        T[(m * M + y) * M + x] = s;
      }
    }
  }
  return T;
}

std::vector<double> node_weights(const CovarianceSpec& f, const quad::CornerRule& cr, double Bw) {
  std::vector<double> fw(cr.size());
  for (std::size_t n = 0; n < cr.size(); ++n) {
    // the |w|^-Bw factor sits in the rule; only the regular remainder is applied
    const double reg = f.kind == CovarianceSpec::Kind::RieszPower ? 1.0 : f.value(cr.radius[n]) * std::pow(cr.radius[n], Bw);
    fw[n] = cr.weight[n] * reg;
  }
  return fw;
}

void check_gram_input(const CovarianceSpec& f, const Basis& basis) {
  if (f.d != basis.dim()) throw DomainError("covariance dimension does not match basis");
  if (f.kind != CovarianceSpec::Kind::WhiteNoise && !f.locally_integrable())
    throw DomainError("gram_matrix: correlation function is not locally integrable");
  if (f.kind == CovarianceSpec::Kind::Tabulated && f.r.back() < pi * std::sqrt(static_cast<double>(f.d)))
    throw DomainError("gram_matrix: tabulated samples must reach the box diameter");
}

Eigen::VectorXd constant_profile(const Basis& basis) {
  Eigen::VectorXd v(basis.mode_count());
  for (std::size_t fl = 0; fl < basis.mode_count(); ++fl) {
    const MultiIndex k = basis.multi_index(fl);
    double p = 1.0;
    for (int ki : k) {
      if (basis.bc() == BoundaryCondition::Neumann)
        p *= ki == 0 ? std::sqrt(pi) : 0.0;
      else
        p *= std::sqrt(2.0 / pi) * (1.0 - ((ki % 2) ? -1.0 : 1.0)) / ki;
    }
    v(fl) = p;
  }
  return v;
}

Eigen::MatrixXd assemble(const CovarianceSpec& f, const Basis& basis, GramOptions opt) {
  const int d = basis.dim(), M = basis.modes_per_axis();
  const std::size_t N = basis.mode_count();
  Eigen::MatrixXd Q(N, N);
  const double Bw = f.singular_exponent();
  auto_nodes(d, M, opt, false);
  const quad::CornerRule cr = quad::corner_rule(d, pi, Bw, opt.nodes_s, opt.nodes_t);
  const std::vector<double> fw = node_weights(f, cr, Bw);
  const std::vector<double> T = overlap_table(cr.values, basis);
  const std::size_t MM = static_cast<std::size_t>(M) * M;
  std::vector<std::vector<int>> idx(N);
  for (std::size_t p = 0; p < N; ++p) {
    idx[p].resize(d);
    std::size_t r = p;
    for (int i = d - 1; i >= 0; --i) {
      idx[p][i] = static_cast<int>(r % M);
      r /= M;
    }
  }

  std::function<void(std::size_t)> row;
  std::vector<double> H;  // d == 2: per pyramid and radial node, the inner t-sums
  const int ns = opt.nodes_s, nt = opt.nodes_t;
  if (d == 2) {
    // node order in corner_rule: pyramid j, radial a, transverse b
    H.assign(2 * static_cast<std::size_t>(ns) * MM, 0.0);
    for (int j = 0; j < 2; ++j)
      for (int a = 0; a < ns; ++a) {
        double* h = &H[(static_cast<std::size_t>(j) * ns + a) * MM];
        for (int b = 0; b < nt; ++b) {
          const std::size_t n = (static_cast<std::size_t>(j) * ns + a) * nt + b;
          const int vt = cr.index[n * 2 + (1 - j)];
          const double* t = &T[static_cast<std::size_t>(vt) * MM];
          for (std::size_t e = 0; e < MM; ++e) h[e] += fw[n] * t[e];
        }
      }
    row = [&](std::size_t p) {
      for (std::size_t q = p; q < N; ++q) {
        double s = 0.0;
        for (int j = 0; j < 2; ++j) {
          const std::size_t rj = static_cast<std::size_t>(idx[p][j]) * M + idx[q][j];
          const std::size_t ro = static_cast<std::size_t>(idx[p][1 - j]) * M + idx[q][1 - j];
          for (int a = 0; a < ns; ++a) s += T[a * MM + rj] * H[(static_cast<std::size_t>(j) * ns + a) * MM + ro];
        }
        Q(p, q) = s;
      }
    };
  } else {
    row = [&](std::size_t p) {
      for (std::size_t q = p; q < N; ++q) {
        double s = 0.0;
        for (std::size_t n = 0; n < cr.size(); ++n) {
          double v = fw[n];
          for (int i = 0; i < d; ++i) v *= T[static_cast<std::size_t>(cr.index[n * d + i]) * MM + idx[p][i] * M + idx[q][i]];
          s += v;
        }
        Q(p, q) = s;
      }
    };
  }
  const long long n = static_cast<long long>(N);
  if (opt.exec == Exec::Parallel && kernels::can_fork()) {
#pragma omp parallel for schedule(dynamic)
    for (long long p = 0; p < n; ++p) row(static_cast<std::size_t>(p));
  } else {
    for (long long p = 0; p < n; ++p) row(static_cast<std::size_t>(p));
  }
  for (std::size_t p = 0; p < N; ++p)
    for (std::size_t q = p + 1; q < N; ++q) Q(q, p) = Q(p, q);
  return Q;
}

}  // namespace

GramResult gram_matrix(const CovarianceSpec& f, const Basis& basis, GramOptions opt) {
  check_gram_input(f, basis);
  GramResult res;
  const std::size_t N = basis.mode_count();
  if (f.kind == CovarianceSpec::Kind::WhiteNoise) {
    res.Q = Eigen::MatrixXd::Identity(N, N);
    res.min_eigenvalue = 1.0;
    return res;
  }
  if (f.kind == CovarianceSpec::Kind::Constant) {
    const Eigen::VectorXd v = constant_profile(basis);
    res.Q.resize(N, N);
    for (std::size_t p = 0; p < N; ++p)
      for (std::size_t q = p; q < N; ++q) res.Q(p, q) = res.Q(q, p) = f.c * (v(p) * v(q));
    res.min_eigenvalue = 0.0;
    return res;
  }
  res.Q = assemble(f, basis, opt);
  if (N <= 2048) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(res.Q, Eigen::EigenvaluesOnly);
    res.min_eigenvalue = es.eigenvalues().minCoeff();
    const double scale = std::max(1.0, es.eigenvalues().maxCoeff());
    if (res.min_eigenvalue < -1e-8 * scale) {
      GramOptions finer = opt;
      auto_nodes(basis.dim(), basis.modes_per_axis(), finer, false);
      finer.nodes_s *= 2;
      finer.nodes_t *= 2;
      spdlog::warn("gram_matrix: eigenvalue {:.3e} below tolerance, refining quadrature", res.min_eigenvalue);
      res.Q = assemble(f, basis, finer);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(res.Q, Eigen::EigenvaluesOnly);
      res.min_eigenvalue = es2.eigenvalues().minCoeff();
      if (res.min_eigenvalue < -1e-8 * scale)
        throw std::runtime_error("gram_matrix: quadrature failed to produce a PSD matrix");
    }
    if (res.min_eigenvalue < 0.0) {
      spdlog::warn("gram_matrix: clipping negative eigenvalue {:.3e}", res.min_eigenvalue);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> full(res.Q);
      const Eigen::VectorXd lam = full.eigenvalues().cwiseMax(0.0);
      Eigen::MatrixXd R = full.eigenvectors() * lam.asDiagonal() * full.eigenvectors().transpose();
      for (std::size_t p = 0; p < N; ++p)
        for (std::size_t q = p; q < N; ++q) R(q, p) = R(p, q);
      res.Q = R;
      res.clipped = true;
    }
  } else {
    res.min_eigenvalue = std::numeric_limits<double>::quiet_NaN();
  }
  return res;
}

std::vector<double> gram_diagonal(const CovarianceSpec& f, const Basis& basis, GramOptions opt) {
  check_gram_input(f, basis);
  const int d = basis.dim(), M = basis.modes_per_axis();
  const std::size_t N = basis.mode_count();
  std::vector<double> q(N, 0.0);
  if (f.kind == CovarianceSpec::Kind::WhiteNoise) {
    std::fill(q.begin(), q.end(), 1.0);
    return q;
  }
  if (f.kind == CovarianceSpec::Kind::Constant) {
    const Eigen::VectorXd v = constant_profile(basis);
    for (std::size_t p = 0; p < N; ++p) q[p] = f.c * (v(p) * v(p));
    return q;
  }
  const double Bw = f.singular_exponent();
  auto_nodes(d, M, opt, true);
  const quad::CornerRule cr = quad::corner_rule(d, pi, Bw, opt.nodes_s, opt.nodes_t);
  const std::vector<double> fw = node_weights(f, cr, Bw);
  // diagonal overlap table only
  std::vector<double> T(cr.values.size() * M);
  for (std::size_t m = 0; m < cr.values.size(); ++m)
    for (int a = 0; a < M; ++a) T[m * M + a] = 2.0 * overlap_1d(basis.mode_number(a), basis.mode_number(a), cr.values[m], basis.bc());
  // radial symmetry: Q_kk depends on the multiset of k components only
  std::vector<std::size_t> reps;
  std::vector<std::size_t> rep_of(N);
  std::vector<std::vector<int>> comps(N);
  {
    std::vector<std::pair<std::vector<int>, std::size_t>> key;
    for (std::size_t p = 0; p < N; ++p) {
      std::vector<int> c(d);
      std::size_t r = p;
      for (int i = d - 1; i >= 0; --i) {
        c[i] = static_cast<int>(r % M);
        r /= M;
      }
      comps[p] = c;
      std::sort(c.begin(), c.end());
      if (std::is_sorted(comps[p].begin(), comps[p].end())) reps.push_back(p);
    }
    for (std::size_t p = 0; p < N; ++p) {
      std::vector<int> c = comps[p];
      std::sort(c.begin(), c.end());
      std::size_t f2 = 0;
      for (int i = 0; i < d; ++i) f2 = f2 * M + c[i];
      rep_of[p] = f2;
    }
  }
  const long long nr = static_cast<long long>(reps.size());
  auto body = [&](long long i) {
    const std::size_t p = reps[i];
    double s = 0.0;
    for (std::size_t n = 0; n < cr.size(); ++n) {
      double v = fw[n];
      for (int a = 0; a < d; ++a) v *= T[static_cast<std::size_t>(cr.index[n * d + a]) * M + comps[p][a]];
      s += v;
    }
    q[p] = s;
  };
  if (opt.exec == Exec::Parallel && kernels::can_fork()) {
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < nr; ++i) body(i);
  } else {
    for (long long i = 0; i < nr; ++i) body(i);
  }
  for (std::size_t p = 0; p < N; ++p) q[p] = q[rep_of[p]];
  return q;
}

double gram_offdiagonal_mass(const CovarianceSpec& f, int d, BoundaryCondition bc, int M) {
  const Basis b(d, M, bc);
  const GramResult g = gram_matrix(f, b);
  const double total = g.Q.squaredNorm();
  const double diag = g.Q.diagonal().squaredNorm();
  return total > 0.0 ? std::sqrt(std::max(total - diag, 0.0) / total) : 0.0;
}

}  // namespace spde
