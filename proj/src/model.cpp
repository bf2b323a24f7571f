#include "spde/model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "spde/greens.hpp"
#include "spde/rng.hpp"

namespace spde {

Coefficient Coefficient::constant(double a) {
  Coefficient c;
  c.kind_ = Kind::Constant;
  c.a_ = a;
  return c;
}

Coefficient Coefficient::affine(double a, double b) {
  Coefficient c = constant(a);
  if (b != 0.0) {
    c.kind_ = Kind::Affine;
    c.b_ = b;
  }
  return c;
}

Coefficient Coefficient::tanh(double a, double b, double cc) {
  Coefficient c = constant(a);
  if (b != 0.0 && cc != 0.0) {
    c.kind_ = Kind::Tanh;
    c.b_ = b;
    c.c_ = cc;
  }
  return c;
}

Coefficient Coefficient::sine(double a, double b, double cc) {
  Coefficient c = constant(a);
  if (b != 0.0 && cc != 0.0) {
    c.kind_ = Kind::Sine;
    c.b_ = b;
    c.c_ = cc;
  }
  return c;
}

Coefficient Coefficient::quadratic(double a, double b, double cc) {
  if (cc == 0.0) return affine(a, b);
  Coefficient c;
  c.kind_ = Kind::Quadratic;
  c.a_ = a;
  c.b_ = b;
  c.c_ = cc;
  return c;
}

Coefficient Coefficient::custom(Fn f, Fn du, int growth, bool lipschitz) {
  if (!f) throw std::invalid_argument("custom coefficient needs a callable");
  Coefficient c;
  c.kind_ = Kind::Custom;
  c.f_ = std::move(f);
  c.du_ = std::move(du);
  c.growth_ = growth;
  c.lipschitz_ = lipschitz;
  return c;
}

double Coefficient::value(double t, const double* x, double u) const {
  switch (kind_) {
    case Kind::Constant:
      return a_;
    case Kind::Affine:
      return a_ + b_ * u;
    case Kind::Tanh:
      return a_ + b_ * std::tanh(c_ * u);
    case Kind::Sine:
      return a_ + b_ * std::sin(c_ * u);
    case Kind::Quadratic:
      return a_ + (b_ + c_ * u) * u;
    case Kind::Custom:
      return f_(t, x, u);
  }
  return 0.0;
}

double Coefficient::du(double t, const double* x, double u) const {
  switch (kind_) {
    case Kind::Constant:
      return 0.0;
    case Kind::Affine:
      return b_;
    case Kind::Tanh: {
      const double th = std::tanh(c_ * u);
      return b_ * c_ * (1.0 - th * th);
    }
    case Kind::Sine:
      return b_ * c_ * std::cos(c_ * u);
    case Kind::Quadratic:
      return b_ + 2.0 * c_ * u;
    case Kind::Custom:
      if (!du_) throw std::logic_error("custom coefficient has no derivative");
      return du_(t, x, u);
  }
  return 0.0;
}

bool Coefficient::is_constant() const { return kind_ == Kind::Constant; }

int Coefficient::growth() const {
  switch (kind_) {
    case Kind::Constant:
    case Kind::Tanh:
    case Kind::Sine:
      return 0;
    case Kind::Affine:
      return 1;
    case Kind::Quadratic:
      return 2;
    case Kind::Custom:
      return growth_;
  }
  return 2;
}

bool Coefficient::lipschitz() const {
  if (kind_ == Kind::Quadratic) return false;
  if (kind_ == Kind::Custom) return lipschitz_;
  return true;
}

double Coefficient::abs_lower_bound() const {
  switch (kind_) {
    case Kind::Constant:
      return std::abs(a_);
    case Kind::Tanh:
    case Kind::Sine:
      return std::max(std::abs(a_) - std::abs(b_), 0.0);
    default:
      return 0.0;
  }
}

std::string Coefficient::describe() const {
  std::ostringstream o;
  switch (kind_) {
    case Kind::Constant:
      o << a_;
      break;
    case Kind::Affine:
      o << a_ << " + " << b_ << "*u";
      break;
    case Kind::Tanh:
      o << a_ << " + " << b_ << "*tanh(" << c_ << "*u)";
      break;
    case Kind::Sine:
      o << a_ << " + " << b_ << "*sin(" << c_ << "*u)";
      break;
    case Kind::Quadratic:
      o << a_ << " + " << b_ << "*u + " << c_ << "*u^2";
      break;
    case Kind::Custom:
      o << "custom";
      break;
  }
  return o.str();
}

bool ModelSpec::linear() const {
  if (!R.is_zero() || !g.is_zero()) return false;
  for (const auto& t : drift)
    if (!t.b.is_zero()) return false;
  return true;
}

bool ModelSpec::has_nonlinear_drift() const { return !linear(); }

SpectralField InitialCondition::build(const Basis& b) const {
  SpectralField u(b);
  switch (kind) {
    case Kind::Zero:
      break;
    case Kind::Constant: {
      if (b.bc() != BoundaryCondition::Neumann) {
        // sine projection of a constant
        const SpectralTransform tr(b, b.modes_per_axis());
        GridField g(tr.grid());
        std::fill(g.values.begin(), g.values.end(), value);
        return tr.forward(g);
      }
      u[0] = value * std::pow(std::sqrt(std::numbers::pi), b.dim());
      break;
    }
    case Kind::Mode:
      if (!b.contains(mode)) throw DomainError("initial mode outside the basis");
      u[b.flat_index(mode)] = value;
      break;
    case Kind::Random: {
      const CounterNormal rng(seed, Stream::Initial);
      std::vector<double> xi(b.mode_count());
      rng.fill(0, 0, xi.data(), xi.size());
      for (std::size_t k = 0; k < xi.size(); ++k) u[k] = value * std::pow(1.0 + b.eigenvalue(k), -decay / 2.0) * xi[k];
      break;
    }
    case Kind::Coefficients:
      if (coeffs.size() != b.mode_count()) throw DomainError("initial coefficients do not match the basis");
      u.coeffs = coeffs;
      break;
  }
  return u;
}

ValidationReport validate_model(const ModelSpec& m, const CovarianceSpec& f, int d, double q) {
  ValidationReport rep;
  auto flag = [&](const std::string& id, const std::string& msg) { rep.violations.push_back({id, msg}); };
  const KernelExponents ex = KernelExponents::cahn_hilliard(d);

  if (m.lipschitz_only) {
    if (!m.R.is_zero()) flag("L2", "cubic drift R is not Lipschitz; lipschitz_only models need R = 0");
    if (!m.sigma.lipschitz() || m.sigma.growth() > 1) flag("L1", "sigma must be Lipschitz with linear growth");
    if (!m.g.lipschitz()) flag("L2", "g must be Lipschitz in the Lipschitz model");
    for (const auto& t : m.drift)
      if (!t.b.lipschitz() || t.b.growth() > 1) flag("L2", "drift coefficient b must be Lipschitz");
  } else {
    if (!(m.R.r3 > 0.0)) flag("H.1", "R must be cubic with positive leading coefficient (r3 > 0)");
    if (m.bc == BoundaryCondition::Dirichlet && m.R.r0 != 0.0) flag("H.1", "Dirichlet conditions require R(0) = 0");
    if (!m.sigma.bounded()) flag("H.2", "sigma must be bounded");
    if (!m.sigma.lipschitz()) flag("H.2", "sigma must be globally Lipschitz");
    if (m.g.growth() > 2) flag("H.2", "g must have at most quadratic growth");
    for (const auto& t : m.drift)
      if (!t.b.lipschitz()) flag("H.2", "drift coefficient b must be globally Lipschitz");
    if (!(q > d)) flag("H.3", "the norm index q must exceed d");
  }
  for (const auto& t : m.drift) {
    if (static_cast<int>(t.k.size()) != d) {
      flag("H.4", "drift multi-index has the wrong dimension");
      continue;
    }
    int order = 0;
    bool odd = false;
    for (int v : t.k) {
      order += v;
      odd = odd || v < 0 || (v % 2) != 0;
    }
    if (odd) flag("H.4", "drift multi-index must have even components");
    if (order > 3) flag("H.4", "drift multi-index must satisfy |k| <= 3");
  }

  if (f.d != d) {
    flag("cov", "covariance dimension does not match d");
    return rep;
  }
  ConditionReport c;
  if (!m.lipschitz_only && (d == 4 || d == 5))
    c = covch_admissible(f, d, m.ch_epsilon);
  else
    c = cns_admissible(f, ex, d);
  rep.covariance.push_back(c);
  if (c.verdict != Verdict::Admissible)
    flag("cov", std::string("covariance condition ") + c.id + " is " + to_string(c.verdict));
  return rep;
}

}  // namespace spde
