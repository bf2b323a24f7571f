#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spde/basis.hpp"
#include "spde/covariance.hpp"

namespace spde {

// Scalar coefficient c(t, x, u). The closed forms cover what the config
// format can express; Custom takes arbitrary callables.
class Coefficient {
 public:
  enum class Kind { Constant, Affine, Tanh, Sine, Quadratic, Custom };
  using Fn = std::function<double(double t, const double* x, double u)>;

  static Coefficient zero() { return constant(0.0); }
  static Coefficient constant(double a);
  static Coefficient affine(double a, double b);             // a + b u
  static Coefficient tanh(double a, double b, double c);     // a + b tanh(c u)
  static Coefficient sine(double a, double b, double c);     // a + b sin(c u)
  static Coefficient quadratic(double a, double b, double c);  // a + b u + c u^2
  // flags describe growth (0 bounded, 1 linear, 2 quadratic) and Lipschitz-ness
  static Coefficient custom(Fn f, Fn du, int growth, bool lipschitz);

  Kind kind() const { return kind_; }
  double a() const { return a_; }
  double b() const { return b_; }
  double c() const { return c_; }

  double value(double t, const double* x, double u) const;
  double du(double t, const double* x, double u) const;
  bool depends_on_tx() const { return kind_ == Kind::Custom; }

  bool is_zero() const { return kind_ == Kind::Constant && a_ == 0.0; }
  bool is_constant() const;
  bool bounded() const { return growth() == 0; }
  int growth() const;
  bool lipschitz() const;
  bool differentiable() const { return kind_ != Kind::Custom || static_cast<bool>(du_); }
  // inf over u of |c|, 0 when not bounded away from zero
  double abs_lower_bound() const;
  std::string describe() const;

 private:
  Kind kind_ = Kind::Constant;
  double a_ = 0.0, b_ = 0.0, c_ = 0.0;
  Fn f_, du_;
  int growth_ = 0;
  bool lipschitz_ = true;
};

struct Cubic {
  double r3 = 0.0, r2 = 0.0, r1 = 0.0, r0 = 0.0;

  static Cubic double_well() { return {1.0, 0.0, -1.0, 0.0}; }  // u^3 - u
  bool is_zero() const { return r3 == 0.0 && r2 == 0.0 && r1 == 0.0 && r0 == 0.0; }
  double value(double u) const { return ((r3 * u + r2) * u + r1) * u + r0; }
  double deriv(double u) const { return (3.0 * r3 * u + 2.0 * r2) * u + r1; }
  // W with W' = R, W(0) = 0
  double potential(double u) const { return (((r3 / 4.0) * u + r2 / 3.0) * u + r1 / 2.0) * u * u + r0 * u; }
};

struct DriftTerm {
  MultiIndex k;  // derivative orders D^k applied to b(u)
  Coefficient b;
};

struct ModelSpec {
  Coefficient sigma = Coefficient::zero();
  Cubic R;
  Coefficient g = Coefficient::zero();
  std::vector<DriftTerm> drift;
  BoundaryCondition bc = BoundaryCondition::Neumann;
  bool lipschitz_only = false;
  double ch_epsilon = 0.2;  // epsilon of the covariance condition used for d = 4, 5

  bool linear() const;  // R = g = b = 0
  bool has_nonlinear_drift() const;
};

struct InitialCondition {
  enum class Kind { Zero, Constant, Mode, Random, Coefficients };
  Kind kind = Kind::Zero;
  double value = 0.0;     // Constant level, Mode/Random amplitude
  MultiIndex mode;        // Mode
  double decay = 2.0;     // Random: amplitude * (1 + lambda_k)^(-decay/2) * N(0,1)
  std::uint64_t seed = 0;
  std::vector<double> coeffs;

  SpectralField build(const Basis& b) const;
};

struct ValidationIssue {
  std::string id;  // H.1 ... H.4, cov, q
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> violations;
  std::vector<ConditionReport> covariance;
  bool ok() const { return violations.empty(); }
};

// Hypothesis gates for the CH model and the Lipschitz model.
ValidationReport validate_model(const ModelSpec& m, const CovarianceSpec& f, int d, double q);

}  // namespace spde
