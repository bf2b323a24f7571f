#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "spde/basis.hpp"
#include "spde/greens.hpp"
#include "spde/kernels.hpp"

namespace spde {

struct CovarianceSpec {
  enum class Kind { WhiteNoise, Constant, RieszPower, Tabulated };

  Kind kind = Kind::WhiteNoise;
  int d = 1;
  double c = 1.0;  // Constant
  double B = 0.0;  // RieszPower
  std::vector<double> r, f;  // Tabulated radial samples, r ascending, > 0

  static CovarianceSpec white(int d);
  static CovarianceSpec constant(int d, double c);
  // B >= d is representable so that thresholds can be probed from both sides;
  // such an f is not locally integrable and sampling refuses it.
  static CovarianceSpec riesz(int d, double B);
  static CovarianceSpec tabulated(int d, std::vector<double> r, std::vector<double> f);

  double value(double rho) const;
  // power-law exponent at the origin (B, 0, or estimated from the first samples)
  double singular_exponent() const;
  bool locally_integrable() const;
  double max_radius() const;
  std::string describe() const;
};

const char* to_string(CovarianceSpec::Kind k);

enum class Verdict { Admissible, Inadmissible, Borderline };
const char* to_string(Verdict v);

struct ConditionReport {
  std::string id;
  Verdict verdict = Verdict::Inadmissible;
  double value = std::numeric_limits<double>::quiet_NaN();  // integral when finite
  double exponent = 0.0;  // e in |v|^-e
  int log_power = 0;
  double margin = 0.0;    // d - B - e for power laws: > 0 finite
  std::string note;
};

struct RadialIntegral {
  bool divergent = false;
  double value = std::numeric_limits<double>::infinity();
  double margin = 0.0;
};

inline constexpr double kThresholdTol = 1e-12;

double sphere_area(int d);

// integral over B_d(0,r0) of f(v) |v|^-e ln(1/|v|)^kappa dv
RadialIntegral radial_integral(const CovarianceSpec& f, double e, int kappa, double r0);

ConditionReport cns_admissible(const CovarianceSpec& f, const KernelExponents& ex, int d);

enum class HolderWhich { Space, Time };
ConditionReport holder_condition(const CovarianceSpec& f, const KernelExponents& ex, int d, HolderWhich which,
                                 double order);
ConditionReport cprime3(const CovarianceSpec& f, const KernelExponents& ex, int d, double q, double p);
ConditionReport covch_admissible(const CovarianceSpec& f, int d, double eps);

RadialIntegral I_tau(const CovarianceSpec& f, int d, double tau);

struct C1Result {
  bool pass = true;
  double witness_u = 0.0, witness_v = 0.0;  // radii |u|, |v| of a failing pair
  double fu = 0.0, fv = 0.0;
  std::size_t checked = 0;
};
using RadialFunction = std::function<double(double)>;
// pairs are (|u|, |v|); only pairs with |v| <= c1 |u| constrain
C1Result check_c1(const RadialFunction& f, double C1, double c1, const std::vector<std::pair<double, double>>& pairs);
C1Result check_c1(const CovarianceSpec& f, double C1, double c1, const std::vector<std::pair<double, double>>& pairs);
std::vector<std::pair<double, double>> c1_sample_pairs(double r_max, int n);

struct PsiResult {
  bool divergent = false;
  double value = std::numeric_limits<double>::infinity();
  double exponent = 0.0;  // t-power of psi near 0
  double closed_form = std::numeric_limits<double>::quiet_NaN();
};

struct PsiOptions {
  double c = 1.0;
  double R = 1.0;
};

PsiResult psi_integral(const CovarianceSpec& f, const KernelExponents& ex, int d, double T, double shift,
                       PsiOptions opt = {});

struct GramOptions {
  int nodes_s = 0;  // 0: chosen from M and d
  int nodes_t = 0;
  Exec exec = Exec::Parallel;
};

struct GramResult {
  Eigen::MatrixXd Q;
  double min_eigenvalue = 0.0;  // before any clipping
  bool clipped = false;
};

// Q_kl = integral over Q x Q of e_k(y) f(y - z) e_l(z)
GramResult gram_matrix(const CovarianceSpec& f, const Basis& basis, GramOptions opt = {});
std::vector<double> gram_diagonal(const CovarianceSpec& f, const Basis& basis, GramOptions opt = {});
// relative Frobenius mass of the off-diagonal part of the full Q at M per axis
double gram_offdiagonal_mass(const CovarianceSpec& f, int d, BoundaryCondition bc, int M);

// analytic 1D overlap integral_0^(pi-w) e_k(z+w) e_l(z) dz for w in [0,pi]
double overlap_1d(int k, int l, double w, BoundaryCondition bc);

}  // namespace spde
