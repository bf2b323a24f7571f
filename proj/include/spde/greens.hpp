#pragma once

#include <optional>
#include <vector>

#include "spde/basis.hpp"
#include "spde/kernels.hpp"

namespace spde {

struct KernelExponents {
  double alpha = 0.25, beta = 4.0 / 3.0, gamma = 1.0 / 3.0, delta = 0.25, eta = 1.0;

  // operator of order 2n in dimension d
  static KernelExponents petrovskii(int n, int d);
  static KernelExponents cahn_hilliard(int d) { return petrovskii(2, d); }
};

inline constexpr double kKernelTimeFloor = 1e-6;
inline constexpr int kDefaultKernelModeCap = 4096;

// Eigenexpansion of the biharmonic heat kernel; modes with lambda^2 tau past
// ln(1e16) are dropped, at most M per axis.
double green_eval(double t, const std::vector<double>& x, double s, const std::vector<double>& y,
                  BoundaryCondition bc, int M);
// D_x^a d_t^b G(tau, x, y)
double green_derivative(double tau, const std::vector<double>& x, const std::vector<double>& y,
                        BoundaryCondition bc, int M, const MultiIndex& a, int b);

SpectralField apply_semigroup(const SpectralField& u0, double t);

struct KernelProbe {
  double tau;
  std::vector<double> x, y;
};

// log-spaced taus; x fixed at the centre, y along the diagonal direction
std::vector<KernelProbe> make_kernel_probes(int d, double tau_min, double tau_max, int n_tau, int n_r,
                                            double r_max = 1.2);

struct KernelBoundFit {
  double C = 0.0;
  double c = 0.0;
  double c_tight = 0.0;
  double max_violation = 0.0;
  std::size_t probes = 0;
};

struct KernelSample {
  double tau, dist, value, scaled;  // scaled = |value| * tau^(alpha + |a| delta + b eta)
};

std::vector<KernelSample> sample_kernel(const KernelExponents& e, const MultiIndex& a, int b,
                                        const std::vector<KernelProbe>& probe, BoundaryCondition bc, int M,
                                        Exec exec = Exec::Parallel);

KernelBoundFit fit_kernel_bound(const KernelExponents& e, const MultiIndex& a, int b,
                                const std::vector<KernelProbe>& probe, BoundaryCondition bc,
                                int M = kDefaultKernelModeCap, std::optional<double> c = std::nullopt,
                                Exec exec = Exec::Parallel);

// max over probes of |D^a d_t^b G| / (C tau^-(..) exp(-c xi)) - 1 for a fitted bound
double kernel_bound_violation(const KernelBoundFit& fit, const KernelExponents& e, const MultiIndex& a, int b,
                              const std::vector<KernelProbe>& probe, BoundaryCondition bc,
                              int M = kDefaultKernelModeCap);

struct DiagonalLowerResult {
  double C0 = 0.0;
  double ratio_spread = 0.0;
  std::size_t probes = 0;
};

DiagonalLowerResult diagonal_lower_check(BoundaryCondition bc, int d, double tau_min, double tau_max,
                                         double interior_margin, int n_tau = 13, int n_x = 5,
                                         int M = kDefaultKernelModeCap, Exec exec = Exec::Parallel);

// Composition of G(t,.;r,.) and G(r,.;s,.) over z done through orthonormality,
// compared with G(t,.;s,.) at the same truncation.
double chapman_kolmogorov_check(double t, double r, double s, const Basis& left, const Basis& right,
                                int n_probe = 7);

}  // namespace spde
