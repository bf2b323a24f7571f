#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "spde/covariance.hpp"
#include "spde/solver.hpp"

namespace spde {

// D_{r,j} u(t0, .) in coefficients, for the driving Brownian motions j of the
// backend and a thinned set of step indices r.
struct TangentState {
  Basis basis;
  double t0 = 0.0;
  double dt = 0.0;
  std::size_t n0 = 0;    // t0 = n0 dt
  std::size_t thin = 1;
  std::size_t rank = 0;
  std::vector<std::size_t> r_steps;  // step m: derivative w.r.t. the increment over [t_m, t_{m+1})
  std::vector<double> r_weight;      // dt times the number of steps the row stands for
  std::vector<double> data;          // [row][j][k]
  std::vector<double> lead;          // same layout: G(t0,.;r,.) sigma(u(r,.)) part only

  const double* D(std::size_t row, std::size_t j) const { return data.data() + (row * rank + j) * basis.mode_count(); }
  const double* L(std::size_t row, std::size_t j) const { return lead.data() + (row * rank + j) * basis.mode_count(); }
};

struct TangentOptions {
  std::size_t thin = 1;
  double r_min = 0.0;  // only rows with t_m >= r_min
  double r_max = std::numeric_limits<double>::infinity();  // rows past t0 are kept (and zero)
};

TangentState tangent_propagate(const Trajectory& traj, const Stepper& stepper, double t0,
                               const TangentOptions& opt = {});

struct MalliavinMatrix {
  Eigen::MatrixXd gamma;
  std::vector<std::vector<double>> points;
  double t0 = 0.0;
  Eigen::VectorXd eigenvalues;     // before clipping
  double min_eigenvalue = 0.0;
  bool clipped = false;
  double thinning_delta = 0.0;     // ||Gamma(2k) - Gamma(k)||_F / ||Gamma(k)||_F
};

MalliavinMatrix malliavin_matrix(const TangentState& tangent, const std::vector<std::vector<double>>& points);

struct DecompositionTerms {
  double tau = 0.0;
  double I1 = 0.0;
  Eigen::MatrixXd I2;  // off-diagonal entries used
  std::vector<double> I3, I4;
  double gamma_vv = std::numeric_limits<double>::quiet_NaN();  // <Gamma v, v> over the window
  double lower_bound = 0.0;  // I1/4 + 1/4 sum v_i v_j I2 - l/2 sum v_i^2 I3 - l sum v_i^2 I4
  double margin_needed = 0.0;
};

inline constexpr double kDefaultC2 = 0.25;

// The four terms over [t0 - tau, t0]. tangent may be null, then I4 and
// gamma_vv are NaN.
DecompositionTerms decomposition_terms(const Trajectory& traj, const Stepper& stepper, const TangentState* tangent,
                                       const std::vector<std::vector<double>>& points, double t0, double tau,
                                       const std::vector<double>& v, double C2 = kDefaultC2);

// I1 for several windows from one pass (prefix sums over steps)
std::vector<double> i1_sweep(const Trajectory& traj, const Stepper& stepper,
                             const std::vector<std::vector<double>>& points, double t0, const std::vector<double>& taus,
                             const std::vector<double>& v, double C2 = kDefaultC2);

// slope of log I(C2 tau^(1/4 + nu)) against log tau over the taus
double analytic_i1_slope(const CovarianceSpec& f, int d, const std::vector<double>& taus, double nu,
                         double C2 = kDefaultC2);

struct DensityReport {
  double min_eigenvalue = 0.0;
  double fraction_positive = 0.0;
  bool analytic_holds = false;
  std::string analytic_note;
  std::string verdict;  // nondegenerate, degenerate, inconclusive
};

// Limit condition of the density theorem for f and nu, decided from the
// exponents for power laws and numerically otherwise.
bool density_limit_condition(const CovarianceSpec& f, int d, double nu, std::string* note = nullptr);

DensityReport density_criterion(const std::vector<MalliavinMatrix>& gammas, double sigma_lower,
                                const CovarianceSpec& f, int d, double nu);

struct MalliavinRun {
  std::vector<MalliavinMatrix> gammas;
  std::vector<DecompositionTerms> terms;
  std::size_t refused = 0;  // paths stopped or exploded before t0
};

// simulate, propagate and assemble per path
MalliavinRun malliavin_ensemble(const ModelSpec& model, const SolverConfig& cfg, const NoiseBackend& backend,
                                double t0, const std::vector<std::vector<double>>& points, const TangentOptions& topt,
                                double tau = -1.0, bool force = false, Exec exec = Exec::Parallel);

}  // namespace spde
