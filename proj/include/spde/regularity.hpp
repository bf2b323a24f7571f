#pragma once

#include <string>
#include <vector>

#include "spde/covariance.hpp"
#include "spde/model.hpp"
#include "spde/noise.hpp"
#include "spde/solver.hpp"

namespace spde {

enum class SFAxis { Time, Space };

struct StructureFunction {
  SFAxis axis = SFAxis::Time;
  int space_axis = 0;
  bool oracle = false;
  std::vector<double> lags;
  std::vector<double> values;   // E|increment|^2, averaged over the probe points
  std::vector<double> stderr_;  // 0 in oracle mode
  std::size_t paths = 0;
};

struct SFOptions {
  SFAxis axis = SFAxis::Time;
  int space_axis = 0;
  double t_ref = 0.1;   // time of the base point
  double dt = 1e-3;     // resolution used for the lag range check
  double T = 0.0;       // horizon; 0 means t_ref + largest lag
  std::vector<std::vector<double>> points;  // probe points x (averaged)
  bool use_convolution = false;             // ensemble: use the tracked stochastic convolution
};

// E|u(t+h,x) - u(t,x)|^2 (or spatial increments) for du = -Lambda u dt + sigma0 dF
// with covariance of F taken from the backend; exact per-mode OU sums.
StructureFunction structure_function_oracle(const NoiseBackend& backend, double sigma0, const SpectralField& u0,
                                            const SFOptions& opt, const std::vector<double>& lags);
StructureFunction structure_function_ensemble(const std::vector<Trajectory>& ens, const SFOptions& opt,
                                              const std::vector<double>& lags);

struct HolderFit {
  double slope = 0.0;
  double exponent = 0.0;   // slope / 2
  double ci = 0.0;         // half-width on the exponent
  bool saturated = false;  // exponent >= 0.95: increments are differentiable-smooth
  std::size_t used = 0;
};

// least-squares slope of log S2 against log lag over [lo, hi]
HolderFit holder_exponent(const StructureFunction& sf, double lo, double hi);

// Hölder exponent menus of the regularity theorems
struct HolderBounds {
  double time_sup = 0.0;   // exponents strictly below are covered
  double space_sup = 0.0;
  std::string theorem;
  std::string note;
};
HolderBounds ch_holder_bounds(const ModelSpec& m, int d, double u0_order);
HolderBounds lipschitz_holder_bounds(const ModelSpec& m, const CovarianceSpec& f, int d);

// supremum of orders in (0,1) admitted by holder_condition, on a grid of step 1e-3
double admissible_holder_sup(const CovarianceSpec& f, int d, HolderWhich which);

struct IncrementOptions {
  SFAxis axis = SFAxis::Time;
  int space_axis = 0;
  double t_ref = 0.1;
  std::vector<std::vector<double>> points;
  std::vector<double> lags;
  double p = 1.0;
};

struct IncrementScaling {
  std::vector<double> lags, moments, stderr_;
  double slope = 0.0;          // fitted exponent of E|I - I'|^(2p)
  double admissible = 0.0;     // sup of admissible a (space) or b (time)
  double predicted = 0.0;      // p * admissible
  ConditionReport condition;
  std::size_t paths = 0;
};

// MC moments of increments of the stochastic convolution I = int G sigma(u) F
IncrementScaling increment_moment_scaling(const ModelSpec& m, const SolverConfig& cfg, const NoiseBackend& backend,
                                          const IncrementOptions& opt);

struct MomentTrack {
  std::vector<double> times, values, stderr_;
  double sup = 0.0;
  double sup_coarse = 0.0;  // same sup on every other recorded time
  bool unbounded = false;   // refinement more than doubles the sup
  std::size_t used = 0, exploded = 0;
};

// sup over recorded times of the empirical E ||u(t)||_q^p (exploded paths excluded)
MomentTrack moment_track(const std::vector<Trajectory>& ens, double q, double p);

enum class U0Mode { LqContinuity, InteriorHolder, BoundaryHolder };
const char* to_string(U0Mode m);

struct U0Report {
  U0Mode mode = U0Mode::LqContinuity;
  std::vector<double> lags, values;
  double slope = 0.0;
  double fitted_C = 0.0;   // max value / lag^target
  double target = 0.0;     // exponent from the lemma
  double at_zero = 0.0;    // smallest-lag value; -> 0 means continuity at t = 0
  bool pass = false;
  std::string note;
};

struct U0Options {
  double q = 2.0;        // LqContinuity
  double order = 0.5;    // Hölder order a of u0
  double s = 0.0;        // base time for the time modulus
  double t_space = 1e-3; // time at which the space modulus is taken
  double margin = 0.3;   // interior margin
  std::vector<double> lags;  // defaults chosen from the mode when empty
};

U0Report u0_regularity_check(const GridField& u0, BoundaryCondition bc, U0Mode mode, const U0Options& opt = {});

}  // namespace spde
