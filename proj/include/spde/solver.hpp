#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "spde/basis.hpp"
#include "spde/model.hpp"
#include "spde/noise.hpp"

namespace spde {

enum class Scheme { ExponentialEuler, SemiImplicit };
const char* to_string(Scheme s);
Scheme parse_scheme(const std::string& s);

struct SolverConfig {
  int d = 1;
  int M = 16;
  double dt = 1e-3;
  double T = 0.1;
  Scheme scheme = Scheme::ExponentialEuler;
  std::optional<double> truncation_level;  // n; none means K = 1
  double q = 2.0;                          // norm index for tau_n (inf allowed)
  std::size_t ensemble = 1;
  std::uint64_t seed = 0;
  InitialCondition u0;

  int record_every = 1;         // store every k-th state (the last one always)
  bool record_noise = false;    // keep the spectral noise increments dF
  bool stop_at_tau = true;      // stop integrating at tau_n
  bool track_convolution = false;  // also integrate the stochastic convolution alone

  Basis basis(BoundaryCondition bc) const { return Basis(d, M, bc); }
  std::size_t steps() const;
};

struct Trajectory {
  Basis basis;
  std::uint64_t path = 0;
  double dt = 0.0;
  std::vector<double> times;
  std::vector<std::size_t> step_index;        // step number of each recorded state
  std::vector<std::vector<double>> states;
  std::vector<double> norms;                  // L^q norm at the recorded times
  std::vector<std::vector<double>> noise;     // dF per step when recorded
  std::vector<std::vector<double>> convolution;  // stochastic convolution, when tracked
  std::optional<double> stop_time;            // tau_n
  bool exploded = false;
  double last_valid_time = 0.0;
  std::size_t steps_taken = 0;

  SpectralField state(std::size_t i) const { return SpectralField(basis, states[i]); }
};

struct PreconditionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BlowUpError : std::runtime_error {
  double last_valid_time;
  BlowUpError(const std::string& m, double t) : std::runtime_error(m), last_valid_time(t) {}
};

inline constexpr double kExplosionNorm = 1e12;

// C^1 cutoff: 1 on (-inf, n], 0 on [n+1, inf), cubic Hermite between
double truncation_weight(double n, double r);

// phi_1(z) = (e^z - 1)/z, phi_2(z) = (e^z - 1 - z)/z^2
double phi1(double z);
double phi2(double z);

// exact variance of an OU mode started at 0: q (1 - e^(-2 mu t)) / (2 mu), q t if mu = 0
double ou_mode_variance(double q, double mu, double t);

// Per-path workspace; grid buffers on the padded grid.
struct StepWorkspace {
  std::vector<double> ug, g1, g2, c1, c2, noise;
};

// Precomputed propagators and transforms for one (model, config, backend).
class Stepper {
 public:
  Stepper(const ModelSpec& model, const SolverConfig& cfg, const NoiseBackend* backend);

  const Basis& basis() const { return basis_; }
  const Grid& grid() const { return tr_.grid(); }
  const ModelSpec& model() const { return model_; }
  const SolverConfig& config() const { return cfg_; }
  const NoiseBackend* backend() const { return backend_; }
  bool needs_grid() const { return needs_grid_; }

  // linear part per mode
  const std::vector<double>& propagator() const { return E_; }
  const std::vector<double>& drift_weight() const { return phi_dt_; }
  const std::vector<double>& noise_weight() const { return w_; }

  // u on the padded grid into ws.ug; returns the L^q norm (coefficient L2 when no grid is needed and q = 2)
  double evaluate(const double* u, StepWorkspace& ws) const;
  // N(u) with ws.ug already evaluated
  void drift(double t, double K, StepWorkspace& ws, double* N) const;
  // projected sigma(u) dF with ws.ug already evaluated
  void noise_term(double t, const double* dF, StepWorkspace& ws, double* out) const;
  // out = E u + phi_1 dt N + w noise (or the semi-implicit variant)
  void combine(const double* u, const double* N, const double* noise, double* out) const;

  // one full step; returns the norm of u used for K
  double step(const double* u, double t, const double* dF, StepWorkspace& ws, double* out) const;

  // linearizations about the state held in base.ug
  void drift_tangent(double t, const StepWorkspace& base, const double* delta, StepWorkspace& tmp, double* out) const;
  void noise_tangent(double t, const StepWorkspace& base, const double* dF, const double* delta, StepWorkspace& tmp,
                     double* out) const;

  const SpectralTransform& transform() const { return tr_; }

 private:
  ModelSpec model_;
  SolverConfig cfg_;
  const NoiseBackend* backend_;
  Basis basis_;
  SpectralTransform tr_;
  bool needs_grid_ = false;
  std::vector<double> E_, phi_dt_, w_, lap_, semi_;
  std::vector<std::vector<double>> drift_symbol_;
  std::vector<std::vector<double>> coords_;  // grid coordinates, only for (t,x)-dependent coefficients
};

// The covariance gate of simulate(): covCH for CH models in d = 4, 5, the
// sufficient CNS condition otherwise. Throws PreconditionError.
void check_simulation_preconditions(const ModelSpec& model, const SolverConfig& cfg, const CovarianceSpec& f);

SpectralField step(const SpectralField& state, double t, double dt, const ModelSpec& model, const NoiseIncrement& noise,
                   const SolverConfig& cfg, const NoiseBackend* backend = nullptr);

Trajectory simulate(const ModelSpec& model, const SolverConfig& cfg, const NoiseBackend& backend,
                    std::uint64_t path = 0, bool force = false);
Trajectory simulate(const Stepper& stepper, std::uint64_t path);

std::vector<Trajectory> run_ensemble(const ModelSpec& model, const SolverConfig& cfg, const NoiseBackend& backend,
                                     bool force = false, Exec exec = Exec::Parallel);

struct PicardResult {
  std::vector<std::vector<double>> states;  // fixed point at every step
  std::vector<double> deltas;               // sup_t ||u_{n+1} - u_n||_q
  std::vector<double> ratios;
  bool converged = false;
  bool non_contraction = false;
  int iterations = 0;
};

PicardResult picard_solve(const ModelSpec& model, const SolverConfig& cfg, const NoiseBackend& backend, double tol,
                          int max_iter, std::uint64_t path = 0);

enum class ConvKernel { G, LaplacianG, DerivativeG };

// J(v)(t0, t) = int_t0^t int G(t,x;s,y) v(s,y) dy ds for v linear in time
// between the given nodes, done exactly per mode.
SpectralField deterministic_convolution(const std::vector<double>& times, const std::vector<GridField>& v,
                                        const Basis& basis, ConvKernel kernel, double t0, double t,
                                        const MultiIndex& a = {});

struct ConvolutionBoundResult {
  double C = 0.0;           // max ratio LHS / RHS so far
  double exponent = 0.0;    // -(alpha + |a| delta) + gamma d / (beta r)
  std::size_t samples = 0;
  std::size_t violations = 0;  // samples above a supplied C
  std::vector<double> ratios;
};

struct ConvolutionProbe {
  int d = 1;
  int M = 16;
  BoundaryCondition bc = BoundaryCondition::Neumann;
  double T = 0.1;
  int time_nodes = 9;
  double decay = 1.0;  // random v: coefficient scale (1 + lambda)^(-decay/2)
};

ConvolutionBoundResult convolution_bound_check(const ConvolutionProbe& probe, ConvKernel kernel, double q,
                                               double rho, std::size_t n_samples, std::uint64_t seed,
                                               std::optional<double> fitted_C = std::nullopt,
                                               const MultiIndex& a = {});

struct EnergySeries {
  std::vector<double> times;
  std::vector<double> l2_sq;          // ||v||_2^2
  std::vector<double> lap_integral;   // int_0^t ||Laplace v||_2^2 ds (trapezoid)
  std::vector<double> mass_sq;        // m(v)^2, Neumann only
  std::vector<double> inv_sqrt_a_sq;  // ||A^(-1/2) v~||_2^2, Neumann only
  std::vector<double> ch_energy;      // int 1/2 |grad v|^2 + W(v), when R is given
  bool finite = true;
};

double ch_energy(const SpectralField& u, const Cubic& R);
EnergySeries energy_diagnostics(const Trajectory& traj, const Cubic* R = nullptr);

}  // namespace spde
