#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "spde/basis.hpp"
#include "spde/covariance.hpp"
#include "spde/rng.hpp"

namespace spde {

enum class NoiseKind { SpectralCholesky, DiagonalSpectral, GridCellCholesky, WhiteSpectral };
const char* to_string(NoiseKind k);
NoiseKind parse_noise_kind(const std::string& s);

struct BackendOptions {
  int cells_per_axis = 0;  // GridCellCholesky; 0 picks 8M (d=1) or 2M
  GramOptions gram;
};

// Spectral noise increments dF_k = sum_j L_kj dB_j with independent Brownian B_j.
class NoiseBackend {
 public:
  NoiseKind kind() const { return kind_; }
  const Basis& basis() const { return basis_; }
  const CovarianceSpec& covariance_spec() const { return f_; }
  std::size_t rank() const { return rank_; }  // number of driving Brownian motions
  bool diagonal() const { return kind_ == NoiseKind::DiagonalSpectral || kind_ == NoiseKind::WhiteSpectral; }

  // out = L xi
  void apply(const double* xi, double* out) const;
  // column j of L
  void column(std::size_t j, double* out) const;
  Eigen::MatrixXd covariance() const;  // L L^T
  const Eigen::MatrixXd& factor() const { return L_; }
  const std::vector<double>& diag_factor() const { return diag_; }

  double factor_error = 0.0;       // ||L L^T - Q||_F / ||Q||_F against the matrix factored
  double min_eigenvalue = 0.0;     // of Q before any repair
  double dropped_offdiag = 0.0;    // diagonal approximation: relative mass left out (measured)
  bool used_eigen_factor = false;  // Cholesky failed, V sqrt(Lambda) used

  friend NoiseBackend make_backend(const CovarianceSpec& f, const Basis& basis, NoiseKind kind,
                                   const BackendOptions& opt);

 private:
  NoiseKind kind_ = NoiseKind::WhiteSpectral;
  Basis basis_;
  CovarianceSpec f_;
  std::size_t rank_ = 0;
  Eigen::MatrixXd L_;
  std::vector<double> diag_;
};

NoiseKind default_noise_kind(const CovarianceSpec& f, int d);
NoiseBackend make_backend(const CovarianceSpec& f, const Basis& basis, NoiseKind kind, const BackendOptions& opt = {});
NoiseBackend make_backend(const CovarianceSpec& f, const Basis& basis);

struct NoiseIncrement {
  double dt = 0.0;
  std::vector<double> coeffs;  // per mode
  std::vector<double> xi;      // driving normals (scaled by sqrt(dt)), length rank
};

NoiseIncrement sample_increment(const NoiseBackend& b, double dt, const CounterNormal& rng, std::uint64_t path,
                                std::uint64_t step);
void sample_increment_into(const NoiseBackend& b, double dt, const CounterNormal& rng, std::uint64_t path,
                           std::uint64_t step, double* coeffs, double* dB, std::vector<double>& scratch);

struct CovarianceTestResult {
  double estimate = 0.0, target = 0.0, stderr_ = 0.0, z = 0.0;
  std::size_t samples = 0;
};

// MC of E[F(phi)F(psi)] over [0,t] vs t <phi, psi>_E from an independently computed gram matrix.
CovarianceTestResult empirical_covariance_test(const NoiseBackend& b, const GridField& phi, const GridField& psi,
                                               double t, std::size_t n, std::uint64_t seed, int steps = 8);

// cell-pair covariance integral over two cells of side h whose offsets are
// delta (integer multiples of h)
double cell_pair_covariance(const CovarianceSpec& f, double h, const std::vector<int>& delta);

}  // namespace spde
