#include "spde/noise.hpp"

#include <spdlog/spdlog.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "spde/quadrature.hpp"

namespace spde {

using std::numbers::pi;

const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::SpectralCholesky:
      return "spectral_cholesky";
    case NoiseKind::DiagonalSpectral:
      return "diagonal_spectral";
    case NoiseKind::GridCellCholesky:
      return "grid_cell_cholesky";
    case NoiseKind::WhiteSpectral:
      return "white_spectral";
  }
  return "?";
}

NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "spectral_cholesky") return NoiseKind::SpectralCholesky;
  if (s == "diagonal_spectral") return NoiseKind::DiagonalSpectral;
  if (s == "grid_cell_cholesky") return NoiseKind::GridCellCholesky;
  if (s == "white_spectral") return NoiseKind::WhiteSpectral;
  throw std::invalid_argument("unknown noise backend '" + s + "'");
}

void NoiseBackend::apply(const double* xi, double* out) const {
  const std::size_t N = basis_.mode_count();
  if (diagonal()) {
    for (std::size_t k = 0; k < N; ++k) out[k] = diag_[k] * xi[k];
    return;
  }
  Eigen::Map<const Eigen::VectorXd> x(xi, static_cast<Eigen::Index>(rank_));
  Eigen::Map<Eigen::VectorXd> o(out, static_cast<Eigen::Index>(N));
  o.noalias() = L_ * x;
}

void NoiseBackend::column(std::size_t j, double* out) const {
  const std::size_t N = basis_.mode_count();
  if (diagonal()) {
    for (std::size_t k = 0; k < N; ++k) out[k] = k == j ? diag_[k] : 0.0;
    return;
  }
  for (std::size_t k = 0; k < N; ++k) out[k] = L_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
}

Eigen::MatrixXd NoiseBackend::covariance() const {
  if (diagonal()) {
    Eigen::VectorXd v(diag_.size());
    for (std::size_t k = 0; k < diag_.size(); ++k) v(k) = diag_[k] * diag_[k];
    return v.asDiagonal();
  }
  return L_ * L_.transpose();
}

NoiseKind default_noise_kind(const CovarianceSpec& f, int d) {
  if (f.kind == CovarianceSpec::Kind::WhiteNoise) return NoiseKind::WhiteSpectral;
  return d <= 2 ? NoiseKind::SpectralCholesky : NoiseKind::DiagonalSpectral;
}

namespace {

// factor Q = L L^T; Cholesky first, eigen factor when Q is only semidefinite
Eigen::MatrixXd factor_psd(const Eigen::MatrixXd& Q, bool& used_eigen) {
  used_eigen = false;
  Eigen::LLT<Eigen::MatrixXd> llt(Q);
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXd L = llt.matrixL();
    const double err = (L * L.transpose() - Q).norm() / std::max(Q.norm(), 1e-300);
    if (err <= 1e-10) return L;
  }
  used_eigen = true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q);
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
}

double tent_box_integral(const CovarianceSpec& f, int d, double h, const std::vector<double>& lo,
                         const std::vector<double>& s0, const std::vector<double>& s1) {
  // integral over prod [lo_i, lo_i + h] of f(|w|) prod (s0_i + s1_i w_i)
  bool corner = true;
  for (double v : lo) corner = corner && v == 0.0;
  double total = 0.0;
  if (corner) {
    const double Bw = f.singular_exponent();
    const quad::CornerRule cr = quad::corner_rule(d, h, Bw, 14, 12);
    for (std::size_t n = 0; n < cr.size(); ++n) {
      double v = cr.weight[n];
      if (f.kind != CovarianceSpec::Kind::RieszPower) v *= f.value(cr.radius[n]) * std::pow(cr.radius[n], Bw);
      for (int i = 0; i < d; ++i) {
        const double w = cr.values[cr.index[n * d + i]];
        v *= s0[i] + s1[i] * w;
      }
      total += v;
    }
    return total;
  }
  const quad::Rule g = quad::gauss_legendre(10, 0.0, h);
  std::size_t m = 1;
  for (int i = 0; i < d; ++i) m *= g.x.size();
  std::vector<double> w(d);
  for (std::size_t fl = 0; fl < m; ++fl) {
    std::size_t r = fl;
    double wt = 1.0, rr = 0.0;
    for (int i = d - 1; i >= 0; --i) {
      const std::size_t j = r % g.x.size();
      r /= g.x.size();
      w[i] = lo[i] + g.x[j];
      wt *= g.w[j] * (s0[i] + s1[i] * w[i]);
      rr += w[i] * w[i];
    }
    total += wt * f.value(std::sqrt(rr));
  }
  return total;
}

}  // namespace

double cell_pair_covariance(const CovarianceSpec& f, double h, const std::vector<int>& delta) {
  const int d = static_cast<int>(delta.size());
  if (f.kind == CovarianceSpec::Kind::Constant) return f.c * std::pow(h, 2.0 * d);
  if (f.kind == CovarianceSpec::Kind::WhiteNoise) {
    for (int v : delta)
      if (v != 0) return 0.0;
    return std::pow(h, d);
  }
  if (f.kind == CovarianceSpec::Kind::RieszPower && d == 1) {
    const double B = f.B;
    auto F = [&](double w) { return std::pow(std::abs(w), 2.0 - B) / ((1.0 - B) * (2.0 - B)); };
    const double dl = std::abs(delta[0]);
    return F((dl + 1) * h) - 2.0 * F(dl * h) + F((dl - 1) * h);
  }
  // tent weights per axis: (h - |w - delta h|) on two pieces, reflected onto w >= 0
  struct Piece {
    double lo, s0, s1;
  };
  std::vector<std::vector<Piece>> pieces(d);
  for (int i = 0; i < d; ++i) {
    const double c = std::abs(delta[i]) * h;
    // left piece [c - h, c]: weight h - c + w ; right piece [c, c + h]: weight h + c - w
    const double a0 = c - h;
    if (a0 >= 0.0) {
      pieces[i].push_back({a0, h - c, 1.0});
    } else {
      // [-h, 0] reflected: w -> -w, weight h - c - w on [0, h]
      pieces[i].push_back({0.0, h - c, -1.0});
    }
    pieces[i].push_back({c, h + c, -1.0});
  }
  double total = 0.0;
  const std::size_t ncomb = std::size_t(1) << d;
  std::vector<double> lo(d), s0(d), s1(d);
  for (std::size_t m = 0; m < ncomb; ++m) {
    for (int i = 0; i < d; ++i) {
      const Piece& p = pieces[i][(m >> i) & 1];
      lo[i] = p.lo;
      s0[i] = p.s0;
      s1[i] = p.s1;
    }
    total += tent_box_integral(f, d, h, lo, s0, s1);
  }
  return total;
}

NoiseBackend make_backend(const CovarianceSpec& f, const Basis& basis) {
  return make_backend(f, basis, default_noise_kind(f, basis.dim()));
}

NoiseBackend make_backend(const CovarianceSpec& f, const Basis& basis, NoiseKind kind, const BackendOptions& opt) {
  if (f.d != basis.dim()) throw DomainError("covariance dimension does not match basis");
  NoiseBackend b;
  b.kind_ = kind;
  b.basis_ = basis;
  b.f_ = f;
  const std::size_t N = basis.mode_count();
  switch (kind) {
    case NoiseKind::WhiteSpectral: {
      if (f.kind != CovarianceSpec::Kind::WhiteNoise)
        throw DomainError("white spectral backend requires a white-noise covariance");
      b.diag_.assign(N, 1.0);
      b.rank_ = N;
      b.min_eigenvalue = 1.0;
      break;
    }
    case NoiseKind::DiagonalSpectral: {
      const std::vector<double> q = gram_diagonal(f, basis, opt.gram);
      b.diag_.resize(N);
      for (std::size_t k = 0; k < N; ++k) b.diag_[k] = std::sqrt(std::max(q[k], 0.0));
      b.rank_ = N;
      b.min_eigenvalue = *std::min_element(q.begin(), q.end());
      if (f.kind != CovarianceSpec::Kind::WhiteNoise) {
        // 2 modes/axis couple nothing by parity; 3 is the smallest informative size, too slow in d = 5
        if (basis.dim() <= 4) {
          b.dropped_offdiag = gram_offdiagonal_mass(f, basis.dim(), basis.bc(), 3);
          spdlog::warn("noise: diagonal approximation of Q in d={}, dropped off-diagonal mass {:.3e} (measured at 3 modes/axis)",
                       basis.dim(), b.dropped_offdiag);
        } else {
          b.dropped_offdiag = std::numeric_limits<double>::quiet_NaN();
          spdlog::warn("noise: diagonal approximation of Q in d={}, dropped off-diagonal mass not measured", basis.dim());
        }
      }
      break;
    }
    case NoiseKind::SpectralCholesky: {
      const GramResult g = gram_matrix(f, basis, opt.gram);
      b.min_eigenvalue = g.min_eigenvalue;
      b.L_ = factor_psd(g.Q, b.used_eigen_factor);
      b.rank_ = static_cast<std::size_t>(b.L_.cols());
      b.factor_error = (b.L_ * b.L_.transpose() - g.Q).norm() / std::max(g.Q.norm(), 1e-300);
      if (b.factor_error > 1e-8) throw std::runtime_error("noise: factorization failed after PSD repair");
      break;
    }
    case NoiseKind::GridCellCholesky: {
      if (f.kind == CovarianceSpec::Kind::WhiteNoise) throw DomainError("grid-cell backend needs a correlation function");
      if (!f.locally_integrable()) throw DomainError("grid-cell backend: correlation function not locally integrable");
      const int d = basis.dim(), M = basis.modes_per_axis();
      const int n = opt.cells_per_axis > 0 ? opt.cells_per_axis : (d == 1 ? 8 * M : 2 * M);
      const double h = pi / n;
      std::size_t Nc = 1;
      for (int i = 0; i < d; ++i) Nc *= static_cast<std::size_t>(n);
      // translation invariance: covariance depends on |offset| per axis only
      std::vector<double> table(Nc);
      for (std::size_t fl = 0; fl < Nc; ++fl) {
        std::vector<int> delta(d);
        std::size_t r = fl;
        for (int i = d - 1; i >= 0; --i) {
          delta[i] = static_cast<int>(r % n);
          r /= n;
        }
        table[fl] = cell_pair_covariance(f, h, delta);
      }
      auto cell_coords = [&](std::size_t c) {
        std::vector<int> a(d);
        for (int i = d - 1; i >= 0; --i) {
          a[i] = static_cast<int>(c % n);
          c /= n;
        }
        return a;
      };
      Eigen::MatrixXd C(Nc, Nc);
      for (std::size_t a = 0; a < Nc; ++a) {
        const auto ca = cell_coords(a);
        for (std::size_t bb = a; bb < Nc; ++bb) {
          const auto cb = cell_coords(bb);
          std::size_t off = 0;
          for (int i = 0; i < d; ++i) off = off * n + static_cast<std::size_t>(std::abs(ca[i] - cb[i]));
          C(a, bb) = C(bb, a) = table[off];
        }
      }
      bool eig = false;
      const Eigen::MatrixXd Lc = factor_psd(C, eig);
      b.used_eigen_factor = eig;
      // cell averages of the eigenfunctions (analytic, per axis)
      Eigen::MatrixXd avg1(M, n);
      for (int i = 0; i < M; ++i) {
        const int k = basis.mode_number(i);
        for (int a = 0; a < n; ++a) {
          const double x0 = a * h, x1 = (a + 1) * h;
          double v;
          if (basis.bc() == BoundaryCondition::Neumann)
            v = k == 0 ? 1.0 / std::sqrt(pi) : std::sqrt(2.0 / pi) * (std::sin(k * x1) - std::sin(k * x0)) / (k * h);
          else
            v = std::sqrt(2.0 / pi) * (std::cos(k * x0) - std::cos(k * x1)) / (k * h);
          avg1(i, a) = v;
        }
      }
      Eigen::MatrixXd E(N, Nc);
      for (std::size_t p = 0; p < N; ++p) {
        std::vector<int> ip(d);
        std::size_t r = p;
        for (int i = d - 1; i >= 0; --i) {
          ip[i] = static_cast<int>(r % M);
          r /= M;
        }
        for (std::size_t c = 0; c < Nc; ++c) {
          const auto cc = cell_coords(c);
          double v = 1.0;
          for (int i = 0; i < d; ++i) v *= avg1(ip[i], cc[i]);
          E(p, c) = v;
        }
      }
      b.L_ = E * Lc;
      b.rank_ = Nc;
      b.factor_error = (Lc * Lc.transpose() - C).norm() / std::max(C.norm(), 1e-300);
      b.min_eigenvalue = std::numeric_limits<double>::quiet_NaN();
      if (b.factor_error > 1e-8) throw std::runtime_error("noise: cell covariance factorization failed");
      break;
    }
  }
  return b;
}

void sample_increment_into(const NoiseBackend& b, double dt, const CounterNormal& rng, std::uint64_t path,
                           std::uint64_t step, double* coeffs, double* dB, std::vector<double>& scratch) {
  const std::size_t N = b.basis().mode_count();
  const std::size_t r = b.rank();
  if (dt == 0.0) {
    std::fill(coeffs, coeffs + N, 0.0);
    if (dB) std::fill(dB, dB + r, 0.0);
    return;
  }
  if (!(dt > 0.0)) throw DomainError("sample_increment: dt must be >= 0");
  scratch.resize(r);
  rng.fill(path, step, scratch.data(), r);
  const double s = std::sqrt(dt);
  for (std::size_t j = 0; j < r; ++j) scratch[j] *= s;
  if (dB) std::copy(scratch.begin(), scratch.end(), dB);
  b.apply(scratch.data(), coeffs);
}

NoiseIncrement sample_increment(const NoiseBackend& b, double dt, const CounterNormal& rng, std::uint64_t path,
                                std::uint64_t step) {
  NoiseIncrement inc;
  inc.dt = dt;
  inc.coeffs.resize(b.basis().mode_count());
  inc.xi.resize(b.rank());
  std::vector<double> scratch;
  sample_increment_into(b, dt, rng, path, step, inc.coeffs.data(), inc.xi.data(), scratch);
  return inc;
}

CovarianceTestResult empirical_covariance_test(const NoiseBackend& b, const GridField& phi, const GridField& psi,
                                               double t, std::size_t n, std::uint64_t seed, int steps) {
  if (n < 1000) throw DomainError("empirical_covariance_test needs n >= 1000 samples");
  if (!(t > 0.0) || steps < 1) throw DomainError("empirical_covariance_test: bad horizon");
  const Basis& basis = b.basis();
  const SpectralField ph = transform(phi, basis);
  const SpectralField ps = transform(psi, basis);
  const std::size_t N = basis.mode_count();

  // target from a freshly assembled gram matrix, independent of the factor
  const GramResult g = gram_matrix(b.covariance_spec(), basis);
  Eigen::Map<const Eigen::VectorXd> vp(ph.coeffs.data(), N), vs(ps.coeffs.data(), N);
  CovarianceTestResult res;
  res.target = t * vp.dot(g.Q * vs);

  const CounterNormal rng(seed, Stream::Test);
  const double dt = t / steps;
  std::vector<double> prod(n);
  const long long nn = static_cast<long long>(n);
  auto body = [&](long long i) {
    std::vector<double> W(N, 0.0), inc(N), scratch;
    for (int s = 0; s < steps; ++s) {
      sample_increment_into(b, dt, rng, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(s), inc.data(), nullptr,
                            scratch);
      for (std::size_t k = 0; k < N; ++k) W[k] += inc[k];
    }
    double a = 0.0, c = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      a += ph[k] * W[k];
      c += ps[k] * W[k];
    }
    prod[i] = a * c;
  };
  if (kernels::can_fork()) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < nn; ++i) body(i);
  } else {
    for (long long i = 0; i < nn; ++i) body(i);
  }
  double m = 0.0;
  for (double v : prod) m += v;
  m /= n;
  double var = 0.0;
  for (double v : prod) var += (v - m) * (v - m);
  var /= (n - 1);
  res.estimate = m;
  res.stderr_ = std::sqrt(var / n);
  res.samples = n;
  res.z = res.stderr_ > 0.0 ? (res.estimate - res.target) / res.stderr_ : (res.estimate == res.target ? 0.0 : INFINITY);
  return res;
}

}  // namespace spde
