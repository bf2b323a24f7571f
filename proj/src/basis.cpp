#include "spde/basis.hpp"

#include <cmath>
#include <numbers>

#include "spde/kernels.hpp"

namespace spde {

using std::numbers::pi;

const char* to_string(BoundaryCondition bc) { return bc == BoundaryCondition::Neumann ? "neumann" : "dirichlet"; }

BoundaryCondition parse_bc(const std::string& s) {
  if (s == "neumann" || s == "Neumann") return BoundaryCondition::Neumann;
  if (s == "dirichlet" || s == "Dirichlet") return BoundaryCondition::Dirichlet;
  throw std::invalid_argument("unknown boundary condition '" + s + "'");
}

Basis::Basis(int d, int M, BoundaryCondition bc) : d_(d), M_(M), bc_(bc) {
  if (d < 1 || d > 5) throw DomainError("dimension must be in 1..5");
  if (M < 1) throw DomainError("modes per axis must be >= 1");
  count_ = 1;
  for (int i = 0; i < d; ++i) count_ *= static_cast<std::size_t>(M);
  lambda_.resize(count_);
  for (std::size_t f = 0; f < count_; ++f) {
    std::size_t r = f;
    double s = 0.0;
    for (int i = d - 1; i >= 0; --i) {
      const int k = mode_number(static_cast<int>(r % M));
      r /= M;
      s += static_cast<double>(k) * k;
    }
    lambda_[f] = s;
  }
}

MultiIndex Basis::multi_index(std::size_t flat) const {
  MultiIndex k(d_);
  for (int i = d_ - 1; i >= 0; --i) {
    k[i] = mode_number(static_cast<int>(flat % M_));
    flat /= M_;
  }
  return k;
}

bool Basis::contains(const MultiIndex& k) const {
  if (static_cast<int>(k.size()) != d_) return false;
  for (int v : k) {
    const int s = bc_ == BoundaryCondition::Dirichlet ? v - 1 : v;
    if (s < 0 || s >= M_) return false;
  }
  return true;
}

std::size_t Basis::flat_index(const MultiIndex& k) const {
  if (!contains(k)) throw DomainError("multi-index not representable in this basis");
  std::size_t f = 0;
  for (int i = 0; i < d_; ++i) f = f * M_ + (bc_ == BoundaryCondition::Dirichlet ? k[i] - 1 : k[i]);
  return f;
}

double eigenvalue(const MultiIndex& k) {
  if (k.empty() || k.size() > 5) throw DomainError("dimension must be in 1..5");
  double s = 0.0;
  for (int v : k) {
    if (v < 0) throw DomainError("mode numbers must be non-negative");
    s += static_cast<double>(v) * v;
  }
  return s;
}

double eigenfunction_1d(int k, double x, BoundaryCondition bc) {
  static const double c0 = 1.0 / std::sqrt(pi);
  static const double c1 = std::sqrt(2.0 / pi);
  if (bc == BoundaryCondition::Neumann) return k == 0 ? c0 : c1 * std::cos(k * x);
  return c1 * std::sin(k * x);
}

double eigenfunction_1d_derivative(int k, double x, BoundaryCondition bc, int m) {
  if (m == 0) return eigenfunction_1d(k, x, bc);
  if (bc == BoundaryCondition::Neumann && k == 0) return 0.0;
  static const double c1 = std::sqrt(2.0 / pi);
  const double phase = k * x + 0.5 * pi * m;
  const double amp = c1 * std::pow(static_cast<double>(k), m);
  return bc == BoundaryCondition::Neumann ? amp * std::cos(phase) : amp * std::sin(phase);
}

namespace {

void check_point(const MultiIndex& k, const std::vector<double>& x, BoundaryCondition bc) {
  if (k.empty() || k.size() > 5) throw DomainError("dimension must be in 1..5");
  if (k.size() != x.size()) throw DomainError("point and multi-index dimensions differ");
  for (double xi : x)
    if (!(xi >= -1e-12 && xi <= pi + 1e-12)) throw DomainError("point outside [0,pi]^d");
  for (int v : k) {
    if (v < 0) throw DomainError("mode numbers must be non-negative");
    if (bc == BoundaryCondition::Dirichlet && v < 1) throw DomainError("Dirichlet modes start at 1");
  }
}

}  // namespace

double eval_eigenfunction(const MultiIndex& k, const std::vector<double>& x, BoundaryCondition bc) {
  check_point(k, x, bc);
  double v = 1.0;
  for (std::size_t i = 0; i < k.size(); ++i) v *= eigenfunction_1d(k[i], x[i], bc);
  return v;
}

double eval_eigenfunction_derivative(const MultiIndex& k, const std::vector<double>& x, BoundaryCondition bc,
                                     const MultiIndex& a) {
  check_point(k, x, bc);
  if (a.size() != k.size()) throw DomainError("derivative order dimension mismatch");
  double v = 1.0;
  for (std::size_t i = 0; i < k.size(); ++i) v *= eigenfunction_1d_derivative(k[i], x[i], bc, a[i]);
  return v;
}

SpectralField::SpectralField(const Basis& b, std::vector<double> c) : basis(b), coeffs(std::move(c)) {
  if (coeffs.size() != b.mode_count()) throw DomainError("coefficient count does not match basis");
}

bool SpectralField::finite() const {
  for (double c : coeffs)
    if (!std::isfinite(c)) return false;
  return true;
}

std::size_t Grid::size() const {
  std::size_t n = 1;
  for (int i = 0; i < d; ++i) n *= static_cast<std::size_t>(P);
  return n;
}

double Grid::point(int j) const {
  return bc == BoundaryCondition::Neumann ? (j + 0.5) * pi / P : (j + 1) * pi / (P + 1);
}

double Grid::weight() const { return bc == BoundaryCondition::Neumann ? pi / P : pi / (P + 1); }

double Grid::cell_volume() const { return std::pow(weight(), d); }

std::vector<double> Grid::coordinates(std::size_t flat) const {
  std::vector<double> x(d);
  for (int i = d - 1; i >= 0; --i) {
    x[i] = point(static_cast<int>(flat % P));
    flat /= P;
  }
  return x;
}

GridField::GridField(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
  if (values.size() != g.size()) throw DomainError("grid value count does not match grid");
}

Grid matching_grid(const Basis& b) { return Grid{b.dim(), b.modes_per_axis(), b.bc()}; }
Grid padded_grid(const Basis& b) { return Grid{b.dim(), b.padded_points(), b.bc()}; }

SpectralTransform::SpectralTransform(const Basis& basis, int P) : basis_(basis), grid_{basis.dim(), P, basis.bc()} {
  const int M = basis.modes_per_axis();
  if (P < M) throw DomainError("resolution mismatch: grid has fewer points than modes");
  synth_.resize(static_cast<std::size_t>(P) * M);
  anal_.resize(static_cast<std::size_t>(M) * P);
  const double w = grid_.weight();
  for (int j = 0; j < P; ++j) {
    const double x = grid_.point(j);
    for (int i = 0; i < M; ++i) {
      const double e = eigenfunction_1d(basis.mode_number(i), x, basis.bc());
      synth_[static_cast<std::size_t>(j) * M + i] = e;
      anal_[static_cast<std::size_t>(i) * P + j] = w * e;
    }
  }
}

void SpectralTransform::forward(const double* grid_values, double* coeffs) const {
  std::vector<int> shape(basis_.dim(), grid_.P);
  std::vector<double> scratch;
  kernels::separable_apply(grid_values, shape, anal_.data(), basis_.modes_per_axis(), coeffs, scratch,
                           Exec::Parallel);
}

void SpectralTransform::inverse(const double* coeffs, double* grid_values) const {
  std::vector<int> shape(basis_.dim(), basis_.modes_per_axis());
  std::vector<double> scratch;
  kernels::separable_apply(coeffs, shape, synth_.data(), grid_.P, grid_values, scratch, Exec::Parallel);
}

SpectralField SpectralTransform::forward(const GridField& g) const {
  if (!(g.grid == grid_)) throw DomainError("resolution mismatch between grid field and transform");
  SpectralField u(basis_);
  forward(g.values.data(), u.coeffs.data());
  return u;
}

GridField SpectralTransform::inverse(const SpectralField& u) const {
  if (u.basis != basis_) throw DomainError("basis mismatch between field and transform");
  GridField g(grid_);
  inverse(u.coeffs.data(), g.values.data());
  return g;
}

SpectralField transform(const GridField& g, const Basis& basis) {
  if (basis.dim() != g.grid.d || basis.bc() != g.grid.bc) throw DomainError("bc or dimension mismatch");
  return SpectralTransform(basis, g.grid.P).forward(g);
}

SpectralField transform(const GridField& g) { return transform(g, Basis(g.grid.d, g.grid.P, g.grid.bc)); }

GridField inverse_transform(const SpectralField& u) { return inverse_transform(u, u.basis.modes_per_axis()); }

GridField inverse_transform(const SpectralField& u, int P) { return SpectralTransform(u.basis, P).inverse(u); }

std::vector<double> operator_symbol(const Basis& b, const Operator& op) {
  std::vector<double> s(b.mode_count());
  switch (op.kind) {
    case Operator::Kind::Laplacian:
      for (std::size_t f = 0; f < s.size(); ++f) s[f] = -b.eigenvalue(f);
      break;
    case Operator::Kind::Biharmonic:
      for (std::size_t f = 0; f < s.size(); ++f) s[f] = (-b.eigenvalue(f)) * (-b.eigenvalue(f));
      break;
    case Operator::Kind::Derivative: {
      if (static_cast<int>(op.a.size()) != b.dim()) throw DomainError("derivative order dimension mismatch");
      for (int ai : op.a) {
        if (ai < 0) throw UnsupportedDerivative("negative derivative order");
        if (ai % 2 != 0) throw UnsupportedDerivative("odd derivative components are not closed in this basis");
      }
      for (std::size_t f = 0; f < s.size(); ++f) {
        const MultiIndex k = b.multi_index(f);
        double m = 1.0;
        for (int i = 0; i < b.dim(); ++i) {
          const double k2 = static_cast<double>(k[i]) * k[i];
          for (int p = 0; p < op.a[i] / 2; ++p) m *= -k2;
        }
        s[f] = m;
      }
      break;
    }
  }
  return s;
}

SpectralField apply_operator(const SpectralField& u, const Operator& op) {
  SpectralField out(u.basis);
  const Basis& b = u.basis;
  if (op.kind == Operator::Kind::Biharmonic) {
    // same rounding as two Laplacian applications
    for (std::size_t f = 0; f < out.coeffs.size(); ++f) out[f] = (u[f] * -b.eigenvalue(f)) * -b.eigenvalue(f);
    return out;
  }
  const std::vector<double> s = operator_symbol(b, op);
  for (std::size_t f = 0; f < out.coeffs.size(); ++f) out[f] = u[f] * s[f];
  return out;
}

double l2_norm(const SpectralField& u) {
  double s = 0.0;
  for (double c : u.coeffs) s += c * c;
  return std::sqrt(s);
}

double lq_norm(const GridField& g, double q) {
  if (std::isinf(q)) {
    double m = 0.0;
    for (double v : g.values) m = std::max(m, std::abs(v));
    return m;
  }
  if (!(q >= 1.0)) throw DomainError("L^q norm needs q >= 1");
  double s = 0.0;
  for (double v : g.values) s += std::pow(std::abs(v), q);
  return std::pow(s * g.grid.cell_volume(), 1.0 / q);
}

}  // namespace spde
