#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace spde {

enum class BoundaryCondition { Neumann, Dirichlet };

const char* to_string(BoundaryCondition bc);
BoundaryCondition parse_bc(const std::string& s);

// Mode numbers per axis (not storage indices).
using MultiIndex = std::vector<int>;

struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Eigenbasis of -Laplace on [0,pi]^d, M modes per axis.
// Storage is row-major, last axis fastest; storage index i on an axis
// carries mode number i (Neumann) or i+1 (Dirichlet).
class Basis {
 public:
  Basis() = default;
  Basis(int d, int M, BoundaryCondition bc);

  int dim() const { return d_; }
  int modes_per_axis() const { return M_; }
  BoundaryCondition bc() const { return bc_; }
  std::size_t mode_count() const { return count_; }

  int mode_number(int storage) const { return bc_ == BoundaryCondition::Dirichlet ? storage + 1 : storage; }
  MultiIndex multi_index(std::size_t flat) const;
  std::size_t flat_index(const MultiIndex& k) const;
  bool contains(const MultiIndex& k) const;

  // lambda_k = sum k_i^2; the biharmonic eigenvalue is its square.
  double eigenvalue(std::size_t flat) const { return lambda_[flat]; }
  const std::vector<double>& eigenvalues() const { return lambda_; }

  // padded collocation size for cubic nonlinearities
  int padded_points() const { return 2 * M_; }

  bool operator==(const Basis& o) const { return d_ == o.d_ && M_ == o.M_ && bc_ == o.bc_; }
  bool operator!=(const Basis& o) const { return !(*this == o); }

 private:
  int d_ = 1;
  int M_ = 1;
  BoundaryCondition bc_ = BoundaryCondition::Neumann;
  std::size_t count_ = 1;
  std::vector<double> lambda_;
};

double eigenvalue(const MultiIndex& k);

double eigenfunction_1d(int k, double x, BoundaryCondition bc);
// m-th derivative of the 1D eigenfunction.
double eigenfunction_1d_derivative(int k, double x, BoundaryCondition bc, int m);

double eval_eigenfunction(const MultiIndex& k, const std::vector<double>& x, BoundaryCondition bc);
double eval_eigenfunction_derivative(const MultiIndex& k, const std::vector<double>& x, BoundaryCondition bc,
                                     const MultiIndex& a);

struct SpectralField {
  Basis basis;
  std::vector<double> coeffs;

  SpectralField() = default;
  explicit SpectralField(const Basis& b) : basis(b), coeffs(b.mode_count(), 0.0) {}
  SpectralField(const Basis& b, std::vector<double> c);

  bool finite() const;
  double& operator[](std::size_t i) { return coeffs[i]; }
  double operator[](std::size_t i) const { return coeffs[i]; }
};

// Tensor-product collocation grid with P points per axis.
// Neumann: midpoints (j+1/2)pi/P, weight pi/P.
// Dirichlet: interior DST-I nodes j*pi/(P+1), j=1..P, weight pi/(P+1).
struct Grid {
  int d = 1;
  int P = 1;
  BoundaryCondition bc = BoundaryCondition::Neumann;

  std::size_t size() const;
  double point(int j) const;
  double weight() const;  // per-axis weight
  double cell_volume() const;
  std::vector<double> coordinates(std::size_t flat) const;
  bool operator==(const Grid& o) const { return d == o.d && P == o.P && bc == o.bc; }
};

struct GridField {
  Grid grid;
  std::vector<double> values;

  GridField() = default;
  explicit GridField(const Grid& g) : grid(g), values(g.size(), 0.0) {}
  GridField(const Grid& g, std::vector<double> v);
};

Grid matching_grid(const Basis& b);
Grid padded_grid(const Basis& b);

// Cached separable transforms between a basis and a grid with P >= M.
class SpectralTransform {
 public:
  SpectralTransform(const Basis& basis, int P);
  const Basis& basis() const { return basis_; }
  const Grid& grid() const { return grid_; }

  SpectralField forward(const GridField& g) const;
  GridField inverse(const SpectralField& u) const;
  void forward(const double* grid_values, double* coeffs) const;
  void inverse(const double* coeffs, double* grid_values) const;

  // P x M matrix e_k(x_j), and M x P matrix w_j e_k(x_j)
  const std::vector<double>& synthesis() const { return synth_; }
  const std::vector<double>& analysis() const { return anal_; }

 private:
  Basis basis_;
  Grid grid_;
  std::vector<double> synth_;
  std::vector<double> anal_;
};

SpectralField transform(const GridField& g, const Basis& basis);
SpectralField transform(const GridField& g);  // basis with M = P
GridField inverse_transform(const SpectralField& u);
GridField inverse_transform(const SpectralField& u, int P);

struct Operator {
  enum class Kind { Laplacian, Biharmonic, Derivative } kind = Kind::Laplacian;
  MultiIndex a;  // derivative orders per axis

  static Operator laplacian() { return {Kind::Laplacian, {}}; }
  static Operator biharmonic() { return {Kind::Biharmonic, {}}; }
  static Operator derivative(MultiIndex a) { return {Kind::Derivative, std::move(a)}; }
};

struct UnsupportedDerivative : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

SpectralField apply_operator(const SpectralField& u, const Operator& op);
// Per-mode multiplier of the operator.
std::vector<double> operator_symbol(const Basis& b, const Operator& op);

double l2_norm(const SpectralField& u);
// L^q norm on a grid by midpoint/nodal quadrature; q = inf gives the max.
double lq_norm(const GridField& g, double q);

}  // namespace spde
