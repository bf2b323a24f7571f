#pragma once

#include <functional>
#include <vector>

namespace spde::quad {

struct Rule {
  std::vector<double> x, w;
};

// Golub-Welsch on [-1,1] with weight (1-x)^a (1+x)^b.
Rule gauss_jacobi(int n, double a, double b);
Rule gauss_legendre(int n, double lo, double hi);
// integral_0^h s^p g(s) ds ~ sum w_i g(x_i), p > -1
Rule power_weighted(int n, double p, double h);

// Nodes for integral over [0,h]^d of |w|^(-B) phi(w) dw with phi smooth:
// pyramid (Duffy) split by the largest coordinate, Gauss-Jacobi in the radial
// variable. Each node carries its coordinates as indices into `values`.
struct CornerRule {
  int d = 1;
  std::vector<double> values;          // distinct coordinate values
  std::vector<int> index;              // node-major, d entries per node
  std::vector<double> weight;          // includes |w|^(-B) and the Jacobian
  std::vector<double> radius;          // |w| at the node
  std::size_t size() const { return weight.size(); }
};

CornerRule corner_rule(int d, double h, double B, int n_s, int n_t);

// adaptive Gauss-Kronrod on [a,b]
double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-12);

}  // namespace spde::quad
