#include "spde/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <stdexcept>

namespace spde::quad {

Rule gauss_jacobi(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_jacobi: n must be >= 1");
  if (!(a > -1.0 && b > -1.0)) throw std::invalid_argument("gauss_jacobi: exponents must exceed -1");
  Eigen::VectorXd diag(n), sub(n > 1 ? n - 1 : 1);
  const double ab = a + b;
  for (int k = 0; k < n; ++k) {
    const double s = 2.0 * k + ab;
    diag(k) = (k == 0) ? (b - a) / (ab + 2.0) : (b * b - a * a) / (s * (s + 2.0));
  }
  for (int k = 1; k < n; ++k) {
    const double s = 2.0 * k + ab;
    double bk;
    if (k == 1)
      bk = 4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab) * (2.0 + ab) * (3.0 + ab));
    else
      bk = 4.0 * k * (k + a) * (k + b) * (k + ab) / (s * s * (s + 1.0) * (s - 1.0));
    sub(k - 1) = std::sqrt(bk);
  }
  const double mu0 = std::exp((ab + 1.0) * std::log(2.0) + std::lgamma(a + 1.0) + std::lgamma(b + 1.0) -
                              std::lgamma(ab + 2.0));
  Rule r;
  r.x.resize(n);
  r.w.resize(n);
  if (n == 1) {
    r.x[0] = diag(0);
    r.w[0] = mu0;
    return r;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub.head(n - 1), Eigen::ComputeEigenvectors);
  for (int i = 0; i < n; ++i) {
    r.x[i] = es.eigenvalues()(i);
    const double v = es.eigenvectors()(0, i);
    r.w[i] = mu0 * v * v;
  }
  return r;
}

Rule gauss_legendre(int n, double lo, double hi) {
  Rule r = gauss_jacobi(n, 0.0, 0.0);
  const double h = 0.5 * (hi - lo);
  for (int i = 0; i < n; ++i) {
    r.x[i] = lo + h * (r.x[i] + 1.0);
    r.w[i] *= h;
  }
  return r;
}

Rule power_weighted(int n, double p, double h) {
  Rule r = gauss_jacobi(n, 0.0, p);
  const double scale = std::pow(0.5 * h, p + 1.0);
  for (int i = 0; i < n; ++i) {
    r.x[i] = 0.5 * h * (r.x[i] + 1.0);
    r.w[i] *= scale;
  }
  return r;
}

CornerRule corner_rule(int d, double h, double B, int n_s, int n_t) {
  if (d < 1 || d > 5) throw std::invalid_argument("corner_rule: dimension");
  const double p = d - 1.0 - B;
  if (!(p > -1.0)) throw std::invalid_argument("corner_rule: integrand not locally integrable");
  const Rule rs = power_weighted(n_s, p, h);
  const Rule rt = gauss_legendre(n_t, 0.0, 1.0);
  CornerRule c;
  c.d = d;
  // values: s_a at a, s_a * t_b at n_s + a * n_t + b
  c.values = rs.x;
  for (int a = 0; a < n_s; ++a)
    for (int b = 0; b < n_t; ++b) c.values.push_back(rs.x[a] * rt.x[b]);
  const int m = d - 1;
  std::size_t nt_total = 1;
  for (int i = 0; i < m; ++i) nt_total *= static_cast<std::size_t>(n_t);
  std::vector<int> tb(m);
  for (int j = 0; j < d; ++j) {
    for (int a = 0; a < n_s; ++a) {
      for (std::size_t f = 0; f < nt_total; ++f) {
        std::size_t r = f;
        double wt = rs.w[a];
        double q = 1.0;
        for (int i = m - 1; i >= 0; --i) {
          tb[i] = static_cast<int>(r % n_t);
          r /= n_t;
        }
        for (int i = 0; i < m; ++i) {
          wt *= rt.w[tb[i]];
          q += rt.x[tb[i]] * rt.x[tb[i]];
        }
        // |w|^-B = s^-B (1 + sum t^2)^(-B/2); s^(d-1-B) is in the radial weight
        wt *= std::pow(q, -0.5 * B);
        int ti = 0;
        for (int i = 0; i < d; ++i) {
          if (i == j)
            c.index.push_back(a);
          else
            c.index.push_back(n_s + a * n_t + tb[ti++]);
        }
        c.weight.push_back(wt);
        c.radius.push_back(rs.x[a] * std::sqrt(q));
      }
    }
  }
  return c;
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  if (a == b) return 0.0;
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, tol, &err);
}

}  // namespace spde::quad
