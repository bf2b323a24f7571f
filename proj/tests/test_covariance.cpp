#include <cmath>
#include <numbers>

#include "doctest.h"
#include "spde/covariance.hpp"

using namespace spde;
using std::numbers::pi;

namespace {
const auto CH4 = KernelExponents::cahn_hilliard(4);
}

TEST_SUITE("covariance") {
  TEST_CASE("radial integrals") {
    const auto f = CovarianceSpec::riesz(4, 1.5);
    CHECK(radial_integral(f, 0.0, 0, 1.0).value == doctest::Approx(2.0 * pi * pi / 2.5).epsilon(1e-10));
    CHECK(radial_integral(CovarianceSpec::riesz(4, 4.0), 0.0, 0, 1.0).divergent);
    const double tau = 0.1;
    const double closed = 2.0 * pi * pi * std::pow(tau, 2.5) * (0.4 * std::log(1.0 / tau) + 0.16);
    CHECK(radial_integral(f, 0.0, 1, tau).value == doctest::Approx(closed).epsilon(1e-10));
    CHECK(closed == doctest::Approx(0.0675).epsilon(0.01));
    CHECK(I_tau(f, 4, 0.1).value == doctest::Approx(closed).epsilon(1e-10));
    CHECK(I_tau(f, 4, 1e-6).value < 1e-12);
  }

  TEST_CASE("radial integral is monotone in e and kappa") {
    const auto f = CovarianceSpec::riesz(3, 1.0);
    bool seen_div = false;
    for (double e = 0.0; e < 3.0; e += 0.25) {
      const bool div = radial_integral(f, e, 0, 1.0).divergent;
      CHECK((!seen_div || div));
      seen_div = seen_div || div;
      if (!radial_integral(f, e, 1, 1.0).divergent) CHECK_FALSE(div);
    }
    CHECK(seen_div);
  }

  TEST_CASE("CNS thresholds for the biharmonic exponents") {
    const auto e5 = KernelExponents::cahn_hilliard(5);
    CHECK(cns_admissible(CovarianceSpec::riesz(5, 3.9), e5, 5).verdict == Verdict::Admissible);
    CHECK(cns_admissible(CovarianceSpec::riesz(5, 4.1), e5, 5).verdict == Verdict::Inadmissible);
    CHECK(cns_admissible(CovarianceSpec::riesz(4, 3.9), CH4, 4).verdict == Verdict::Admissible);
    CHECK(cns_admissible(CovarianceSpec::riesz(4, 4.1), CH4, 4).log_power == 1);
    const auto e3 = KernelExponents::cahn_hilliard(3);
    CHECK(cns_admissible(CovarianceSpec::riesz(3, 2.9), e3, 3).verdict == Verdict::Admissible);
    CHECK(cns_admissible(CovarianceSpec::riesz(3, 3.1), e3, 3).verdict == Verdict::Inadmissible);
    CHECK(cns_admissible(CovarianceSpec::white(3), e3, 3).verdict == Verdict::Admissible);
    CHECK(cns_admissible(CovarianceSpec::white(4), CH4, 4).verdict != Verdict::Admissible);
  }

  TEST_CASE("Holder conditions") {
    const auto f = CovarianceSpec::riesz(4, 1.0);
    CHECK(holder_condition(f, CH4, 4, HolderWhich::Space, 0.5).verdict == Verdict::Admissible);
    CHECK(holder_condition(f, CH4, 4, HolderWhich::Space, 0.5).exponent == doctest::Approx(0.5));
    CHECK(holder_condition(f, CH4, 4, HolderWhich::Space, 1e-9).verdict ==
          cns_admissible(f, CH4, 4).verdict);
    CHECK_THROWS_AS(holder_condition(f, CH4, 4, HolderWhich::Time, 1.0), DomainError);
  }

  TEST_CASE("cprime3") {
    for (double B : {0.5, 2.0, 3.5})
      for (int d : {3, 4, 5}) {
        const auto f = CovarianceSpec::riesz(d, B);
        const auto e = KernelExponents::cahn_hilliard(d);
        CHECK(cprime3(f, e, d, 3.0, 3.0).verdict == cns_admissible(f, e, d).verdict);
      }
    // p -> infinity gives the exponent [2d - 4]^+
    const auto f = CovarianceSpec::riesz(4, 1.0);
    CHECK(cprime3(f, CH4, 4, 2.0, 1e9).exponent == doctest::Approx(4.0).epsilon(1e-6));
    CHECK_THROWS_AS(cprime3(f, CH4, 4, 4.0, 3.0), DomainError);
  }

  TEST_CASE("covCH thresholds") {
    CHECK(covch_admissible(CovarianceSpec::riesz(4, 1.5), 4, 0.5).verdict == Verdict::Admissible);
    CHECK(covch_admissible(CovarianceSpec::riesz(4, 2.5), 4, 0.5).verdict == Verdict::Inadmissible);
    CHECK(covch_admissible(CovarianceSpec::riesz(5, 3.99), 5, 1e-6).verdict == Verdict::Admissible);
    CHECK_THROWS_AS(covch_admissible(CovarianceSpec::riesz(3, 1.0), 3, 0.5), DomainError);
  }

  TEST_CASE("C1 property") {
    const auto pairs = c1_sample_pairs(1.0, 30);
    CHECK(check_c1(CovarianceSpec::riesz(3, 2.0), 0.25, 0.5, pairs).pass);
    CHECK(check_c1(CovarianceSpec::constant(3, 2.0), 1.0, 0.5, pairs).pass);
    const RadialFunction pw = [](double r) { return r <= 0.1 ? std::pow(r, -2.0) : 1e6; };
    const auto res = check_c1(pw, 1.0, 0.5, {{0.2, 0.05}});
    CHECK_FALSE(res.pass);
    CHECK(res.fu == 1e6);
    CHECK(res.fv == doctest::Approx(400.0));
  }

  TEST_CASE("psi integral") {
    CHECK(psi_integral(CovarianceSpec::riesz(4, 4.0), CH4, 4, 0.1, 0.0).divergent);
    const auto r = psi_integral(CovarianceSpec::constant(4, 1.0), CH4, 4, 0.1, 0.0);
    CHECK(r.exponent == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.value == doctest::Approx(r.closed_form).epsilon(1e-6));
    const auto s = psi_integral(CovarianceSpec::riesz(4, 1.0), CH4, 4, 0.1, 0.0);
    CHECK(s.value == doctest::Approx(s.closed_form).epsilon(1e-6));
  }

  TEST_CASE("gram matrix examples") {
    const Basis b(2, 4, BoundaryCondition::Neumann);
    const GramResult c = gram_matrix(CovarianceSpec::constant(2, 1.5), b);
    CHECK(c.Q(0, 0) == doctest::Approx(1.5 * pi * pi).epsilon(1e-10));
    CHECK(c.Q.norm() == doctest::Approx(c.Q(0, 0)).epsilon(1e-10));
    const GramResult w = gram_matrix(CovarianceSpec::white(2), b);
    CHECK((w.Q - Eigen::MatrixXd::Identity(16, 16)).norm() == 0.0);
    const GramResult r = gram_matrix(CovarianceSpec::riesz(2, 1.0), b);
    CHECK(r.Q == r.Q.transpose());
    CHECK(r.min_eigenvalue >= -1e-10);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.Q);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
  }

  TEST_CASE("gram diagonal against the full matrix, serial and parallel") {
    const Basis b(1, 8, BoundaryCondition::Dirichlet);
    const auto f = CovarianceSpec::riesz(1, 0.5);
    GramOptions s, p;
    s.exec = Exec::Serial;
    p.exec = Exec::Parallel;
    const GramResult a = gram_matrix(f, b, s), c = gram_matrix(f, b, p);
    CHECK(a.Q == c.Q);
    const auto dg = gram_diagonal(f, b);
    for (int k = 0; k < 8; ++k) CHECK(dg[k] == doctest::Approx(a.Q(k, k)).epsilon(1e-8));
  }
}
