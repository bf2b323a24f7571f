#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "spde/model.hpp"

using namespace spde;

namespace {

bool has(const ValidationReport& r, const std::string& id) {
  return std::any_of(r.violations.begin(), r.violations.end(), [&](const ValidationIssue& v) { return v.id == id; });
}

ModelSpec ch_model() {
  ModelSpec m;
  m.R = Cubic::double_well();
  m.sigma = Coefficient::tanh(1.0, 0.5, 1.0);
  m.ch_epsilon = 0.2;
  return m;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("coefficients") {
    const double x[1] = {0.3};
    const Coefficient t = Coefficient::tanh(1.0, 0.5, 2.0);
    CHECK(t.value(0.0, x, 0.4) == doctest::Approx(1.0 + 0.5 * std::tanh(0.8)));
    CHECK(t.du(0.0, x, 0.4) == doctest::Approx(1.0 / std::pow(std::cosh(0.8), 2)));
    CHECK(t.bounded());
    CHECK(t.abs_lower_bound() == doctest::Approx(0.5));
    CHECK(Coefficient::affine(1.0, 2.0).growth() == 1);
    CHECK(Coefficient::quadratic(0.0, 0.0, 1.0).growth() == 2);
    CHECK_FALSE(Coefficient::quadratic(0.0, 0.0, 1.0).lipschitz());
    CHECK(Coefficient::constant(2.0).is_constant());
    CHECK(Coefficient::zero().is_zero());
    CHECK(Coefficient::sine(0.0, 1.0, 1.0).abs_lower_bound() == 0.0);
  }

  TEST_CASE("cubic") {
    const Cubic w = Cubic::double_well();
    CHECK(w.value(2.0) == 6.0);
    CHECK(w.deriv(2.0) == 11.0);
    CHECK(w.potential(2.0) == doctest::Approx(4.0 - 2.0));
  }

  TEST_CASE("CH model in d=4 with admissible covariance passes") {
    const auto rep = validate_model(ch_model(), CovarianceSpec::riesz(4, 1.0), 4, 5.0);
    CHECK(rep.ok());
    REQUIRE(rep.covariance.size() == 1);
    CHECK(rep.covariance[0].id == "covCH");
  }

  TEST_CASE("negative leading coefficient is flagged") {
    ModelSpec m = ch_model();
    m.R.r3 = -1.0;
    CHECK(has(validate_model(m, CovarianceSpec::riesz(4, 1.0), 4, 5.0), "H.1"));
  }

  TEST_CASE("Dirichlet needs R(0) = 0") {
    ModelSpec m = ch_model();
    m.bc = BoundaryCondition::Dirichlet;
    CHECK(validate_model(m, CovarianceSpec::riesz(4, 1.0), 4, 5.0).ok());
    m.R.r0 = 1.0;
    CHECK(has(validate_model(m, CovarianceSpec::riesz(4, 1.0), 4, 5.0), "H.1"));
  }

  TEST_CASE("other gates") {
    ModelSpec m = ch_model();
    m.sigma = Coefficient::affine(0.0, 1.0);
    CHECK(has(validate_model(m, CovarianceSpec::riesz(4, 1.0), 4, 5.0), "H.2"));
    CHECK(has(validate_model(ch_model(), CovarianceSpec::riesz(4, 1.0), 4, 4.0), "H.3"));
    m = ch_model();
    m.drift.push_back({{1, 0, 0, 0}, Coefficient::affine(0.0, 1.0)});
    CHECK(has(validate_model(m, CovarianceSpec::riesz(4, 1.0), 4, 5.0), "H.4"));
    m.drift = {{{2, 2, 0, 0}, Coefficient::affine(0.0, 1.0)}};
    CHECK(has(validate_model(m, CovarianceSpec::riesz(4, 1.0), 4, 5.0), "H.4"));
    m.drift = {{{2, 0, 0, 0}, Coefficient::affine(0.0, 1.0)}};
    CHECK(validate_model(m, CovarianceSpec::riesz(4, 1.0), 4, 5.0).ok());
    CHECK(has(validate_model(ch_model(), CovarianceSpec::riesz(4, 3.5), 4, 5.0), "cov"));
  }

  TEST_CASE("Lipschitz model rejects a cubic drift") {
    ModelSpec m;
    m.lipschitz_only = true;
    m.sigma = Coefficient::affine(0.1, 0.5);
    CHECK(validate_model(m, CovarianceSpec::white(2), 2, 3.0).ok());
    m.R = Cubic::double_well();
    CHECK(has(validate_model(m, CovarianceSpec::white(2), 2, 3.0), "L2"));
  }

  TEST_CASE("initial conditions") {
    const Basis b(2, 4, BoundaryCondition::Neumann);
    InitialCondition ic;
    ic.kind = InitialCondition::Kind::Constant;
    ic.value = 2.0;
    const SpectralField u = ic.build(b);
    CHECK(u[0] == doctest::Approx(2.0 * std::numbers::pi));
    ic.kind = InitialCondition::Kind::Mode;
    ic.mode = {1, 3};
    CHECK(ic.build(b)[b.flat_index({1, 3})] == 2.0);
    ic.mode = {1, 4};
    CHECK_THROWS_AS(ic.build(b), DomainError);
    ic.kind = InitialCondition::Kind::Random;
    ic.seed = 4;
    CHECK(ic.build(b).coeffs == ic.build(b).coeffs);
  }
}
