#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "spde/greens.hpp"
#include "spde/solver.hpp"

using namespace spde;

namespace {

SolverConfig small_config(int d, int M, double T, double dt = 1e-3) {
  SolverConfig c;
  c.d = d;
  c.M = M;
  c.T = T;
  c.dt = dt;
  return c;
}

}  // namespace

TEST_SUITE("solver") {
  TEST_CASE("truncation weight") {
    CHECK(truncation_weight(3.0, 2.9) == 1.0);
    CHECK(truncation_weight(3.0, 5.0) == 0.0);
    CHECK(truncation_weight(3.0, 3.5) == 0.5);
    CHECK(truncation_weight(std::numeric_limits<double>::infinity(), 1e300) == 1.0);
    double worst = 0.0;
    for (double r = 3.0; r <= 4.0; r += 1e-3)
      worst = std::max(worst, std::abs(truncation_weight(3.0, r + 1e-6) - truncation_weight(3.0, r)) / 1e-6);
    CHECK(worst <= 1.5 + 1e-6);
  }

  TEST_CASE("phi functions") {
    CHECK(phi1(0.0) == 1.0);
    CHECK(phi1(-1.0) == doctest::Approx(1.0 - std::exp(-1.0)));
    CHECK(phi1(-1e-7) == doctest::Approx(1.0 - 0.5e-7));
    CHECK(phi2(-1.0) == doctest::Approx(std::exp(-1.0)));
    CHECK(phi2(-0.05) == doctest::Approx((std::expm1(-0.05) + 0.05) / 0.0025).epsilon(1e-12));
    CHECK(ou_mode_variance(2.0, 0.0, 0.3) == doctest::Approx(0.6));
    CHECK(ou_mode_variance(1.0, 4.0, 1.0) == doctest::Approx((1.0 - std::exp(-8.0)) / 8.0));
  }

  TEST_CASE("all-zero model is pure decay") {
    const SolverConfig cfg = small_config(2, 6, 0.01);
    const Basis b = cfg.basis(BoundaryCondition::Neumann);
    SpectralField u(b);
    for (std::size_t k = 0; k < u.coeffs.size(); ++k) u[k] = 1.0 / (1.0 + k);
    const SpectralField v = step(u, 0.0, 0.01, ModelSpec{}, NoiseIncrement{}, cfg);
    for (std::size_t k = 0; k < u.coeffs.size(); ++k) {
      const double mu = b.eigenvalue(k) * b.eigenvalue(k);
      CHECK(v[k] == doctest::Approx(u[k] * std::exp(-mu * 0.01)).epsilon(1e-15));
    }
  }

  TEST_CASE("deterministic CH conserves mass bit-exactly") {
    ModelSpec m;
    m.R = Cubic::double_well();
    SolverConfig cfg = small_config(2, 8, 0.05);
    cfg.u0.kind = InitialCondition::Kind::Random;
    cfg.u0.value = 1.0;
    cfg.u0.seed = 3;
    const NoiseBackend nb = make_backend(CovarianceSpec::white(2), cfg.basis(m.bc));
    const Trajectory tr = simulate(m, cfg, nb);
    REQUIRE(tr.states.size() == cfg.steps() + 1);
    for (const auto& s : tr.states) CHECK(s[0] == tr.states[0][0]);
    const EnergySeries e = energy_diagnostics(tr, &m.R);
    for (std::size_t i = 1; i < e.ch_energy.size(); ++i) CHECK(e.ch_energy[i] <= e.ch_energy[i - 1] + 1e-12);
  }

  TEST_CASE("zero data and zero noise stay zero") {
    ModelSpec m;
    m.R = Cubic::double_well();
    const SolverConfig cfg = small_config(1, 16, 0.02);
    const NoiseBackend nb = make_backend(CovarianceSpec::white(1), cfg.basis(m.bc));
    const Trajectory tr = simulate(m, cfg, nb);
    for (const auto& s : tr.states)
      for (double v : s) CHECK(v == 0.0);
  }

  TEST_CASE("inactive truncation is bit-identical to none") {
    ModelSpec m;
    m.R = Cubic::double_well();
    m.sigma = Coefficient::constant(0.05);
    SolverConfig a = small_config(1, 16, 0.02), b = a;
    a.truncation_level = std::numeric_limits<double>::infinity();
    b.truncation_level = 1e6;
    a.seed = b.seed = 8;
    const NoiseBackend nb = make_backend(CovarianceSpec::white(1), a.basis(m.bc));
    const Trajectory ta = simulate(m, a, nb, 2), tb = simulate(m, b, nb, 2);
    CHECK(ta.states == tb.states);
    CHECK_FALSE(tb.stop_time.has_value());
  }

  TEST_CASE("stopping at the truncation level") {
    ModelSpec m;
    m.R = Cubic::double_well();
    SolverConfig cfg = small_config(1, 8, 0.05);
    cfg.u0.kind = InitialCondition::Kind::Constant;
    cfg.u0.value = 2.0;
    cfg.truncation_level = 1.0;
    const NoiseBackend nb = make_backend(CovarianceSpec::white(1), cfg.basis(m.bc));
    const Trajectory tr = simulate(m, cfg, nb);
    REQUIRE(tr.stop_time.has_value());
    CHECK(*tr.stop_time == 0.0);
    CHECK(tr.states.size() == 1);
  }

  TEST_CASE("serial and parallel ensembles agree bit for bit") {
    ModelSpec m;
    m.R = Cubic::double_well();
    m.sigma = Coefficient::tanh(0.3, 0.1, 1.0);
    SolverConfig cfg = small_config(2, 6, 0.01);
    cfg.ensemble = 6;
    cfg.seed = 17;
    const NoiseBackend nb = make_backend(CovarianceSpec::riesz(2, 1.0), cfg.basis(m.bc));
    const auto s = run_ensemble(m, cfg, nb, false, Exec::Serial);
    const int prev = max_threads();
    set_threads(4);
    const auto p = run_ensemble(m, cfg, nb, false, Exec::Parallel);
    set_threads(prev);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i].states == p[i].states);
    CHECK(s[0].states.back() != s[1].states.back());
  }

  TEST_CASE("simulation refuses an inadmissible covariance") {
    ModelSpec m;
    m.R = Cubic::double_well();
    const SolverConfig cfg = small_config(4, 2, 0.002);
    const NoiseBackend nb = make_backend(CovarianceSpec::riesz(4, 3.5), cfg.basis(m.bc), NoiseKind::DiagonalSpectral);
    CHECK_THROWS_AS(simulate(m, cfg, nb), PreconditionError);
    CHECK_NOTHROW(simulate(m, cfg, nb, 0, true));
  }

  TEST_CASE("Picard without forcing is the semigroup") {
    ModelSpec m;
    m.lipschitz_only = true;
    SolverConfig cfg = small_config(1, 8, 0.05);
    cfg.u0.kind = InitialCondition::Kind::Random;
    cfg.u0.value = 1.0;
    const Basis b = cfg.basis(m.bc);
    const NoiseBackend nb = make_backend(CovarianceSpec::white(1), b);
    const PicardResult r = picard_solve(m, cfg, nb, 1e-12, 10);
    CHECK(r.converged);
    CHECK(r.iterations <= 2);
    const SpectralField u0 = cfg.u0.build(b);
    const double T = cfg.steps() * cfg.dt;
    for (std::size_t k = 0; k < b.mode_count(); ++k) {
      const double mu = b.eigenvalue(k) * b.eigenvalue(k);
      CHECK(r.states.back()[k] == doctest::Approx(u0[k] * std::exp(-mu * T)).epsilon(1e-12));
    }
  }

  TEST_CASE("Picard with linear drift b(u) = u") {
    ModelSpec m;
    m.lipschitz_only = true;
    m.drift.push_back({{0}, Coefficient::affine(0.0, 1.0)});
    SolverConfig cfg = small_config(1, 6, 0.1, 1e-4);
    cfg.u0.kind = InitialCondition::Kind::Random;
    cfg.u0.value = 1.0;
    cfg.u0.decay = 0.0;
    const Basis b = cfg.basis(m.bc);
    const NoiseBackend nb = make_backend(CovarianceSpec::white(1), b);
    const PicardResult r = picard_solve(m, cfg, nb, 1e-10, 40);
    CHECK(r.converged);
    const SpectralField u0 = cfg.u0.build(b);
    for (std::size_t k = 0; k < b.mode_count(); ++k) {
      const double mu = b.eigenvalue(k) * b.eigenvalue(k);
      CHECK(r.states.back()[k] == doctest::Approx(u0[k] * std::exp((1.0 - mu) * 0.1)).epsilon(2e-4));
    }
  }

  TEST_CASE("Picard contracts for bounded sigma") {
    ModelSpec m;
    m.lipschitz_only = true;
    m.sigma = Coefficient::tanh(0.5, 0.5, 1.0);
    m.g = Coefficient::sine(0.0, 0.5, 1.0);
    SolverConfig cfg = small_config(1, 16, 0.1);
    const NoiseBackend nb = make_backend(CovarianceSpec::white(1), cfg.basis(m.bc));
    const PicardResult r = picard_solve(m, cfg, nb, 1e-8, 20, 3);
    CHECK(r.converged);
    REQUIRE(r.ratios.size() >= 2);
    CHECK(r.ratios.back() <= 0.5);
    ModelSpec bad;
    bad.R = Cubic::double_well();
    CHECK_THROWS_AS(picard_solve(bad, cfg, nb, 1e-8, 5), PreconditionError);
  }

  TEST_CASE("deterministic convolution") {
    const Basis b(1, 8, BoundaryCondition::Neumann);
    const Grid g = matching_grid(b);
    const std::vector<double> times{0.0, 0.05, 0.1};
    std::vector<GridField> ones(3, GridField(g, std::vector<double>(g.size(), 1.0)));
    const SpectralField J = deterministic_convolution(times, ones, b, ConvKernel::G, 0.02, 0.1);
    const GridField Jg = inverse_transform(J, 8);
    for (double v : Jg.values) CHECK(v == doctest::Approx(0.08).epsilon(1e-12));
    const SpectralField L = deterministic_convolution(times, ones, b, ConvKernel::LaplacianG, 0.0, 0.1);
    for (double v : L.coeffs) CHECK(std::abs(v) < 1e-14);

    SpectralField e3(b);
    e3[3] = 1.0;
    const std::vector<GridField> modes(3, inverse_transform(e3, 8));
    const SpectralField K = deterministic_convolution(times, modes, b, ConvKernel::G, 0.0, 0.1);
    CHECK(K[3] == doctest::Approx((1.0 - std::exp(-81.0 * 0.1)) / 81.0).epsilon(1e-10));
    CHECK(std::abs(K[2]) < 1e-14);
  }

  TEST_CASE("convolution bound") {
    ConvolutionProbe p;
    p.d = 2;
    p.M = 6;
    const auto r = convolution_bound_check(p, ConvKernel::LaplacianG, 2.0, 2.0, 4, 1);
    CHECK(r.exponent == doctest::Approx(-0.5));
    CHECK(std::isfinite(r.C));
    CHECK(r.C > 0.0);
    const auto again = convolution_bound_check(p, ConvKernel::LaplacianG, 2.0, 2.0, 4, 1, r.C);
    CHECK(again.violations == 0);
    p.d = 1;
    const auto inf = std::numeric_limits<double>::infinity();
    CHECK(convolution_bound_check(p, ConvKernel::G, inf, inf, 2, 1).exponent == doctest::Approx(0.0));
    CHECK_THROWS_AS(convolution_bound_check(p, ConvKernel::G, 2.0, 4.0, 2, 1), DomainError);
  }

  TEST_CASE("energy diagnostics") {
    const Basis b(1, 8, BoundaryCondition::Neumann);
    Trajectory tr;
    tr.basis = b;
    std::vector<double> e1(8, 0.0), c(8, 0.0);
    e1[1] = 1.0;
    c[0] = 3.0;
    tr.times = {0.0, 1.0};
    tr.states = {e1, c};
    const EnergySeries e = energy_diagnostics(tr);
    CHECK(e.l2_sq[0] == 1.0);
    CHECK(e.lap_integral[1] == doctest::Approx(0.5));
    CHECK(e.mass_sq[1] == 9.0);
    CHECK(e.inv_sqrt_a_sq[0] == 1.0);
    CHECK(e.inv_sqrt_a_sq[1] == 0.0);
    CHECK(e.finite);
  }
}
