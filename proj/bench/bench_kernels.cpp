// Serial reference vs OpenMP path for the main kernels. Arg(0) = serial, Arg(1) = parallel.
#include <benchmark/benchmark.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <vector>

#include "spde/covariance.hpp"
#include "spde/greens.hpp"
#include "spde/kernels.hpp"
#include "spde/solver.hpp"

using namespace spde;

namespace {

Exec exec_of(const benchmark::State& s) { return s.range(0) ? Exec::Parallel : Exec::Serial; }

void bm_separable_apply(benchmark::State& s) {
  const int n = 24, d = 3;
  const std::vector<int> shape(d, n);
  std::vector<double> in(static_cast<std::size_t>(n * n * n)), A(n * n), out(in.size()), scratch;
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = std::sin(0.1 * i);
  for (int i = 0; i < n * n; ++i) A[i] = std::cos(0.37 * i);
  for (auto _ : s) {
    kernels::separable_apply(in.data(), shape, A.data(), n, out.data(), scratch, exec_of(s));
    benchmark::DoNotOptimize(out.data());
  }
}

void bm_sample_kernel(benchmark::State& s) {
  const KernelExponents e = KernelExponents::cahn_hilliard(2);
  const auto probes = make_kernel_probes(2, 1e-3, 1e-1, 7, 3);
  for (auto _ : s) {
    auto r = sample_kernel(e, {}, 0, probes, BoundaryCondition::Neumann, 128, exec_of(s));
    benchmark::DoNotOptimize(r.data());
  }
}

void bm_run_ensemble(benchmark::State& s) {
  ModelSpec m;
  m.R = Cubic::double_well();
  m.sigma = Coefficient::tanh(0.3, 0.1, 1.0);
  SolverConfig cfg;
  cfg.d = 2;
  cfg.M = 16;
  cfg.dt = 1e-3;
  cfg.T = 0.02;
  cfg.ensemble = 16;
  cfg.record_every = 20;
  const NoiseBackend nb = make_backend(CovarianceSpec::riesz(2, 1.0), cfg.basis(m.bc));
  for (auto _ : s) {
    auto ens = run_ensemble(m, cfg, nb, false, exec_of(s));
    benchmark::DoNotOptimize(ens.data());
  }
}

void bm_gram(benchmark::State& s) {
  const Basis b(1, 32, BoundaryCondition::Neumann);
  GramOptions o;
  o.exec = exec_of(s);
  for (auto _ : s) {
    auto g = gram_matrix(CovarianceSpec::riesz(1, 0.5), b, o);
    benchmark::DoNotOptimize(g.Q.data());
  }
}

}  // namespace

BENCHMARK(bm_separable_apply)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_sample_kernel)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_run_ensemble)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_gram)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::err);
  // the parallel rows need a team even on a one-core box
  if (max_threads() < 2) set_threads(4);
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
