#include <random>

#include <benchmark/benchmark.h>

#include "cqed/bifurcation.hpp"
#include "cqed/quantum.hpp"
#include "cqed/trajectories.hpp"

using namespace cqed;

namespace {

PhysicalParams bistable() { return to_physical(presets::absorptive_bistability().with_drive(11.3)); }

void BM_CharCoeffs(benchmark::State& st) {
  const auto d = presets::supercritical_hopf().with_drive(2800);
  double x = 0.5;
  for (auto _ : st) {
    benchmark::DoNotOptimize(char_coeffs(d, cplx(x, 0.1)));
    x += 1e-9;
  }
}
BENCHMARK(BM_CharCoeffs);

void BM_HopfScan(benchmark::State& st) {
  const auto d = presets::supercritical_hopf();
  for (auto _ : st) benchmark::DoNotOptimize(find_hopf(d, AmplitudeRange{}));
}
BENCHMARK(BM_HopfScan)->Unit(benchmark::kMillisecond);

void BM_Liouvillian(benchmark::State& st) {
  const auto ops = quantum::build_space(static_cast<int>(st.range(0)));
  const auto p = bistable();
  for (auto _ : st) benchmark::DoNotOptimize(quantum::liouvillian(p, ops));
}
BENCHMARK(BM_Liouvillian)->Arg(20)->Arg(60)->Unit(benchmark::kMillisecond);

void BM_SteadyState(benchmark::State& st) {
  const auto p = bistable();
  for (auto _ : st) benchmark::DoNotOptimize(quantum::steady_state_at(p, static_cast<int>(st.range(0))));
}
BENCHMARK(BM_SteadyState)->Arg(20)->Arg(40)->Unit(benchmark::kMillisecond);

void BM_QFunction(benchmark::State& st) {
  const auto ss = quantum::steady_state_at(bistable(), 40);
  auto spec = quantum::GridSpec::automatic(ss.mean_photons);
  spec.n_re = spec.n_im = static_cast<int>(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(quantum::q_function(ss.rho, ss.ops.space, spec));
}
BENCHMARK(BM_QFunction)->Arg(101)->Arg(201)->Unit(benchmark::kMillisecond);

// Reported per SSE step.
void BM_SseSteps(benchmark::State& st) {
  const auto p = bistable();
  trajectories::SSEConfig c;
  c.dt = 1e-3;
  c.duration = 0.2;
  const int n = static_cast<int>(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(trajectories::simulate(p, n, c));
  st.SetItemsProcessed(st.iterations() * 200);
}
BENCHMARK(BM_SseSteps)->Arg(30)->Arg(60)->Arg(120)->Unit(benchmark::kMillisecond);

void BM_Welch(benchmark::State& st) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::vector<double> x(1 << 18);
  for (auto& v : x) v = nd(rng);
  for (auto _ : st) benchmark::DoNotOptimize(trajectories::power_spectrum(x, 0.01, 4096));
}
BENCHMARK(BM_Welch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
