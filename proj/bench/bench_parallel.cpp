// Copyright 2026 The malliavin-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Serial reference vs OpenMP for the path-parallel kernels. The second
// argument selects the mode: 0 serial, 1 parallel.
#include <benchmark/benchmark.h>

#include "malliavin/mmatrix.hpp"
#include "malliavin/scenarios.hpp"

using namespace malliavin;

namespace {

EnsembleOptions mode(const benchmark::State& state) {
  return EnsembleOptions{state.range(1) == 0 ? Execution::Serial : Execution::Parallel, 0};
}

void BM_TerminalEnsemble(benchmark::State& state) {
  const auto sc = make_scenario("langevin");
  const GridSpec spec{1.0, 256, 1, {}};
  const auto paths = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto r = map_paths<Vec>(
        paths, KernelScratch{},
        [&](std::size_t p, KernelScratch& ks) {
          return integrate_terminal(sc.system, sc.x0, sample_increments(spec, 1, p), Scheme::StratonovichHeun, ks);
        },
        mode(state));
    benchmark::DoNotOptimize(r.values.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_CovarianceEnsemble(benchmark::State& state) {
  const auto sc = make_scenario("langevin");
  const GridSpec grid{1.0, 100, 1, {}};
  for (auto _ : state) {
    auto r = covariance_ensemble(sc.system, sc.x0, grid, static_cast<std::size_t>(state.range(0)), 1, mode(state));
    benchmark::DoNotOptimize(r.values.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Kde(benchmark::State& state) {
  std::vector<double> samples;
  for (std::int64_t i = 0; i < state.range(0); ++i) samples.push_back(std::sin(0.37 * static_cast<double>(i)));
  std::vector<double> grid;
  for (int i = 0; i <= 200; ++i) grid.push_back(-1.5 + 0.015 * i);
  for (auto _ : state) {
    auto d = kde_density(samples, 0.05, grid, mode(state));
    benchmark::DoNotOptimize(d.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_TerminalEnsemble)->ArgsProduct({{1000, 10000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CovarianceEnsemble)->ArgsProduct({{1000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Kde)->ArgsProduct({{100000}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
