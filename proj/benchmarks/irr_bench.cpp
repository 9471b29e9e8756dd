#include <benchmark/benchmark.h>

#include <random>

#include "labelforge/irr.hpp"

using namespace labelforge;

static void BM_CohensKappa(benchmark::State& state) {
  AgreementTable t(2, {20, 5, 10, 15});
  for (auto _ : state) benchmark::DoNotOptimize(cohens_kappa(t));
}
BENCHMARK(BM_CohensKappa);

static void BM_FleissKappa(benchmark::State& state) {
  std::mt19937_64 rng(3);
  RatingsMatrix m{4, {}};
  for (int i = 0; i < state.range(0); ++i) {
    std::vector<std::uint32_t> row(4, 0);
    for (int c = 0; c < 3; ++c) ++row[rng() % 4];
    m.rows.push_back(row);
  }
  for (auto _ : state) benchmark::DoNotOptimize(fleiss_kappa(m));
}
BENCHMARK(BM_FleissKappa)->Arg(100)->Arg(10000);
