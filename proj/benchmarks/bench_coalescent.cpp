#include <benchmark/benchmark.h>

#include "genealogy/coalescent.hpp"

using namespace genealogy;

namespace {

void BM_Kingman(benchmark::State& state) {
  int n = int(state.range(0));
  uint64_t stream = 0;
  for (auto _ : state) {
    Rng rng(23, stream++);
    auto traj = simulate_kingman(n, 1.0, 0.5, rng);
    benchmark::DoNotOptimize(traj.back().beta);
  }
}
BENCHMARK(BM_Kingman)->Arg(2)->Arg(4)->Arg(8);

void BM_SpatialCoalescent(benchmark::State& state) {
  CoalescentConfig cfg;
  cfg.n = int(state.range(0));
  cfg.b = 1.0;
  cfg.horizon = 0.5;
  cfg.space = SiteSpace::uniform(3);
  cfg.init_sites.assign(cfg.n, 0);
  uint64_t stream = 0;
  for (auto _ : state) {
    Rng rng(29, stream++);
    benchmark::DoNotOptimize(run_coalescent(cfg, rng).beta);
  }
}
BENCHMARK(BM_SpatialCoalescent)->Arg(2)->Arg(4);

void BM_DualityPairing(benchmark::State& state) {
  Rng mk(31);
  Ums u0 = Ums::join(0.3, {Ums::leaf(1.0), Ums::leaf(0.5), Ums::leaf(0.25)});
  CoalescentConfig cfg;
  cfg.n = 3;
  cfg.horizon = 0.4;
  Rng rng(37);
  CoalescentState fin = run_coalescent(cfg, rng);
  PhiSpec spec{3, PhiFunction::constant(1.0)};
  SmoothTruncation rho{8.0};
  for (auto _ : state)
    benchmark::DoNotOptimize(duality_pairing(u0, fin, spec, rho, 0.4));
}
BENCHMARK(BM_DualityPairing);

}  // namespace
