#include <benchmark/benchmark.h>

#include <cmath>

#include "genealogy/feller.hpp"
#include "genealogy/spatial.hpp"

using namespace genealogy;

namespace {

GwConfig config(int N, double horizon, double a = 0.0) {
  GwConfig cfg;
  cfg.a = a;
  cfg.b = 1.0;
  cfg.particles_per_unit_mass = N;
  cfg.initial = Ums::leaf(1.0);
  cfg.horizon = horizon;
  cfg.particle_cap = 1'000'000'000;
  return cfg;
}

void BM_FamilyCounts(benchmark::State& state) {
  GwConfig cfg = config(int(state.range(0)), 1.0, 1.0);
  std::vector<double> times = {0.5, 1.0};
  uint64_t stream = 0;
  long long particles = 0;
  for (auto _ : state) {
    Rng rng(7, stream++);
    FamilyCounts fc = simulate_family_counts(cfg, times, rng);
    benchmark::DoNotOptimize(fc.counts[0].data());
    particles += cfg.particles_per_unit_mass;  // proxy; real count below
  }
  // report throughput in expected particles processed per second
  double n = double(cfg.particles_per_unit_mass);
  double expected = n * n * (std::exp(cfg.a * cfg.horizon) - 1.0) / cfg.a;
  state.SetItemsProcessed(int64_t(expected * state.iterations()));
}
BENCHMARK(BM_FamilyCounts)->Arg(200)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_ReducedTree(benchmark::State& state) {
  GwConfig cfg = config(int(state.range(0)), 0.5);
  uint64_t stream = 0;
  for (auto _ : state) {
    Rng rng(11, stream++);
    Ums u = simulate_reduced(cfg, rng);
    benchmark::DoNotOptimize(u.total_mass());
  }
  double n = double(cfg.particles_per_unit_mass);
  state.SetItemsProcessed(int64_t(n * n * cfg.horizon * state.iterations()));
}
BENCHMARK(BM_ReducedTree)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_RecordedGenealogy(benchmark::State& state) {
  GwConfig cfg = config(int(state.range(0)), 0.5);
  uint64_t stream = 0;
  for (auto _ : state) {
    Rng rng(13, stream++);
    Genealogy g = simulate_gw(cfg, rng);
    benchmark::DoNotOptimize(g.particles.data());
  }
}
BENCHMARK(BM_RecordedGenealogy)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_SpatialBrw(benchmark::State& state) {
  GwConfig cfg = config(int(state.range(0)), 0.5);
  SiteSpace space = SiteSpace::uniform(4);
  MarkedUms init = MarkedUms::at_site(cfg.initial, 0);
  uint64_t stream = 0;
  for (auto _ : state) {
    Rng rng(17, stream++);
    SpatialGenealogy g = simulate_brw(space, cfg, init, rng);
    benchmark::DoNotOptimize(g.particles.data());
  }
}
BENCHMARK(BM_SpatialBrw)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_RngExponentialBatch(benchmark::State& state) {
  Rng rng(3);
  ExpBatch batch;
  double acc = 0;
  for (auto _ : state) acc += batch.next(rng);
  benchmark::DoNotOptimize(acc);
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RngExponentialBatch);

}  // namespace
