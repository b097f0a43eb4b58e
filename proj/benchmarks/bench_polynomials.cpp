#include <benchmark/benchmark.h>

#include "genealogy/polynomials.hpp"
#include "genealogy/verification.hpp"

using namespace genealogy;

namespace {

Ums fixture(int max_leaves) {
  Rng rng(101);
  Ums u;
  do {
    u = random_ums(rng, max_leaves);
  } while (u.n_leaves() < max_leaves / 2);
  return u;
}

void BM_EvalTruncatedConst(benchmark::State& state) {
  Ums u = fixture(int(state.range(0)));
  PhiSpec spec{3, PhiFunction::constant(1.0)};
  double t = u.diameter() / 4 + 0.01;
  for (auto _ : state)
    benchmark::DoNotOptimize(eval_truncated_polynomial(u, spec, t).value);
}
BENCHMARK(BM_EvalTruncatedConst)->Arg(16)->Arg(64);

void BM_EvalPairExpOrder3(benchmark::State& state) {
  Ums u = fixture(int(state.range(0)));
  PhiSpec spec{3, PhiFunction::pair_exp(0.8)};
  for (auto _ : state) benchmark::DoNotOptimize(eval_polynomial(u, spec).value);
}
BENCHMARK(BM_EvalPairExpOrder3)->Arg(16)->Arg(32)->Arg(64);

void BM_EvalMonteCarlo(benchmark::State& state) {
  Ums u = fixture(48);
  PhiSpec spec{3, PhiFunction::pair_exp(0.8)};
  EvalOptions opts;
  opts.exact_threshold = 1;
  opts.mc_tuples = int(state.range(0));
  Rng rng(5);
  for (auto _ : state)
    benchmark::DoNotOptimize(eval_polynomial(u, spec, opts, &rng).value);
}
BENCHMARK(BM_EvalMonteCarlo)->Arg(1000)->Arg(10000);

void BM_GAdditive(benchmark::State& state) {
  Ums u = fixture(8);
  SmoothTruncation rho{6.0};
  PhiSpec spec{2, PhiFunction::pair_exp(0.5)};
  double t = u.diameter() / 2 + 0.05;
  for (auto _ : state)
    benchmark::DoNotOptimize(g_additive(u, spec, rho, t, 1.0));
}
BENCHMARK(BM_GAdditive);

}  // namespace
