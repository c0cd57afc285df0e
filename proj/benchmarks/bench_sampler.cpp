#include <benchmark/benchmark.h>

#include "churnprof/sampler.hpp"

#include "bench_common.hpp"

using namespace churnprof;

// One full sweep costs n_iter = 1; the benchmark reports time per sweep over
// all parameter blocks at the given customer count.
static void BM_McmcSweep(benchmark::State& state) {
    auto sim = simulate_dataset(bench::bench_scenario(static_cast<int>(state.range(0)), 25));
    PreparedData prep = prepare_data(sim.data);
    PriorConfig priors;
    for (auto _ : state) {
        McmcConfig cfg;
        cfg.n_adapt = 0;
        cfg.n_burnin = 0;
        cfg.n_iter = 10;
        cfg.thin = 10;
        cfg.n_chains = 1;
        cfg.seed = 7;
        benchmark::DoNotOptimize(run_mcmc(prep, priors, cfg));
    }
    state.SetItemsProcessed(state.iterations() * 10);
}
BENCHMARK(BM_McmcSweep)->Arg(10)->Arg(40)->Unit(benchmark::kMillisecond);

static void BM_SplitRhat(benchmark::State& state) {
    Rng rng(3);
    std::vector<std::vector<double>> chains(3);
    for (auto& ch : chains)
        for (int i = 0; i < 2000; ++i) ch.push_back(rng.normal());
    for (auto _ : state) benchmark::DoNotOptimize(split_rhat(chains));
}
BENCHMARK(BM_SplitRhat);

static void BM_Ess(benchmark::State& state) {
    Rng rng(4);
    std::vector<std::vector<double>> chains(3);
    for (auto& ch : chains) {
        double x = 0.0;
        for (int i = 0; i < 2000; ++i) {
            x = 0.5 * x + rng.normal();
            ch.push_back(x);
        }
    }
    for (auto _ : state) benchmark::DoNotOptimize(ess_from_chains(chains));
}
BENCHMARK(BM_Ess);
