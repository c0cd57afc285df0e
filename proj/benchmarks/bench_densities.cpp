#include <benchmark/benchmark.h>

#include "churnprof/model.hpp"
#include "churnprof/rng.hpp"

#include "bench_common.hpp"

using namespace churnprof;

static void BM_LogPmfZtpois(benchmark::State& state) {
    Rng rng(1);
    std::vector<long long> ns;
    std::vector<double> lambdas;
    for (int i = 0; i < 1024; ++i) {
        ns.push_back(1 + static_cast<long long>(rng.uniform_below(60)));
        lambdas.push_back(0.5 + 20.0 * rng.uniform());
    }
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(log_pmf_ztpois(ns[i & 1023], lambdas[i & 1023]));
        ++i;
    }
}
BENCHMARK(BM_LogPmfZtpois);

static void BM_LogPdfGammaMeanDisp(benchmark::State& state) {
    Rng rng(2);
    std::vector<double> ts, mus, psis;
    for (int i = 0; i < 1024; ++i) {
        ts.push_back(0.01 + 5.0 * rng.uniform());
        mus.push_back(0.1 + 3.0 * rng.uniform());
        psis.push_back(0.5 + 4.0 * rng.uniform());
    }
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            log_pdf_gamma_mean_disp(ts[i & 1023], mus[i & 1023], psis[i & 1023]));
        ++i;
    }
}
BENCHMARK(BM_LogPdfGammaMeanDisp);

static void BM_JointLogPosterior(benchmark::State& state) {
    auto sim = simulate_dataset(bench::bench_scenario(static_cast<int>(state.range(0)), 20));
    PreparedData prep = prepare_data(sim.data);
    PriorConfig priors;
    for (auto _ : state) {
        benchmark::DoNotOptimize(joint_log_posterior(prep, sim.truth, priors));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(sim.data.total_events()));
}
BENCHMARK(BM_JointLogPosterior)->Arg(10)->Arg(40);

BENCHMARK_MAIN();
