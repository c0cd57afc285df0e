#include <benchmark/benchmark.h>

#include "churnprof/cluster.hpp"
#include "churnprof/rng.hpp"

using namespace churnprof;

namespace {

std::vector<std::vector<double>> random_rows(int n, int dim) {
    Rng rng(11);
    std::vector<std::vector<double>> rows(n, std::vector<double>(dim));
    for (auto& row : rows)
        for (auto& v : row) v = rng.normal();
    return rows;
}

}  // namespace

static void BM_DistanceMatrix(benchmark::State& state) {
    auto rows = random_rows(static_cast<int>(state.range(0)), 11);
    for (auto _ : state) benchmark::DoNotOptimize(distance_matrix(rows));
}
BENCHMARK(BM_DistanceMatrix)->Arg(40)->Arg(200);

static void BM_WardLinkage(benchmark::State& state) {
    auto rows = random_rows(static_cast<int>(state.range(0)), 11);
    DistanceMatrix dist = distance_matrix(rows);
    for (auto _ : state) benchmark::DoNotOptimize(ward_linkage(dist));
}
BENCHMARK(BM_WardLinkage)->Arg(40)->Arg(200)->Unit(benchmark::kMillisecond);
