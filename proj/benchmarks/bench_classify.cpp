#include <benchmark/benchmark.h>

#include "churnprof/classify.hpp"
#include "churnprof/rng.hpp"

using namespace churnprof;

namespace {

FeatureMatrix two_class(int n, int p, double shift) {
    Rng rng(21);
    FeatureMatrix fm;
    fm.source = "bench";
    for (int j = 0; j < p; ++j) fm.col_names.push_back("f" + std::to_string(j));
    for (int i = 0; i < n; ++i) {
        fm.row_ids.push_back("r" + std::to_string(i));
        bool pos = i % 2 == 0;
        fm.labels.push_back(pos ? ChurnLabel::cancelled : ChurnLabel::active);
        std::vector<double> x(p);
        for (auto& v : x) v = rng.normal() + (pos ? shift : 0.0);
        fm.rows.push_back(std::move(x));
    }
    return fm;
}

}  // namespace

static void BM_LassoFit(benchmark::State& state) {
    FeatureMatrix fm = two_class(40, static_cast<int>(state.range(0)), 1.0);
    standardize_features(fm);
    for (auto _ : state) benchmark::DoNotOptimize(fit_lasso_logistic(fm, 0.02));
}
BENCHMARK(BM_LassoFit)->Arg(11)->Arg(200);

static void BM_SvmFit(benchmark::State& state) {
    FeatureMatrix fm = two_class(static_cast<int>(state.range(0)), 11, 1.0);
    standardize_features(fm);
    SvmConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(fit_svm_poly(fm, cfg));
}
BENCHMARK(BM_SvmFit)->Arg(28)->Arg(100);

static void BM_ForestFit(benchmark::State& state) {
    FeatureMatrix fm = two_class(28, 11, 1.0);
    standardize_features(fm);
    ForestConfig cfg;
    cfg.n_trees = static_cast<int>(state.range(0));
    cfg.seed = 5;
    for (auto _ : state) benchmark::DoNotOptimize(fit_random_forest(fm, cfg));
}
BENCHMARK(BM_ForestFit)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);
