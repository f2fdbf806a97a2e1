#include <benchmark/benchmark.h>

#include "imtk/dgm.hpp"
#include "imtk/gcomp.hpp"
#include "imtk/glm.hpp"
#include "imtk/ipw.hpp"
#include "imtk/rng.hpp"
#include "imtk/tmle.hpp"

namespace {

void BM_SimulateCohort(benchmark::State& state) {
    const auto params = imtk::scenario_params(1);
    const auto n = state.range(0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(imtk::simulate_cohort(params, n, 42));
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SimulateCohort)->Arg(3000)->Arg(100000);

void BM_SimulateTruth(benchmark::State& state) {
    const auto params = imtk::scenario_params(1);
    const auto strategy = imtk::Strategy::wait_to_treat(2, 3, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(imtk::simulate_truth(params, strategy, state.range(0), 42));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimulateTruth)->Arg(100000);

void BM_LogisticFit(benchmark::State& state) {
    imtk::Rng rng(7);
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    std::vector<double> x(n), z(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.normal();
        z[i] = rng.bernoulli(0.4);
        y[i] = rng.bernoulli(imtk::expit(-0.3 + 0.8 * x[i] + 0.5 * z[i]));
    }
    imtk::Dataset d(n);
    d.add_column("x", std::move(x));
    d.add_column("z", std::move(z));
    d.add_column("y", std::move(y));
    imtk::DesignSpec spec;
    spec.terms = {imtk::Term::raw("x"), imtk::Term::raw("z")};
    for (auto _ : state) {
        benchmark::DoNotOptimize(imtk::fit_glm(imtk::Family::Logistic, spec, d, "y"));
    }
}
BENCHMARK(BM_LogisticFit)->Arg(15000);

void BM_GcompSurvival(benchmark::State& state) {
    const auto panel = imtk::simulate_cohort(imtk::scenario_params(1), 3000, 3);
    const auto models = imtk::fit_gcomp_models(panel, imtk::CurveMode::Adapted);
    const auto pool = imtk::baseline_covariate_pool(panel);
    const auto strategy = imtk::Strategy::treat_early(3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(imtk::gcomp_survival(models, pool, strategy, 10000, 5));
    }
}
BENCHMARK(BM_GcompSurvival);

void BM_TmleEstimate(benchmark::State& state) {
    const auto panel = imtk::simulate_cohort(imtk::scenario_params(1), 3000, 3);
    const auto prop = imtk::fit_propensity(panel, imtk::CurveMode::Adapted, false);
    const auto strategy = imtk::Strategy::wait_to_treat(2, 3, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            imtk::tmle_estimate(panel, strategy, imtk::CurveMode::Adapted, 5, &prop));
    }
}
BENCHMARK(BM_TmleEstimate);

}  // namespace

BENCHMARK_MAIN();
