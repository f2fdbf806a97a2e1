#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "imtk/dgm.hpp"
#include "imtk/glm.hpp"
#include "imtk/panel.hpp"
#include "imtk/strategy.hpp"

namespace imtk {

// Conditional models for the NICE g-formula forward simulation. The
// outcome regression is fitted per period (the pooled form with shared
// slopes distorts the early-period fit badly). The adapted covariate
// model is gaussian with L_{k-1} as offset and no intercept, so an
// unmonitored transition carries the covariate forward unchanged; its
// residual variance is estimated on monitored transitions only. Naive
// mode drops the monitoring models entirely.
struct NuisanceModels {
    CurveMode mode = CurveMode::Adapted;
    std::vector<FittedGlm> y_models;  // one per period 0..K-1
    std::vector<FittedGlm> l_models;  // one per period 1..K-1 (index k-1)
    // Residual variances per period, split by whether the previous
    // transition was also monitored (fresh-to-fresh vs across a gap);
    // estimated on monitored transitions only.
    std::vector<double> l_var_consecutive;
    std::vector<double> l_var_gap;
    FittedGlm a_baseline;
    FittedGlm a_followup;
    std::optional<FittedGlm> n_baseline;
    std::optional<FittedGlm> n_followup;
    int horizon = 5;
};

NuisanceModels fit_gcomp_models(const Panel& panel, CurveMode mode);

// Nuisance models holding the data-generating parameters themselves
// (no fitting); used by the oracle-equivalence checks.
NuisanceModels nuisance_from_params(const ScenarioParams& params);

// Monte Carlo forward simulation under `strategy`: baseline covariates
// resampled from `baseline_pool`, then covariate / monitoring /
// treatment / outcome draws from the fitted models. Deterministic given
// the seed.
SurvivalCurve gcomp_survival(const NuisanceModels& models,
                             const std::vector<double>& baseline_pool,
                             const Strategy& strategy, std::int64_t n_mc,
                             std::uint64_t seed, int workers = 1);

// Observed baseline covariate values (one per individual).
std::vector<double> baseline_covariate_pool(const Panel& panel);

// Simulated trajectories from the fitted models as a synthetic panel
// (l_star absent, naive mode leaves n = 0). Shares the generator with
// gcomp_survival; useful for diagnostics and invariant checks.
Panel gcomp_sample_paths(const NuisanceModels& models, const std::vector<double>& baseline_pool,
                         const Strategy& strategy, std::int64_t n_paths, std::uint64_t seed);

}  // namespace imtk
