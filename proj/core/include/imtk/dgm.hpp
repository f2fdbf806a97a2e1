#pragma once

#include <cstdint>

#include "imtk/panel.hpp"
#include "imtk/strategy.hpp"

namespace imtk {

// Coefficient set for one simulation scenario (ids 1..5). The covariate
// noise `sigma2` is a variance; `frailty_sd` is the standard deviation
// of the individual frailty U.
struct ScenarioParams {
    int id = 1;
    // model for L*_k
    double beta_l0 = 0.1;
    double beta_lL = 1.2;
    double beta_lA = -1.2;
    double beta_lU = 1.0;
    double sigma2 = 1.0;
    // model for A_k
    double beta_a0 = -0.3;
    double beta_aL = 0.5;
    double beta_aA = 0.7;
    double beta_aN = 1.2;
    // model for N_k
    double beta_n0 = -2.0;
    double beta_nL = 2.0;
    double beta_nA = 2.0;
    double beta_nN = 0.5;
    // model for Y_k
    double beta_y0 = -0.7;
    double beta_yL = 0.6;
    double beta_yA = -0.3;
    double beta_yU = 0.05;

    double frailty_sd = 0.1;
    int horizon = 5;
};

// Exact parameter columns for scenarios 1..5. Throws std::out_of_range
// for an unknown id.
ScenarioParams scenario_params(int id);

struct TruthCurve {
    SurvivalCurve curve;  // mode = Truth
    std::int64_t n_individuals = 0;
    std::vector<double> mc_se;
};

// Observational cohort simulation. Deterministic given (params, n, seed);
// per-individual substreams make the result independent of `workers`.
Panel simulate_cohort(const ScenarioParams& params, std::int64_t n, std::uint64_t seed,
                      int workers = 1);

// Intervened simulation: treatment follows the strategy (natural periods
// draw from the observational treatment model). Survival at time k+1 is
// the simple proportion alive at the end of period k.
TruthCurve simulate_truth(const ScenarioParams& params, const Strategy& strategy,
                          std::int64_t n, std::uint64_t seed, int workers = 1);

}  // namespace imtk
