#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "imtk/glm.hpp"
#include "imtk/panel.hpp"
#include "imtk/strategy.hpp"

namespace imtk {

struct PositivityViolation : std::runtime_error {
    PositivityViolation(std::int64_t id_, int k_, double p_)
        : std::runtime_error("positivity violation at id=" + std::to_string(id_) +
                             " k=" + std::to_string(k_) + " (p=" + std::to_string(p_) + ")"),
          id(id_), k(k_), p(p_) {}
    std::int64_t id;
    int k;
    double p;
};

// Treatment models: a baseline fit for A_0 and a pooled follow-up fit for
// A_k (k >= 1). Adapted conditions on {L_k, A_{k-1}, N_{k-1}}, naive on
// {A_{k-1}, L_k}. Stabilizer numerator models condition on treatment
// history only.
struct PropensityModels {
    CurveMode mode = CurveMode::Adapted;
    FittedGlm baseline;
    FittedGlm followup;
    bool stabilized = false;
    std::optional<FittedGlm> stab_baseline;
    std::optional<FittedGlm> stab_followup;
};

PropensityModels fit_propensity(const Panel& panel, CurveMode mode, bool stabilized);

// Per-record inverse-probability weights for one strategy. w[r] pairs
// with panel.records[r]; zero once the observed trajectory deviates from
// the strategy (and for at_risk = 0 rows). Grace periods contribute a
// factor of exactly 1.
struct WeightSet {
    std::vector<double> w;
    std::vector<std::uint8_t> compatible;  // through this record's period
    bool stabilized = false;
    std::string strategy;
};

struct WeightOptions {
    double positivity_floor = 1e-12;
    // Optional percentile cap applied per period to positive weights
    // (e.g. 0.99); off by default.
    std::optional<double> cap_quantile;
};

WeightSet compute_weights(const Panel& panel, const PropensityModels& models,
                          const Strategy& strategy, const WeightOptions& options = {});

// Nonparametric weighted discrete-hazard estimator. Times with an empty
// weighted risk set are missing (NaN), as are all later times.
SurvivalCurve ipw_survival(const Panel& panel, const WeightSet& weights,
                           const Strategy& strategy, CurveMode mode);

// Pooled-logistic marginal structural model with categorical time.
// Empty msm_terms selects the default design (period dummies plus
// treatment-history columns, dropping columns constant over the
// positive-weight rows). Survival is standardized over the strategy's
// compatible trajectories, weighted by their weighted frequency among
// complete-follow-up followers.
SurvivalCurve msm_survival(const Panel& panel, const WeightSet& weights,
                           const Strategy& strategy, CurveMode mode,
                           const std::vector<Term>& msm_terms = {});

}  // namespace imtk
