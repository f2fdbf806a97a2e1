#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "imtk/ipw.hpp"
#include "imtk/panel.hpp"
#include "imtk/strategy.hpp"

namespace imtk {

struct EmptyFollowerSetError : std::runtime_error {
    explicit EmptyFollowerSetError(int period_)
        : std::runtime_error("no at-risk strategy followers with positive weight at period " +
                             std::to_string(period_)),
          period(period_) {}
    int period;
};

// One backward targeting step of the ICE recursion.
struct TargetingStep {
    int period;
    double epsilon;
    std::size_t n_followers;
    double pre_residual;   // |sum w (pseudo - q_init)| on the fitting set
    double post_residual;  // |sum w (pseudo - q_star)|, < 1e-6 when targeted
};

struct TargetingTrace {
    std::vector<TargetingStep> steps;  // from the target period down to 0
    double estimate;                   // survival scale
};

struct FluctuationResult {
    double epsilon;
    std::vector<double> q_star;
};

// Intercept-only weighted logistic fluctuation with logit(q_init) as
// offset, fitted on fit_mask rows, applied to every row. q_init is
// clamped to [1e-6, 1-1e-6] before taking logits.
FluctuationResult fluctuate(const std::vector<double>& q_init,
                            const std::vector<double>& pseudo,
                            const std::vector<double>& weights,
                            const std::vector<std::uint8_t>& fit_mask);

enum class OutcomeForm { PerMode, InterceptOnly };

struct TmleOptions {
    bool force_epsilon_zero = false;       // degrade to un-targeted ICE
    OutcomeForm outcome_form = OutcomeForm::PerMode;
    bool stabilized_weights = false;
    // Test hook: replaces the step regression + prediction. Receives the
    // backward-step period and the panel record row of each at-risk
    // individual; returns their plugged-in Q predictions.
    std::function<std::vector<double>(int period, const std::vector<std::size_t>& record_rows)>
        q_oracle;
};

struct TmleResult {
    double survival;
    TargetingTrace trace;
};

// Longitudinal TMLE for one target time (1..K) via iterated conditional
// expectations with weighted intercept-only targeting. Natural periods
// keep each individual's observed treatment when plugging in the
// strategy. A prefit PropensityModels may be supplied to share fits
// across target times.
TmleResult tmle_estimate(const Panel& panel, const Strategy& strategy, CurveMode mode,
                         int target_time, const PropensityModels* prefit = nullptr,
                         const TmleOptions& options = {});

// One independent run per target time; per-time failures leave NaN
// values with notes. Monotonicity is not guaranteed and is flagged.
SurvivalCurve tmle_curve(const Panel& panel, const Strategy& strategy, CurveMode mode,
                         const TmleOptions& options = {});

}  // namespace imtk
