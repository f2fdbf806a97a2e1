#include "imtk/tmle.hpp"

#include <algorithm>
#include <cmath>

#include "imtk/features.hpp"
#include "imtk/rng.hpp"

namespace imtk {

namespace {

constexpr double kClamp = 1e-6;

double clamp_prob(double p) { return std::min(1.0 - kClamp, std::max(kClamp, p)); }

}  // namespace

FluctuationResult fluctuate(const std::vector<double>& q_init,
                            const std::vector<double>& pseudo,
                            const std::vector<double>& weights,
                            const std::vector<std::uint8_t>& fit_mask) {
    const std::size_t n = q_init.size();
    if (pseudo.size() != n || weights.size() != n || fit_mask.size() != n)
        throw std::invalid_argument("fluctuate: mismatched lengths");

    std::vector<std::size_t> rows;
    double wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (fit_mask[i]) {
            rows.push_back(i);
            wsum += weights[i];
        }
    if (rows.empty() || wsum <= 0.0) throw EmptyFollowerSetError(-1);

    std::vector<double> offset(n);
    for (std::size_t i = 0; i < n; ++i) offset[i] = logit(clamp_prob(q_init[i]));

    Dataset data(n);
    data.add_column("pseudo", pseudo);
    data.add_column("offset", offset);

    DesignSpec spec;  // intercept only
    spec.offset_column = "offset";
    GlmOptions opts;
    opts.rows = rows;
    opts.weights = weights;
    FittedGlm fit;
    try {
        fit = fit_glm(Family::Logistic, spec, data, "pseudo", opts);
    } catch (const SeparationError&) {
        // Zero (or all) events among the followers: the update is a
        // boundary solution. A wider bound lets IRLS run until the score
        // genuinely vanishes, so the targeting identity still holds.
        GlmOptions wide = opts;
        wide.separation_bound = 60.0;
        fit = fit_glm(Family::Logistic, spec, data, "pseudo", wide);
    }

    FluctuationResult out;
    out.epsilon = fit.coefficients[0];
    out.q_star.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.q_star[i] = expit(offset[i] + out.epsilon);
    return out;
}

namespace {

// Record row of person `p` at period k, or SIZE_MAX if not at risk there.
std::size_t record_row_at(const Panel& panel, const Panel::Person& person, int k) {
    const std::size_t idx = person.begin + static_cast<std::size_t>(k);
    if (idx >= person.end) return SIZE_MAX;
    const auto& rec = panel.records[idx];
    if (rec.k != k || rec.at_risk != 1) return SIZE_MAX;
    return idx;
}

DesignSpec step_design(CurveMode mode, OutcomeForm form, int period) {
    DesignSpec spec;
    if (form == OutcomeForm::InterceptOnly) return spec;
    if (mode == CurveMode::Adapted) return adapted_outcome_design(period);
    spec.terms.push_back(Term::raw("l_sum3"));
    spec.terms.push_back(Term::raw("a_sum3"));
    return spec;
}

}  // namespace

TmleResult tmle_estimate(const Panel& panel, const Strategy& strategy, CurveMode mode,
                         int target_time, const PropensityModels* prefit,
                         const TmleOptions& options) {
    if (mode == CurveMode::Truth) throw std::invalid_argument("mode must be adapted or naive");
    if (target_time < 1 || target_time > panel.horizon)
        throw std::out_of_range("target_time must be in 1..K");
    if (panel.persons.empty())
        throw std::invalid_argument("panel is not indexed or empty");
    const int t = target_time - 1;

    const Dataset table = build_person_period_table(panel);

    PropensityModels local_prop;
    const PropensityModels* prop = prefit;
    if (!prop) {
        local_prop = fit_propensity(panel, mode, options.stabilized_weights);
        prop = &local_prop;
    }
    const WeightSet weights = compute_weights(panel, *prop, strategy);

    // Strategy-modified treatment per record: forced value in forced
    // periods, the individual's own observed treatment in grace periods.
    const std::size_t n_rec = panel.records.size();
    std::vector<double> mod_a(n_rec, 0.0);
    std::vector<int> hist;
    for (const auto& person : panel.persons) {
        hist.clear();
        for (std::size_t r = person.begin; r < person.end; ++r) {
            const auto& rec = panel.records[r];
            const auto cls = strategy.classify_period(hist, rec.k, panel.horizon);
            const auto forced = forced_value(cls);
            const int a = forced ? *forced : rec.a;
            mod_a[r] = a;
            hist.push_back(a);
        }
    }

    const std::size_t n_persons = panel.persons.size();
    std::vector<double> q_next(n_persons, 0.0);  // Q*_{j+1} for at-risk-at-(j+1) persons

    TargetingTrace trace;
    for (int j = t; j >= 0; --j) {
        std::vector<std::size_t> persons_j, rows_j;
        for (std::size_t p = 0; p < n_persons; ++p) {
            const std::size_t r = record_row_at(panel, panel.persons[p], j);
            if (r != SIZE_MAX) {
                persons_j.push_back(p);
                rows_j.push_back(r);
            }
        }
        if (persons_j.empty()) throw EmptyFollowerSetError(j);
        const std::size_t m = persons_j.size();

        // Step outcome: observed Y at the target period, otherwise the
        // previous step's targeted prediction with failures carried as 1.
        std::vector<double> resp(m);
        for (std::size_t i = 0; i < m; ++i) {
            const auto& rec = panel.records[rows_j[i]];
            if (j == t)
                resp[i] = rec.y;
            else
                resp[i] = rec.y == 1 ? 1.0 : q_next[persons_j[i]];
        }

        std::vector<double> q_pred(m);
        if (options.q_oracle) {
            q_pred = options.q_oracle(j, rows_j);
        } else {
            const DesignSpec spec = step_design(mode, options.outcome_form, j);
            Dataset step_data(m);
            step_data.add_column("resp", resp);
            for (const auto& name : {"a", "a_lag1", "a_lag2", "l", "l_lag1", "l_lag2", "n_lag1",
                                     "n_lag2", "n_lag3", "l_sum3", "a_sum3"}) {
                const auto& src = table.col(name);
                std::vector<double> col(m);
                for (std::size_t i = 0; i < m; ++i) col[i] = src[rows_j[i]];
                step_data.add_column(name, std::move(col));
            }
            FittedGlm fit;
            try {
                fit = fit_glm(Family::Logistic, spec, step_data, "resp", {});
            } catch (const SeparationError&) {
                // Boundary fit (e.g. a monitoring pattern with no events at
                // the last period); hold it at a large finite logit rather
                // than dropping the replication.
                GlmOptions ridged;
                ridged.ridge = 1e-3;
                ridged.separation_bound = 50.0;
                try {
                    fit = fit_glm(Family::Logistic, spec, step_data, "resp", ridged);
                } catch (const GlmError& e) {
                    throw GlmError("step regression (period " + std::to_string(j) +
                                   "): " + e.what());
                }
            } catch (const GlmError& e) {
                throw GlmError("step regression (period " + std::to_string(j) + "): " + e.what());
            }

            // Predict with treatment set per strategy.
            Dataset cf = step_data;
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t r = rows_j[i];
                const double a0 = mod_a[r];
                const double a1 = j >= 1 ? mod_a[r - 1] : 0.0;
                const double a2 = j >= 2 ? mod_a[r - 2] : 0.0;
                cf.mutable_col("a")[i] = a0;
                cf.mutable_col("a_lag1")[i] = a1;
                cf.mutable_col("a_lag2")[i] = a2;
                cf.mutable_col("a_sum3")[i] = a0 + a1 + a2;
            }
            q_pred = predict(fit, cf);
        }

        // Fluctuate among at-risk followers with their period-j weights.
        std::vector<double> w_j(m);
        std::vector<std::uint8_t> mask(m);
        std::size_t n_follow = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t r = rows_j[i];
            w_j[i] = weights.w[r];
            mask[i] = weights.compatible[r] && weights.w[r] > 0.0;
            if (mask[i]) ++n_follow;
        }
        if (n_follow == 0) throw EmptyFollowerSetError(j);

        TargetingStep step;
        step.period = j;
        step.n_followers = n_follow;
        double pre = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            if (mask[i]) pre += w_j[i] * (resp[i] - clamp_prob(q_pred[i]));
        step.pre_residual = std::abs(pre);

        std::vector<double> q_star(m);
        if (options.force_epsilon_zero) {
            step.epsilon = 0.0;
            for (std::size_t i = 0; i < m; ++i) q_star[i] = clamp_prob(q_pred[i]);
        } else {
            try {
                const FluctuationResult fl = fluctuate(q_pred, resp, w_j, mask);
                step.epsilon = fl.epsilon;
                q_star = fl.q_star;
            } catch (const EmptyFollowerSetError&) {
                throw EmptyFollowerSetError(j);
            }
        }
        double post = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            if (mask[i]) post += w_j[i] * (resp[i] - q_star[i]);
        step.post_residual = std::abs(post);
        trace.steps.push_back(step);

        for (std::size_t i = 0; i < m; ++i) q_next[persons_j[i]] = q_star[i];
    }

    // Every individual is at risk at period 0.
    double mean_q0 = 0.0;
    for (std::size_t p = 0; p < n_persons; ++p) mean_q0 += q_next[p];
    mean_q0 /= static_cast<double>(n_persons);

    TmleResult out;
    out.survival = 1.0 - mean_q0;
    out.trace = trace;
    out.trace.estimate = out.survival;
    return out;
}

SurvivalCurve tmle_curve(const Panel& panel, const Strategy& strategy, CurveMode mode,
                         const TmleOptions& options) {
    SurvivalCurve curve;
    curve.method = "tmle";
    curve.mode = mode;
    curve.strategy = strategy.label();

    PropensityModels prop = fit_propensity(panel, mode, options.stabilized_weights);
    for (int time = 1; time <= panel.horizon; ++time) {
        try {
            curve.values.push_back(
                tmle_estimate(panel, strategy, mode, time, &prop, options).survival);
        } catch (const std::exception& e) {
            curve.values.push_back(std::nan(""));
            curve.notes.push_back("time " + std::to_string(time) + ": " + e.what());
        }
    }
    for (std::size_t k = 1; k < curve.values.size(); ++k) {
        if (!std::isnan(curve.values[k]) && !std::isnan(curve.values[k - 1]) &&
            curve.values[k] > curve.values[k - 1] + 1e-12) {
            curve.non_monotone_flagged = true;
            break;
        }
    }
    return curve;
}

}  // namespace imtk
