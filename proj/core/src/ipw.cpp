#include "imtk/ipw.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "imtk/features.hpp"

namespace imtk {

namespace {

template <typename Fn>
auto tagged(const std::string& tag, Fn&& fn) {
    try {
        return fn();
    } catch (const SeparationError& e) {
        throw SeparationError(tag + ": " + e.what());
    } catch (const NonConvergenceError& e) {
        throw NonConvergenceError(tag + ": " + e.what());
    } catch (const SingularDesignError& e) {
        throw SingularDesignError(tag + ": " + e.what());
    }
}

std::vector<std::size_t> rows_at(const Panel& panel, int k) { return at_risk_rows(panel, k); }

// Drops design terms that are constant over the fitting rows (degenerate
// panels, e.g. fully monitored ones, would otherwise be singular).
DesignSpec drop_constant_terms(DesignSpec spec, const Dataset& table,
                               const std::vector<std::size_t>& rows) {
    std::vector<Term> kept;
    for (const auto& term : spec.terms) {
        bool varies = false;
        double first = 1.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            double v = 1.0;
            for (const auto& f : term.factors) v *= table.col(f)[rows[i]];
            if (i == 0)
                first = v;
            else if (v != first) {
                varies = true;
                break;
            }
        }
        if (varies) kept.push_back(term);
    }
    spec.terms = std::move(kept);
    return spec;
}

}  // namespace

PropensityModels fit_propensity(const Panel& panel, CurveMode mode, bool stabilized) {
    const Dataset table = build_person_period_table(panel);
    PropensityModels out;
    out.mode = mode;
    out.stabilized = stabilized;

    DesignSpec base_spec;
    base_spec.terms = {Term::raw("l")};
    DesignSpec follow_spec;
    if (mode == CurveMode::Adapted)
        follow_spec.terms = {Term::raw("l"), Term::raw("a_lag1"), Term::raw("n_lag1")};
    else
        follow_spec.terms = {Term::raw("a_lag1"), Term::raw("l")};

    GlmOptions base_rows;
    base_rows.rows = rows_at(panel, 0);
    GlmOptions follow_rows;
    follow_rows.rows = at_risk_rows_from(panel, 1);

    out.baseline = tagged("propensity baseline", [&] {
        return fit_glm(Family::Logistic, drop_constant_terms(base_spec, table, base_rows.rows),
                       table, "a", base_rows);
    });
    if (follow_rows.rows.empty()) {
        out.followup = out.baseline;  // single-period panel: never consulted
    } else {
        out.followup = tagged("propensity follow-up", [&] {
            return fit_glm(Family::Logistic,
                           drop_constant_terms(follow_spec, table, follow_rows.rows), table, "a",
                           follow_rows);
        });
    }

    if (stabilized) {
        DesignSpec num_base;  // intercept only
        DesignSpec num_follow;
        num_follow.terms = {Term::raw("a_lag1")};
        out.stab_baseline = tagged("stabilizer baseline", [&] {
            return fit_glm(Family::Logistic, num_base, table, "a", base_rows);
        });
        if (follow_rows.rows.empty()) {
            out.stab_followup = out.stab_baseline;
        } else {
            out.stab_followup = tagged("stabilizer follow-up", [&] {
                return fit_glm(Family::Logistic,
                               drop_constant_terms(num_follow, table, follow_rows.rows), table,
                               "a", follow_rows);
            });
        }
    }
    return out;
}

WeightSet compute_weights(const Panel& panel, const PropensityModels& models,
                          const Strategy& strategy, const WeightOptions& options) {
    const Dataset table = build_person_period_table(panel);
    const std::size_t n = panel.records.size();

    const std::vector<double> p_base = predict(models.baseline, table);
    const std::vector<double> p_follow = predict(models.followup, table);
    std::vector<double> s_base, s_follow;
    if (models.stabilized) {
        s_base = predict(*models.stab_baseline, table);
        s_follow = predict(*models.stab_followup, table);
    }

    WeightSet ws;
    ws.w.assign(n, 0.0);
    ws.compatible.assign(n, 0);
    ws.stabilized = models.stabilized;
    ws.strategy = strategy.label();

    std::vector<int> hist;
    std::size_t i = 0;
    while (i < n) {
        const std::int64_t id = panel.records[i].id;
        std::size_t j = i;
        while (j < n && panel.records[j].id == id) ++j;

        hist.clear();
        double cumulative = 1.0;
        bool compatible = true;
        for (std::size_t r = i; r < j; ++r) {
            const auto& rec = panel.records[r];
            if (rec.at_risk != 1) break;
            if (compatible) {
                const PeriodClass cls = strategy.classify_period(hist, rec.k, panel.horizon);
                if (auto forced = forced_value(cls)) {
                    if (rec.a != *forced) {
                        compatible = false;
                    } else {
                        const double p1 = rec.k == 0 ? p_base[r] : p_follow[r];
                        const double denom = rec.a == 1 ? p1 : 1.0 - p1;
                        if (denom < options.positivity_floor)
                            throw PositivityViolation(rec.id, rec.k, denom);
                        double numer = 1.0;
                        if (models.stabilized) {
                            const double ps = rec.k == 0 ? s_base[r] : s_follow[r];
                            numer = rec.a == 1 ? ps : 1.0 - ps;
                        }
                        cumulative *= numer / denom;
                    }
                }
                // natural (grace) periods contribute exactly 1
            }
            if (compatible) {
                ws.w[r] = cumulative;
                ws.compatible[r] = 1;
            }
            hist.push_back(rec.a);
        }
        i = j;
    }

    if (options.cap_quantile) {
        const double q = *options.cap_quantile;
        for (int k = 0; k < panel.horizon; ++k) {
            std::vector<double> pos;
            for (std::size_t r = 0; r < n; ++r)
                if (panel.records[r].k == k && ws.w[r] > 0.0) pos.push_back(ws.w[r]);
            if (pos.size() < 2) continue;
            std::sort(pos.begin(), pos.end());
            const double h = q * (static_cast<double>(pos.size()) - 1.0);
            const std::size_t lo = static_cast<std::size_t>(h);
            const std::size_t hi = std::min(lo + 1, pos.size() - 1);
            const double cap = pos[lo] + (h - static_cast<double>(lo)) * (pos[hi] - pos[lo]);
            for (std::size_t r = 0; r < n; ++r)
                if (panel.records[r].k == k && ws.w[r] > cap) ws.w[r] = cap;
        }
    }
    return ws;
}

SurvivalCurve ipw_survival(const Panel& panel, const WeightSet& weights,
                           const Strategy& strategy, CurveMode mode) {
    const int K = panel.horizon;
    std::vector<double> num(static_cast<std::size_t>(K), 0.0),
        den(static_cast<std::size_t>(K), 0.0);
    for (std::size_t r = 0; r < panel.records.size(); ++r) {
        const auto& rec = panel.records[r];
        if (rec.at_risk != 1 || !weights.compatible[r]) continue;
        num[static_cast<std::size_t>(rec.k)] += weights.w[r] * rec.y;
        den[static_cast<std::size_t>(rec.k)] += weights.w[r];
    }

    SurvivalCurve curve;
    curve.method = "ipw";
    curve.mode = mode;
    curve.strategy = strategy.label();
    double s = 1.0;
    bool dead_end = false;
    for (int k = 0; k < K; ++k) {
        if (dead_end || den[static_cast<std::size_t>(k)] <= 0.0) {
            if (!dead_end)
                curve.notes.push_back("empty weighted risk set at period " + std::to_string(k));
            dead_end = true;
            curve.values.push_back(std::nan(""));
            continue;
        }
        const double hazard = num[static_cast<std::size_t>(k)] / den[static_cast<std::size_t>(k)];
        s *= 1.0 - hazard;
        curve.values.push_back(s);
    }
    return curve;
}

SurvivalCurve msm_survival(const Panel& panel, const WeightSet& weights,
                           const Strategy& strategy, CurveMode mode,
                           const std::vector<Term>& msm_terms) {
    const int K = panel.horizon;
    const Dataset table = build_person_period_table(panel);

    std::vector<std::size_t> fit_rows;
    for (std::size_t r = 0; r < panel.records.size(); ++r)
        if (panel.records[r].at_risk == 1 && weights.w[r] > 0.0) fit_rows.push_back(r);

    SurvivalCurve curve;
    curve.method = "msm";
    curve.mode = mode;
    curve.strategy = strategy.label();
    if (!weights.stabilized) curve.notes.push_back("unstabilized weights in MSM fit");
    if (fit_rows.empty()) {
        curve.values.assign(static_cast<std::size_t>(K), std::nan(""));
        curve.notes.push_back("no strategy-compatible person-periods");
        return curve;
    }

    DesignSpec spec;
    if (!msm_terms.empty()) {
        spec.terms = msm_terms;
    } else {
        // Default design: period dummies plus treatment-history columns,
        // keeping only columns that add rank over the fitting rows (for a
        // forced strategy the treatment columns are functions of time).
        std::vector<std::string> candidates;
        for (int t = 1; t < K; ++t) candidates.push_back("time_" + std::to_string(t));
        for (int t = 0; t < K; ++t) candidates.push_back("a_at_" + std::to_string(t));
        const std::size_t m = fit_rows.size();
        Eigen::MatrixXd basis(m, candidates.size() + 1);
        basis.col(0).setOnes();
        Eigen::Index used = 1;
        for (const auto& name : candidates) {
            const auto& col = table.col(name);
            for (std::size_t i = 0; i < m; ++i)
                basis(static_cast<Eigen::Index>(i), used) = col[fit_rows[i]];
            auto qr = basis.leftCols(used + 1).colPivHouseholderQr();
            qr.setThreshold(1e-9);
            if (qr.rank() == used + 1) {
                spec.terms.push_back(Term::raw(name));
                ++used;
            }
        }
    }

    GlmOptions opts;
    opts.rows = fit_rows;
    opts.weights = weights.w;
    FittedGlm model;
    try {
        model = fit_glm(Family::Logistic, spec, table, "y", opts);
    } catch (const SeparationError&) {
        // a time level with no (or all) events among followers: let the
        // ridge hold the boundary hazard at a large finite logit
        GlmOptions ridged = opts;
        ridged.ridge = 1e-3;
        ridged.separation_bound = 50.0;
        model = fit_glm(Family::Logistic, spec, table, "y", ridged);
        curve.notes.push_back("separation in MSM fit; boundary hazard ridged");
    }

    // Predicted hazard path along one full-length trajectory.
    auto trajectory_curve = [&](const std::vector<int>& traj) {
        Dataset rows(static_cast<std::size_t>(K));
        std::vector<double> zeros(static_cast<std::size_t>(K), 0.0);
        for (int t = 1; t < K; ++t) {
            auto col = zeros;
            col[static_cast<std::size_t>(t)] = 1.0;
            rows.add_column("time_" + std::to_string(t), col);
        }
        for (int t = 0; t < K; ++t) {
            std::vector<double> col(static_cast<std::size_t>(K), 0.0);
            for (int k = t; k < K; ++k)
                col[static_cast<std::size_t>(k)] = traj[static_cast<std::size_t>(t)];
            rows.add_column("a_at_" + std::to_string(t), col);
        }
        // user-supplied terms may reference other columns
        for (const auto& name :
             {"k", "a", "l", "n", "a_lag1", "a_lag2", "l_lag1", "l_lag2", "n_lag1", "n_lag2",
              "n_lag3", "l_sum3", "a_sum3"}) {
            if (!rows.has_column(name)) {
                std::vector<double> col(static_cast<std::size_t>(K), 0.0);
                if (std::string(name) == "k")
                    for (int k = 0; k < K; ++k) col[static_cast<std::size_t>(k)] = k;
                if (std::string(name) == "a")
                    for (int k = 0; k < K; ++k)
                        col[static_cast<std::size_t>(k)] = traj[static_cast<std::size_t>(k)];
                rows.add_column(name, col);
            }
        }
        return predict(model, rows);
    };

    const auto trajectories = strategy.enumerate_compatible(K);

    // Weighted frequency of each full trajectory among complete-follow-up
    // followers (stabilized-weighted when stabilized weights are in use).
    std::vector<double> freq(trajectories.size(), 0.0);
    std::size_t i = 0;
    const std::size_t n = panel.records.size();
    while (i < n) {
        std::size_t j = i;
        while (j < n && panel.records[j].id == panel.records[i].id) ++j;
        const std::size_t len = j - i;
        if (static_cast<int>(len) == K && weights.compatible[j - 1]) {
            std::vector<int> traj;
            traj.reserve(len);
            for (std::size_t r = i; r < j; ++r) traj.push_back(panel.records[r].a);
            for (std::size_t t = 0; t < trajectories.size(); ++t)
                if (trajectories[t] == traj) {
                    freq[t] += weights.w[j - 1];
                    break;
                }
        }
        i = j;
    }
    double total = 0.0;
    for (double f : freq) total += f;
    if (total <= 0.0) {
        freq.assign(trajectories.size(), 1.0 / static_cast<double>(trajectories.size()));
        curve.notes.push_back("no complete-follow-up followers; equal trajectory weights");
    } else {
        for (double& f : freq) f /= total;
    }

    curve.values.assign(static_cast<std::size_t>(K), 0.0);
    for (std::size_t t = 0; t < trajectories.size(); ++t) {
        if (freq[t] <= 0.0) continue;
        const auto hazards = trajectory_curve(trajectories[t]);
        double s = 1.0;
        for (int k = 0; k < K; ++k) {
            s *= 1.0 - hazards[static_cast<std::size_t>(k)];
            curve.values[static_cast<std::size_t>(k)] += freq[t] * s;
        }
    }
    return curve;
}

}  // namespace imtk
