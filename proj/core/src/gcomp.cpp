#include "imtk/gcomp.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "imtk/features.hpp"
#include "imtk/rng.hpp"

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

FittedGlm direct_fit(Family family, DesignSpec spec, std::vector<double> coefficients,
                     double residual_variance = 0.0) {
    FittedGlm fit;
    fit.family = family;
    fit.spec = std::move(spec);
    fit.coefficients = std::move(coefficients);
    fit.residual_variance = residual_variance;
    fit.converged = true;
    return fit;
}

}  // namespace

NuisanceModels fit_gcomp_models(const Panel& panel, CurveMode mode) {
    if (mode == CurveMode::Truth) throw std::invalid_argument("mode must be adapted or naive");
    const Dataset table = build_person_period_table(panel);
    NuisanceModels out;
    out.mode = mode;
    out.horizon = panel.horizon;

    GlmOptions base_rows;
    base_rows.rows = at_risk_rows(panel, 0);
    GlmOptions follow_rows;
    follow_rows.rows = at_risk_rows_from(panel, 1);

    {
        DesignSpec spec;
        spec.terms = {Term::raw("l")};
        out.a_baseline = tagged("treatment baseline", [&] {
            return fit_glm(Family::Logistic, spec, table, "a", base_rows);
        });
    }
    {
        DesignSpec spec;
        if (mode == CurveMode::Adapted)
            spec.terms = {Term::raw("l"), Term::raw("a_lag1"), Term::raw("n_lag1")};
        else
            spec.terms = {Term::raw("a_lag1"), Term::raw("l")};
        out.a_followup = tagged("treatment follow-up", [&] {
            return fit_glm(Family::Logistic, spec, table, "a", follow_rows);
        });
    }

    if (mode == CurveMode::Adapted) {
        {
            DesignSpec spec;
            spec.terms = {Term::raw("l"), Term::raw("a")};
            out.n_baseline = tagged("monitoring baseline", [&] {
                return fit_glm(Family::Logistic, spec, table, "n", base_rows);
            });
        }
        {
            DesignSpec spec;
            spec.terms = {Term::raw("l"), Term::raw("a"), Term::raw("n_lag1")};
            out.n_followup = tagged("monitoring follow-up", [&] {
                return fit_glm(Family::Logistic, spec, table, "n", follow_rows);
            });
        }
        for (int k = 1; k < panel.horizon; ++k) {
            DesignSpec spec;
            spec.intercept = false;
            spec.offset_column = "l_lag1";
            spec.terms = {Term::raw("n_lag1"), Term::product({"l_lag1", "n_lag1"})};
            if (k >= 2) {
                // at k = 1 the second monitoring lag is constant 1
                spec.terms.push_back(Term::product({"l_lag1", "n_lag1", "n_lag2"}));
            }
            spec.terms.push_back(Term::product({"a_lag1", "n_lag1"}));
            if (k >= 2) spec.terms.push_back(Term::product({"a_lag1", "n_lag1", "n_lag2"}));
            GlmOptions rows_k;
            rows_k.rows = at_risk_rows(panel, k);
            auto model = tagged("covariate model (period " + std::to_string(k) + ")", [&] {
                return fit_glm(Family::Gaussian, spec, table, "l", rows_k);
            });
            // Unmonitored transitions have zero residual by construction;
            // estimate variances on monitored transitions only, split by
            // whether the lagged covariate was itself fresh (the gap
            // regime extrapolates further and carries more noise).
            std::vector<std::size_t> consec, gap;
            const auto& n_lag1 = table.col("n_lag1");
            const auto& n_lag2 = table.col("n_lag2");
            for (std::size_t r : rows_k.rows) {
                if (n_lag1[r] != 1.0) continue;
                (n_lag2[r] == 1.0 ? consec : gap).push_back(r);
            }
            const double v_consec =
                consec.size() > spec.n_coefficients()
                    ? weighted_residual_variance(model, table, "l", consec)
                    : 0.0;
            double v_gap = v_consec;
            if (gap.size() > spec.n_coefficients())
                v_gap = weighted_residual_variance(model, table, "l", gap);
            out.l_var_consecutive.push_back(v_consec);
            out.l_var_gap.push_back(v_gap);
            out.l_models.push_back(std::move(model));
        }
        for (int k = 0; k < panel.horizon; ++k) {
            GlmOptions rows_k;
            rows_k.rows = at_risk_rows(panel, k);
            out.y_models.push_back(tagged("outcome model (period " + std::to_string(k) + ")",
                                          [&] {
                                              return fit_glm(Family::Logistic,
                                                             adapted_outcome_design(k), table,
                                                             "y", rows_k);
                                          }));
        }
    } else {
        for (int k = 1; k < panel.horizon; ++k) {
            DesignSpec spec;
            spec.terms = {Term::raw("l_lag1"), Term::raw("a_lag1")};
            GlmOptions rows_k;
            rows_k.rows = at_risk_rows(panel, k);
            auto model = tagged("covariate model (period " + std::to_string(k) + ")", [&] {
                return fit_glm(Family::Gaussian, spec, table, "l", rows_k);
            });
            out.l_var_consecutive.push_back(model.residual_variance);
            out.l_var_gap.push_back(model.residual_variance);
            out.l_models.push_back(std::move(model));
        }
        for (int k = 0; k < panel.horizon; ++k) {
            DesignSpec spec;
            spec.terms = {Term::raw("l_sum3"), Term::raw("a_sum3")};
            GlmOptions rows_k;
            rows_k.rows = at_risk_rows(panel, k);
            out.y_models.push_back(tagged("outcome model (period " + std::to_string(k) + ")",
                                          [&] {
                                              return fit_glm(Family::Logistic, spec, table, "y",
                                                             rows_k);
                                          }));
        }
    }
    return out;
}

NuisanceModels nuisance_from_params(const ScenarioParams& p) {
    NuisanceModels out;
    out.mode = CurveMode::Adapted;
    out.horizon = p.horizon;

    {
        DesignSpec spec;
        spec.terms = {Term::raw("l")};
        out.a_baseline = direct_fit(Family::Logistic, spec, {p.beta_a0, p.beta_aL});
    }
    {
        DesignSpec spec;
        spec.terms = {Term::raw("l"), Term::raw("a_lag1"), Term::raw("n_lag1")};
        out.a_followup =
            direct_fit(Family::Logistic, spec, {p.beta_a0, p.beta_aL, p.beta_aA, p.beta_aN});
    }
    {
        DesignSpec spec;
        spec.terms = {Term::raw("l"), Term::raw("a")};
        out.n_baseline = direct_fit(Family::Logistic, spec, {p.beta_n0, p.beta_nL, p.beta_nA});
    }
    {
        DesignSpec spec;
        spec.terms = {Term::raw("l"), Term::raw("a"), Term::raw("n_lag1")};
        out.n_followup =
            direct_fit(Family::Logistic, spec, {p.beta_n0, p.beta_nL, p.beta_nA, p.beta_nN});
    }
    for (int k = 1; k < p.horizon; ++k) {
        DesignSpec spec;
        spec.intercept = false;
        spec.offset_column = "l_lag1";
        spec.terms = {Term::raw("n_lag1"), Term::product({"l_lag1", "n_lag1"})};
        std::vector<double> coef = {p.beta_l0, p.beta_lL - 1.0};
        if (k >= 2) {
            spec.terms.push_back(Term::product({"l_lag1", "n_lag1", "n_lag2"}));
            coef.push_back(0.0);
        }
        spec.terms.push_back(Term::product({"a_lag1", "n_lag1"}));
        coef.push_back(p.beta_lA);
        if (k >= 2) {
            spec.terms.push_back(Term::product({"a_lag1", "n_lag1", "n_lag2"}));
            coef.push_back(0.0);
        }
        out.l_models.push_back(direct_fit(Family::Gaussian, spec, std::move(coef), p.sigma2));
        out.l_var_consecutive.push_back(p.sigma2);
        out.l_var_gap.push_back(p.sigma2);
    }
    for (int k = 0; k < p.horizon; ++k) {
        DesignSpec spec;
        std::vector<double> coef = {p.beta_y0, p.beta_yA};
        spec.terms.push_back(Term::raw("a"));
        if (k >= 1) {
            spec.terms.push_back(Term::raw("a_lag1"));
            coef.push_back(p.beta_yA);
        }
        if (k >= 2) {
            spec.terms.push_back(Term::raw("a_lag2"));
            coef.push_back(0.0);
        }
        spec.terms.push_back(Term::product({"n_lag1", "l"}));
        coef.push_back(p.beta_yL);
        if (k >= 1) {
            spec.terms.push_back(Term::product({"n_lag2", "l_lag1"}));
            coef.push_back(p.beta_yL);
        }
        if (k >= 2) {
            spec.terms.push_back(Term::product({"n_lag3", "l_lag2"}));
            coef.push_back(0.0);
        }
        out.y_models.push_back(direct_fit(Family::Logistic, spec, std::move(coef)));
    }
    return out;
}

std::vector<double> baseline_covariate_pool(const Panel& panel) {
    std::vector<double> pool;
    for (const auto& rec : panel.records)
        if (rec.k == 0) pool.push_back(rec.l);
    if (pool.empty()) throw std::invalid_argument("panel has no baseline records");
    return pool;
}

namespace {

// Coefficients unpacked by name once, so the simulation loop is plain
// arithmetic.
struct GcompSim {
    bool adapted;
    int K;
    // per-period outcome coefficients; absent terms are zero
    struct YCoef {
        double b0 = 0, a0 = 0, a1 = 0, a2 = 0;
        double bn[3] = {}, bl[3] = {}, bnl[3] = {};  // adapted lag triples
        double lsum = 0, asum = 0;                   // naive
    };
    YCoef y[16];
    // per-period covariate models (index k-1)
    struct LCoef {
        double n1 = 0, ln1 = 0, ln12 = 0, an1 = 0, an12 = 0;  // adapted
        double g0 = 0, gl = 0, ga = 0;                        // naive
        double sd_consec = 0, sd_gap = 0;
    };
    LCoef lmod[16];
    // treatment and monitoring models
    double ab0 = 0, abL = 0, af0 = 0, afL = 0, afA = 0, afN = 0;
    double nb0 = 0, nbL = 0, nbA = 0, nf0 = 0, nfL = 0, nfA = 0, nfN = 0;

    explicit GcompSim(const NuisanceModels& m)
        : adapted(m.mode == CurveMode::Adapted), K(m.horizon) {
        if (static_cast<int>(m.y_models.size()) != K)
            throw std::invalid_argument("need one outcome model per period");
        if (static_cast<int>(m.l_models.size()) != K - 1 ||
            m.l_var_consecutive.size() != m.l_models.size() ||
            m.l_var_gap.size() != m.l_models.size())
            throw std::invalid_argument("need one covariate model per period 1..K-1");
        for (int k = 1; k < K; ++k) {
            const auto& lm = m.l_models[static_cast<std::size_t>(k - 1)];
            auto& c = lmod[k];
            c.sd_consec =
                std::sqrt(std::max(0.0, m.l_var_consecutive[static_cast<std::size_t>(k - 1)]));
            c.sd_gap = std::sqrt(std::max(0.0, m.l_var_gap[static_cast<std::size_t>(k - 1)]));
            if (adapted) {
                c.n1 = lm.coefficient("n_lag1");
                c.ln1 = lm.coefficient("l_lag1*n_lag1");
                c.ln12 = lm.coefficient_or("l_lag1*n_lag1*n_lag2", 0.0);
                c.an1 = lm.coefficient("a_lag1*n_lag1");
                c.an12 = lm.coefficient_or("a_lag1*n_lag1*n_lag2", 0.0);
            } else {
                c.g0 = lm.coefficient("(intercept)");
                c.gl = lm.coefficient("l_lag1");
                c.ga = lm.coefficient("a_lag1");
            }
        }
        for (int k = 0; k < K; ++k) {
            const auto& ym = m.y_models[static_cast<std::size_t>(k)];
            auto& c = y[k];
            c.b0 = ym.coefficient("(intercept)");
            if (adapted) {
                c.a0 = ym.coefficient("a");
                c.a1 = ym.coefficient_or("a_lag1", 0.0);
                c.a2 = ym.coefficient_or("a_lag2", 0.0);
                const char* n_names[] = {"n_lag1", "n_lag2", "n_lag3"};
                const char* l_names[] = {"l", "l_lag1", "l_lag2"};
                const char* nl_names[] = {"n_lag1*l", "n_lag2*l_lag1", "n_lag3*l_lag2"};
                for (int lag = 0; lag < 3; ++lag) {
                    c.bn[lag] = ym.coefficient_or(n_names[lag], 0.0);
                    c.bl[lag] = ym.coefficient_or(l_names[lag], 0.0);
                    c.bnl[lag] = ym.coefficient_or(nl_names[lag], 0.0);
                }
            } else {
                c.lsum = ym.coefficient("l_sum3");
                c.asum = ym.coefficient("a_sum3");
            }
        }
        if (adapted) {
            nb0 = m.n_baseline->coefficient("(intercept)");
            nbL = m.n_baseline->coefficient("l");
            nbA = m.n_baseline->coefficient("a");
            nf0 = m.n_followup->coefficient("(intercept)");
            nfL = m.n_followup->coefficient("l");
            nfA = m.n_followup->coefficient("a");
            nfN = m.n_followup->coefficient("n_lag1");
            afN = m.a_followup.coefficient("n_lag1");
        }
        ab0 = m.a_baseline.coefficient("(intercept)");
        abL = m.a_baseline.coefficient("l");
        af0 = m.a_followup.coefficient("(intercept)");
        afL = m.a_followup.coefficient("l");
        afA = m.a_followup.coefficient("a_lag1");
    }

    // Simulates one individual; observer(k, l, a, n, y) sees each period.
    // Returns the failure period, or -1 if administratively censored.
    template <typename Observer>
    int simulate_one(const Strategy& strategy, const std::vector<double>& pool, Rng& rng,
                     Observer&& observer) const {
        double lv[16];
        int av[16], nv[16], hist[16];
        for (int k = 0; k < K; ++k) {
            const double l_prev = k >= 1 ? lv[k - 1] : 0.0;
            const double l_prev2 = k >= 2 ? lv[k - 2] : 0.0;
            const int a_prev = k >= 1 ? av[k - 1] : 0;
            const int a_prev2 = k >= 2 ? av[k - 2] : 0;
            const int n_prev = k >= 1 ? nv[k - 1] : 1;  // N_{-1} := 1
            const int n_prev2 = k >= 2 ? nv[k - 2] : (k == 1 ? 1 : 0);
            const int n_prev3 = k >= 3 ? nv[k - 3] : (k == 2 ? 1 : 0);

            if (k == 0) {
                lv[0] = pool[rng.uniform_index(pool.size())];
            } else if (adapted) {
                const auto& c = lmod[k];
                if (n_prev == 1) {
                    const double mean = l_prev + c.n1 + c.ln1 * l_prev +
                                        c.ln12 * l_prev * n_prev2 + c.an1 * a_prev +
                                        c.an12 * a_prev * n_prev2;
                    lv[k] = rng.normal(mean, n_prev2 == 1 ? c.sd_consec : c.sd_gap);
                } else {
                    lv[k] = l_prev;  // unmonitored: carried forward, no noise
                }
            } else {
                const auto& c = lmod[k];
                lv[k] = rng.normal(c.g0 + c.gl * l_prev + c.ga * a_prev, c.sd_consec);
            }

            const auto cls = strategy.classify_period(
                std::span<const int>(hist, static_cast<std::size_t>(k)), k, K);
            if (auto forced = forced_value(cls)) {
                av[k] = *forced;
            } else {
                const double eta = k == 0 ? ab0 + abL * lv[0]
                                          : af0 + afL * lv[k] + afA * a_prev + afN * n_prev;
                av[k] = rng.bernoulli(expit(eta)) ? 1 : 0;
            }
            hist[k] = av[k];

            nv[k] = 0;
            if (adapted) {
                const double eta = k == 0 ? nb0 + nbL * lv[0] + nbA * av[0]
                                          : nf0 + nfL * lv[k] + nfA * av[k] + nfN * n_prev;
                nv[k] = rng.bernoulli(expit(eta)) ? 1 : 0;
            }

            const auto& c = y[k];
            double eta_y;
            if (adapted) {
                const double nlag[3] = {static_cast<double>(n_prev),
                                        static_cast<double>(n_prev2),
                                        static_cast<double>(n_prev3)};
                const double llag[3] = {lv[k], l_prev, l_prev2};
                eta_y = c.b0 + c.a0 * av[k] + c.a1 * a_prev + c.a2 * a_prev2;
                for (int lag = 0; lag < 3; ++lag)
                    eta_y += c.bn[lag] * nlag[lag] + c.bl[lag] * llag[lag] +
                             c.bnl[lag] * nlag[lag] * llag[lag];
            } else {
                eta_y = c.b0 + c.lsum * (lv[k] + l_prev + l_prev2) +
                        c.asum * (av[k] + a_prev + a_prev2);
            }
            const bool failed = rng.bernoulli(expit(eta_y));
            observer(k, lv[k], av[k], nv[k], failed ? 1 : 0);
            if (failed) return k;
        }
        return -1;
    }
};

}  // namespace

SurvivalCurve gcomp_survival(const NuisanceModels& models,
                             const std::vector<double>& baseline_pool,
                             const Strategy& strategy, std::int64_t n_mc,
                             std::uint64_t seed, int workers) {
    if (n_mc < 1) throw std::invalid_argument("n_mc must be >= 1");
    if (baseline_pool.empty()) throw std::invalid_argument("empty baseline pool");
    const GcompSim sim(models);
    const int K = sim.K;

    std::vector<std::atomic<std::int64_t>> failures_by(static_cast<std::size_t>(K));
    for (auto& f : failures_by) f.store(0);

    auto run_range = [&](std::int64_t lo, std::int64_t hi) {
        std::vector<std::int64_t> local(static_cast<std::size_t>(K), 0);
        for (std::int64_t i = lo; i < hi; ++i) {
            Rng rng(substream_seed(seed, static_cast<std::uint64_t>(i)));
            const int failed_at =
                sim.simulate_one(strategy, baseline_pool, rng, [](int, double, int, int, int) {});
            if (failed_at >= 0) ++local[static_cast<std::size_t>(failed_at)];
        }
        for (int k = 0; k < K; ++k)
            failures_by[static_cast<std::size_t>(k)].fetch_add(local[static_cast<std::size_t>(k)]);
    };

    if (workers <= 1 || n_mc < 1024) {
        run_range(0, n_mc);
    } else {
        const int w = static_cast<int>(std::min<std::int64_t>(workers, (n_mc + 1023) / 1024));
        std::vector<std::thread> threads;
        const std::int64_t chunk = (n_mc + w - 1) / w;
        for (int t = 0; t < w; ++t) {
            const std::int64_t lo = t * chunk;
            const std::int64_t hi = std::min<std::int64_t>(n_mc, lo + chunk);
            if (lo >= hi) break;
            threads.emplace_back([&run_range, lo, hi] { run_range(lo, hi); });
        }
        for (auto& th : threads) th.join();
    }

    SurvivalCurve curve;
    curve.method = "gcomp";
    curve.mode = models.mode;
    curve.strategy = strategy.label();
    std::int64_t alive = n_mc;
    for (int k = 0; k < K; ++k) {
        alive -= failures_by[static_cast<std::size_t>(k)].load();
        curve.values.push_back(static_cast<double>(alive) / static_cast<double>(n_mc));
    }
    return curve;
}

Panel gcomp_sample_paths(const NuisanceModels& models, const std::vector<double>& baseline_pool,
                         const Strategy& strategy, std::int64_t n_paths, std::uint64_t seed) {
    if (n_paths < 1) throw std::invalid_argument("n_paths must be >= 1");
    if (baseline_pool.empty()) throw std::invalid_argument("empty baseline pool");
    const GcompSim sim(models);

    Panel panel;
    panel.horizon = sim.K;
    panel.has_lstar = false;
    for (std::int64_t i = 0; i < n_paths; ++i) {
        Rng rng(substream_seed(seed, static_cast<std::uint64_t>(i)));
        sim.simulate_one(strategy, baseline_pool, rng, [&](int k, double l, int a, int n, int y) {
            PanelRecord rec;
            rec.id = i;
            rec.k = k;
            rec.l_star = std::nan("");
            rec.l = l;
            rec.n = n;
            rec.a = a;
            rec.y = y;
            rec.at_risk = 1;
            panel.records.push_back(rec);
        });
    }
    panel.index();
    return panel;
}

}  // namespace imtk
