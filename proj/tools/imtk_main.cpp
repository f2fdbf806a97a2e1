// imtk: simulation and estimation toolkit for longitudinal treatment
// strategies under informative covariate monitoring.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "imtk/dgm.hpp"
#include "imtk/gcomp.hpp"
#include "imtk/harness.hpp"
#include "imtk/ipw.hpp"
#include "imtk/panel.hpp"
#include "imtk/rng.hpp"
#include "imtk/strategy.hpp"
#include "imtk/tmle.hpp"

namespace {

int env_workers(int fallback) {
    if (const char* env = std::getenv("IMTK_WORKERS")) {
        const int w = std::atoi(env);
        if (w >= 1) return w;
    }
    return fallback;
}

void print_curve(std::ostream& os, const imtk::SurvivalCurve& curve,
                 std::optional<int> only_time) {
    os << "time,survival\n";
    char buf[64];
    for (std::size_t k = 0; k < curve.values.size(); ++k) {
        const int time = static_cast<int>(k) + 1;
        if (only_time && *only_time != time) continue;
        if (std::isnan(curve.values[k]))
            std::snprintf(buf, sizeof buf, "%d,\n", time);
        else
            std::snprintf(buf, sizeof buf, "%d,%.6f\n", time, curve.values[k]);
        os << buf;
    }
    for (const auto& note : curve.notes) std::cerr << "note: " << note << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"causal survival analysis under informative monitoring"};
    app.require_subcommand(1);

    // --- simulate ---
    auto* sim = app.add_subcommand("simulate", "simulate an observational cohort");
    int sim_scenario = 1;
    std::int64_t sim_n = 3000;
    std::uint64_t sim_seed = 1;
    std::string sim_out = "panel.csv";
    int sim_workers = 1;
    sim->add_option("--scenario", sim_scenario, "scenario id 1..5")->required();
    sim->add_option("--n", sim_n, "cohort size")->required();
    sim->add_option("--seed", sim_seed, "master seed")->required();
    sim->add_option("--out", sim_out, "output panel CSV")->required();
    sim->add_option("--workers", sim_workers, "worker threads");

    // --- truth ---
    auto* tr = app.add_subcommand("truth", "intervened-simulation truth oracle");
    int tr_scenario = 1;
    std::string tr_strategy;
    std::int64_t tr_n = 1000000;
    std::uint64_t tr_seed = 1;
    std::string tr_out;
    int tr_workers = 1;
    tr->add_option("--scenario", tr_scenario)->required();
    tr->add_option("--strategy", tr_strategy,
                   "always | never | treat-early:p1=3 | wait:q1=2,q_last=3,p1=2")
        ->required();
    tr->add_option("--n", tr_n)->required();
    tr->add_option("--seed", tr_seed)->required();
    tr->add_option("--out", tr_out, "output CSV (default: stdout)");
    tr->add_option("--workers", tr_workers);

    // --- estimate ---
    auto* est = app.add_subcommand("estimate", "estimate a counterfactual survival curve");
    std::string est_method, est_mode = "adapted", est_strategy, est_input, est_time = "all";
    std::string est_trace;
    bool est_stabilized = false;
    std::int64_t est_nmc = 10000;
    std::uint64_t est_seed = 1;
    double est_weight_cap = -1.0;
    int est_bootstrap = 0;
    double est_ci_level = 0.95;
    std::uint64_t est_boot_seed = 42;
    est->add_option("--method", est_method, "ipw | gcomp | tmle | msm")->required();
    est->add_option("--mode", est_mode, "adapted | naive");
    est->add_option("--strategy", est_strategy)->required();
    est->add_option("--input", est_input, "panel CSV")->required();
    est->add_flag("--stabilized", est_stabilized, "stabilized IPW weights");
    est->add_option("--n-mc", est_nmc, "gcomp Monte Carlo size");
    est->add_option("--seed", est_seed, "gcomp Monte Carlo seed");
    est->add_option("--time", est_time, "target time 1..K or 'all'");
    est->add_option("--trace", est_trace, "write TMLE targeting trace JSON here");
    est->add_option("--weight-cap", est_weight_cap, "percentile cap for weights, e.g. 0.99");
    est->add_option("--bootstrap", est_bootstrap, "percentile-bootstrap resamples (0 = off)");
    est->add_option("--ci-level", est_ci_level, "bootstrap CI level");
    est->add_option("--bootstrap-seed", est_boot_seed);

    // --- experiment ---
    auto* exp = app.add_subcommand("experiment", "run a replication study from a JSON config");
    std::string exp_config;
    exp->add_option("--config", exp_config, "JSON config file")->required();

    // --- report ---
    auto* rep = app.add_subcommand("report", "re-emit report files from a results CSV");
    std::string rep_results, rep_out = ".";
    rep->add_option("--results", rep_results, "results.csv path")->required();
    rep->add_option("--out-dir", rep_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            const auto params = imtk::scenario_params(sim_scenario);
            const auto panel =
                imtk::simulate_cohort(params, sim_n, sim_seed, env_workers(sim_workers));
            imtk::write_panel_csv(panel, sim_out);
            return 0;
        }
        if (*tr) {
            const auto params = imtk::scenario_params(tr_scenario);
            const auto strategy = imtk::Strategy::parse(tr_strategy);
            const auto truth =
                imtk::simulate_truth(params, strategy, tr_n, tr_seed, env_workers(tr_workers));
            std::ofstream file;
            std::ostream* os = &std::cout;
            if (!tr_out.empty()) {
                file.open(tr_out, std::ios::binary);
                if (!file) throw std::runtime_error("cannot open " + tr_out);
                os = &file;
            }
            *os << "time,survival,mc_se\n";
            char buf[96];
            for (std::size_t k = 0; k < truth.curve.values.size(); ++k) {
                std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f\n", k + 1, truth.curve.values[k],
                              truth.mc_se[k]);
                *os << buf;
            }
            return 0;
        }
        if (*est) {
            const auto panel = imtk::read_panel_csv(est_input);
            const auto strategy = imtk::Strategy::parse(est_strategy);
            const auto mode = imtk::parse_mode(est_mode);
            std::optional<int> only_time;
            if (est_time != "all") only_time = std::stoi(est_time);

            imtk::EstimateOptions opts;
            opts.stabilized = est_stabilized;
            opts.n_mc = est_nmc;
            opts.seed = est_seed;
            if (est_weight_cap > 0.0) opts.weight_cap = est_weight_cap;

            if (est_method == "tmle" && !est_trace.empty()) {
                // Per-time runs with trace capture.
                nlohmann::json traces = nlohmann::json::array();
                imtk::SurvivalCurve curve;
                curve.method = "tmle";
                curve.mode = mode;
                curve.strategy = strategy.label();
                const auto prop = imtk::fit_propensity(panel, mode, est_stabilized);
                imtk::TmleOptions topts;
                topts.stabilized_weights = est_stabilized;
                for (int time = 1; time <= panel.horizon; ++time) {
                    if (only_time && *only_time != time) {
                        curve.values.push_back(std::nan(""));
                        continue;
                    }
                    const auto result =
                        imtk::tmle_estimate(panel, strategy, mode, time, &prop, topts);
                    curve.values.push_back(result.survival);
                    nlohmann::json steps = nlohmann::json::array();
                    for (const auto& s : result.trace.steps)
                        steps.push_back({{"period", s.period},
                                         {"epsilon", s.epsilon},
                                         {"n_followers", s.n_followers},
                                         {"pre_residual", s.pre_residual},
                                         {"post_residual", s.post_residual}});
                    traces.push_back(
                        {{"time", time}, {"estimate", result.survival}, {"steps", steps}});
                }
                std::ofstream tf(est_trace, std::ios::binary);
                tf << traces.dump(2) << "\n";
                print_curve(std::cout, curve, only_time);
                return 0;
            }

            const auto curve = imtk::estimate_survival(panel, est_method, mode, strategy, opts);
            if (est_bootstrap > 0) {
                std::cout << "time,survival,ci_lower,ci_upper\n";
                char buf[128];
                for (std::size_t k = 0; k < curve.values.size(); ++k) {
                    const int time = static_cast<int>(k) + 1;
                    if (only_time && *only_time != time) continue;
                    const auto ci =
                        imtk::bootstrap_ci(panel, est_method, mode, strategy, time, est_bootstrap,
                                           est_boot_seed, est_ci_level, opts);
                    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f\n", time, curve.values[k],
                                  ci.lower, ci.upper);
                    std::cout << buf;
                }
            } else {
                print_curve(std::cout, curve, only_time);
            }
            return 0;
        }
        if (*exp) {
            auto config = imtk::load_config(exp_config);
            config.workers = env_workers(config.workers);
            const auto rows = imtk::run_experiment(config);
            std::cerr << "wrote " << rows.size() << " result rows to " << config.out_dir << "\n";
            return 0;
        }
        if (*rep) {
            const auto rows = imtk::read_results_csv(rep_results);
            imtk::emit_report(rows, rep_out);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
