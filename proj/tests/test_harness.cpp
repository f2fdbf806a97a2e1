#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "imtk/dgm.hpp"
#include "imtk/harness.hpp"
#include "imtk/rng.hpp"

using namespace imtk;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

ExperimentConfig tiny_config(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.scenario = 1;
    cfg.n = 600;
    cfg.n_sim = 2;
    cfg.truth_n = 4000;
    cfg.methods = {"ipw"};
    cfg.modes = {"adapted"};
    cfg.strategies = {"always", "never"};
    cfg.master_seed = 99;
    cfg.n_mc = 2000;
    cfg.workers = 1;
    cfg.out_dir = out_dir;
    return cfg;
}

}  // namespace

TEST_CASE("summarize arithmetic") {
    {
        const auto s = summarize({0.4, 0.4, 0.4}, 0.4);
        CHECK(s.bias == doctest::Approx(0.0));
        CHECK(s.empirical_se == doctest::Approx(0.0));
        CHECK(s.mc_se == doctest::Approx(0.0));
    }
    {
        const auto s = summarize({0.5, 0.7}, 0.5);
        CHECK(s.mean == doctest::Approx(0.6));
        CHECK(s.bias == doctest::Approx(0.1));
        CHECK(s.empirical_se == doctest::Approx(0.1414214).epsilon(1e-5));
        CHECK(s.mc_se == doctest::Approx(0.1).epsilon(1e-9));
        CHECK(s.mean == s.bias + 0.5);  // exact decomposition
    }
    CHECK_THROWS_AS(summarize({0.5}, 0.5), std::invalid_argument);

    SUBCASE("sampling distribution of the summary") {
        Rng rng(2718);
        std::vector<double> draws(1000);
        for (auto& d : draws) d = 0.5 + 0.012 * rng.normal();
        const auto s = summarize(draws, 0.5);
        CHECK(std::abs(s.bias) < 0.0012);
        CHECK(s.empirical_se > 0.011);
        CHECK(s.empirical_se < 0.013);
    }
}

TEST_CASE("config parsing enforces known keys") {
    CHECK_THROWS_WITH_AS(parse_config(R"({"scenario": 1, "bogus": 2})"),
                         doctest::Contains("unknown config key"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"methods": []})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"scenario": 7})"), std::invalid_argument);
    const auto cfg = parse_config(
        R"({"scenario": 2, "n": 100, "n_sim": 3, "truth_n": 50,
            "methods": ["gcomp"], "modes": ["naive"], "strategies": ["never"],
            "master_seed": 7, "n_mc": 10, "stabilized": true, "workers": 2,
            "out_dir": "/tmp/x"})");
    CHECK(cfg.scenario == 2);
    CHECK(cfg.n == 100);
    CHECK(cfg.stabilized);
    CHECK(cfg.workers == 2);
}

TEST_CASE("run_experiment produces the full grid deterministically") {
    const fs::path dir1 = fs::temp_directory_path() / "imtk_test_exp1";
    const fs::path dir2 = fs::temp_directory_path() / "imtk_test_exp2";
    fs::remove_all(dir1);
    fs::remove_all(dir2);

    auto cfg1 = tiny_config(dir1.string());
    const auto rows = run_experiment(cfg1);
    CHECK(rows.size() == 2 * 5 * 1 * 1);  // strategies x times x methods x modes

    for (const auto& r : rows) {
        CHECK(r.n_failed_reps == 0);
        CHECK(r.mean_estimate == doctest::Approx(r.true_value + r.bias).epsilon(1e-12));
    }

    // different worker count, fresh output directory: byte-identical results
    auto cfg2 = tiny_config(dir2.string());
    cfg2.workers = 3;
    run_experiment(cfg2);
    CHECK(slurp(dir1 / "results.csv") == slurp(dir2 / "results.csv"));

    SUBCASE("rerun with cached truth is byte-identical") {
        const std::string first = slurp(dir1 / "results.csv");
        run_experiment(cfg1);
        CHECK(slurp(dir1 / "results.csv") == first);
    }

    SUBCASE("results round-trip through the CSV") {
        const auto back = read_results_csv((dir1 / "results.csv").string());
        REQUIRE(back.size() == rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            CHECK(back[i].strategy == rows[i].strategy);
            CHECK(back[i].time == rows[i].time);
            CHECK(back[i].method == rows[i].method);
            CHECK(back[i].mode == rows[i].mode);
            CHECK(back[i].n_failed_reps == rows[i].n_failed_reps);
            CHECK(back[i].mean_estimate ==
                  doctest::Approx(rows[i].mean_estimate).epsilon(1e-6));
        }
    }

    SUBCASE("report files exist with the expected shape") {
        CHECK(fs::exists(dir1 / "results.csv"));
        CHECK(fs::exists(dir1 / "bias_table.md"));
        CHECK(fs::exists(dir1 / "bias_pct.csv"));
        std::ifstream f(dir1 / "results.csv");
        std::string line;
        int lines = 0;
        while (std::getline(f, line)) ++lines;
        CHECK(lines == 11);  // header + 10 rows
    }
}

TEST_CASE("bias_pct arithmetic") {
    ResultRow r;
    r.scenario = 1;
    r.strategy = "always";
    r.time = 1;
    r.method = "ipw";
    r.mode = "adapted";
    r.true_value = 0.25;
    r.mean_estimate = 0.275;
    r.empirical_se = 0.01;
    r.bias = 0.025;
    r.mc_se = 0.001;
    r.n_failed_reps = 0;
    const fs::path dir = fs::temp_directory_path() / "imtk_test_pct";
    fs::remove_all(dir);
    emit_report({r}, dir.string());
    const std::string pct = slurp(dir / "bias_pct.csv");
    CHECK(pct.find("always,1,ipw,adapted,10.000000") != std::string::npos);
}

TEST_CASE("bootstrap returns a degenerate interval for a constant estimator") {
    // all-censored panel: every resample estimates survival exactly one;
    // every covariate value occurs under both treatments, so no resample
    // can separate
    Panel p;
    for (int i = 0; i < 20; ++i) {
        PanelRecord rec;
        rec.id = i;
        rec.k = 0;
        rec.l = 0.1 * (i / 2 % 5);
        rec.a = i % 2;
        rec.y = 0;
        rec.at_risk = 1;
        p.records.push_back(rec);
    }
    p.horizon = 1;
    p.index();
    const auto ci = bootstrap_ci(p, "ipw", CurveMode::Adapted, Strategy::always_treat(), 1, 100,
                                 11);
    CHECK(ci.lower == doctest::Approx(1.0));
    CHECK(ci.upper == doctest::Approx(1.0));
    CHECK_THROWS_AS(bootstrap_ci(p, "ipw", CurveMode::Adapted, Strategy::always_treat(), 1, 50, 1),
                    std::invalid_argument);
}

TEST_CASE("bootstrap interval width is sensible for adapted gcomp") {
    const auto panel = simulate_cohort(scenario_params(1), 3000, 21);
    EstimateOptions opts;
    opts.n_mc = 3000;
    const auto ci = bootstrap_ci(panel, "gcomp", CurveMode::Adapted, Strategy::treat_early(3), 5,
                                 200, 31, 0.95, opts);
    CHECK(ci.n_failed == 0);
    const double width = ci.upper - ci.lower;
    CHECK(width > 0.02);
    CHECK(width < 0.08);
}

TEST_CASE("bootstrap coverage on repeated panels") {
    // nominal 95% percentile CIs should cover the truth most of the time
    const auto params = scenario_params(1);
    const auto truth = simulate_truth(params, Strategy::always_treat(), 300000, 5151, 4);
    const double target = truth.curve.values[1];  // time 2
    int covered = 0;
    const int n_panels = 100;
    for (int i = 0; i < n_panels; ++i) {
        const auto panel = simulate_cohort(params, 1000, 7000 + static_cast<std::uint64_t>(i));
        const auto ci = bootstrap_ci(panel, "ipw", CurveMode::Adapted, Strategy::always_treat(),
                                     2, 150, 100 + static_cast<std::uint64_t>(i));
        if (target >= ci.lower && target <= ci.upper) ++covered;
    }
    CHECK(covered >= 88);
}

TEST_CASE("estimate_survival dispatches every method") {
    const auto panel = simulate_cohort(scenario_params(1), 2500, 77);
    EstimateOptions opts;
    opts.n_mc = 4000;
    opts.seed = 3;
    for (const std::string method : {"ipw", "gcomp", "tmle", "msm"}) {
        const auto curve =
            estimate_survival(panel, method, CurveMode::Adapted, Strategy::treat_early(3), opts);
        REQUIRE(curve.values.size() == 5);
        CHECK(curve.method == (method == "msm" ? "msm" : method));
    }
    CHECK_THROWS_AS(
        estimate_survival(panel, "magic", CurveMode::Adapted, Strategy::always_treat(), opts),
        std::invalid_argument);
}
