#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "imtk/dgm.hpp"
#include "imtk/panel.hpp"
#include "imtk/strategy.hpp"

namespace imtk {

struct BootstrapUnstableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    int scenario = 1;
    std::int64_t n = 3000;
    int n_sim = 200;
    std::int64_t truth_n = 1000000;
    std::vector<std::string> methods = {"ipw", "gcomp", "tmle"};
    std::vector<std::string> modes = {"adapted", "naive"};
    std::vector<std::string> strategies = {"always", "never", "treat-early:p1=3",
                                           "wait:q1=2,q_last=3,p1=2"};
    std::uint64_t master_seed = 20240612;
    std::int64_t n_mc = 10000;
    bool stabilized = false;
    int workers = 1;
    std::string out_dir = ".";

    void validate() const;
};

// JSON document mirroring the field names above; unknown keys rejected.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);

struct ResultRow {
    int scenario;
    std::string strategy;
    int time;
    std::string method;
    std::string mode;
    double true_value;
    double mean_estimate;
    double empirical_se;
    double bias;
    double mc_se;
    int n_failed_reps;
};

struct Summary {
    double mean;
    double empirical_se;
    double bias;
    double mc_se;
};

// Mean, sample SD (n-1), bias = mean - truth, mc_se = SD / sqrt(n).
// Throws std::invalid_argument for fewer than two estimates.
Summary summarize(const std::vector<double>& estimates, double truth);

// Single-curve estimation front door shared by the CLI, the experiment
// runner and the bootstrap. Methods: ipw, gcomp, tmle, msm.
struct EstimateOptions {
    bool stabilized = false;
    std::int64_t n_mc = 10000;
    std::uint64_t seed = 1;
    std::optional<double> weight_cap;
    int workers = 1;
};

SurvivalCurve estimate_survival(const Panel& panel, const std::string& method, CurveMode mode,
                                const Strategy& strategy, const EstimateOptions& options = {});

CurveMode parse_mode(const std::string& text);

// Full replication study: truth per strategy (cached under out_dir as
// truth_s<scenario>_<strategy>.csv), n_sim replications fanned out over
// a worker pool with indexed substreams, per-cell summaries. Output is
// invariant to the worker count.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config);

// Percentile bootstrap over individuals; the full estimation pipeline is
// rerun per resample. Throws BootstrapUnstableError when more than 20%
// of resamples fail.
struct BootstrapResult {
    double lower;
    double upper;
    int n_failed;
};
BootstrapResult bootstrap_ci(const Panel& panel, const std::string& method, CurveMode mode,
                             const Strategy& strategy, int time, int n_resamples,
                             std::uint64_t seed, double level = 0.95,
                             const EstimateOptions& options = {});

// Writes results.csv, bias_table.md and bias_pct.csv.
void emit_report(const std::vector<ResultRow>& rows, const std::string& out_dir);

std::vector<ResultRow> read_results_csv(const std::string& path);

}  // namespace imtk
