#include "imtk/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "imtk/gcomp.hpp"
#include "imtk/ipw.hpp"
#include "imtk/rng.hpp"
#include "imtk/tmle.hpp"

namespace imtk {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::validate() const {
    if (scenario < 1 || scenario > 5) throw std::invalid_argument("scenario must be 1..5");
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    if (n_sim < 1) throw std::invalid_argument("n_sim must be >= 1");
    if (truth_n < 1) throw std::invalid_argument("truth_n must be >= 1");
    if (methods.empty()) throw std::invalid_argument("methods must be nonempty");
    if (modes.empty()) throw std::invalid_argument("modes must be nonempty");
    if (strategies.empty()) throw std::invalid_argument("strategies must be nonempty");
    for (const auto& m : methods)
        if (m != "ipw" && m != "gcomp" && m != "tmle" && m != "msm")
            throw std::invalid_argument("unknown method: " + m);
    for (const auto& m : modes)
        if (m != "adapted" && m != "naive") throw std::invalid_argument("unknown mode: " + m);
    for (const auto& s : strategies) Strategy::parse(s);
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
}

ExperimentConfig parse_config(const std::string& text) {
    const json doc = json::parse(text);
    if (!doc.is_object()) throw std::invalid_argument("config must be a JSON object");
    static const std::vector<std::string> known = {
        "scenario", "n", "n_sim", "truth_n", "methods", "modes",
        "strategies", "master_seed", "n_mc", "stabilized", "workers", "out_dir"};
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw std::invalid_argument("unknown config key: " + it.key());

    ExperimentConfig cfg;
    auto get = [&](const char* key, auto& field) {
        if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("scenario", cfg.scenario);
    get("n", cfg.n);
    get("n_sim", cfg.n_sim);
    get("truth_n", cfg.truth_n);
    get("methods", cfg.methods);
    get("modes", cfg.modes);
    get("strategies", cfg.strategies);
    get("master_seed", cfg.master_seed);
    get("n_mc", cfg.n_mc);
    get("stabilized", cfg.stabilized);
    get("workers", cfg.workers);
    get("out_dir", cfg.out_dir);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

Summary summarize(const std::vector<double>& estimates, double truth) {
    if (estimates.size() < 2) throw std::invalid_argument("summarize needs >= 2 estimates");
    const double n = static_cast<double>(estimates.size());
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= n;
    double ss = 0.0;
    for (double e : estimates) ss += (e - mean) * (e - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    return {mean, sd, mean - truth, sd / std::sqrt(n)};
}

CurveMode parse_mode(const std::string& text) {
    if (text == "adapted") return CurveMode::Adapted;
    if (text == "naive") return CurveMode::Naive;
    if (text == "truth") return CurveMode::Truth;
    throw std::invalid_argument("unknown mode: " + text);
}

SurvivalCurve estimate_survival(const Panel& panel, const std::string& method, CurveMode mode,
                                const Strategy& strategy, const EstimateOptions& options) {
    if (method == "ipw" || method == "msm") {
        const PropensityModels prop = fit_propensity(panel, mode, options.stabilized);
        WeightOptions wopts;
        wopts.cap_quantile = options.weight_cap;
        const WeightSet weights = compute_weights(panel, prop, strategy, wopts);
        return method == "ipw" ? ipw_survival(panel, weights, strategy, mode)
                               : msm_survival(panel, weights, strategy, mode);
    }
    if (method == "gcomp") {
        const NuisanceModels models = fit_gcomp_models(panel, mode);
        return gcomp_survival(models, baseline_covariate_pool(panel), strategy, options.n_mc,
                              options.seed, options.workers);
    }
    if (method == "tmle") {
        TmleOptions topts;
        topts.stabilized_weights = options.stabilized;
        return tmle_curve(panel, strategy, mode, topts);
    }
    throw std::invalid_argument("unknown method: " + method);
}

namespace {

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) ? c : '-');
    return out;
}

std::string truth_cache_path(const ExperimentConfig& cfg, const std::string& strategy_label) {
    return (fs::path(cfg.out_dir) /
            ("truth_s" + std::to_string(cfg.scenario) + "_" + sanitize(strategy_label) + ".csv"))
        .string();
}

void write_truth_csv(const std::string& path, const TruthCurve& truth) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "time,survival,mc_se\n";
    char line[96];
    for (std::size_t k = 0; k < truth.curve.values.size(); ++k) {
        std::snprintf(line, sizeof line, "%zu,%.6f,%.6f\n", k + 1, truth.curve.values[k],
                      truth.mc_se[k]);
        f << line;
    }
}

std::optional<std::vector<double>> read_truth_csv(const std::string& path, int K) {
    std::ifstream f(path);
    if (!f) return std::nullopt;
    std::string line;
    if (!std::getline(f, line) || line.rfind("time,survival,mc_se", 0) != 0) return std::nullopt;
    std::vector<double> values;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) return std::nullopt;
        values.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
    }
    if (static_cast<int>(values.size()) != K) return std::nullopt;
    return values;
}

struct Cell {
    std::string method;
    std::string mode;
    std::string strategy;
};

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentConfig& config) {
    config.validate();
    fs::create_directories(config.out_dir);
    const ScenarioParams params = scenario_params(config.scenario);
    const int K = params.horizon;

    std::vector<Strategy> strategies;
    for (const auto& s : config.strategies) strategies.push_back(Strategy::parse(s));

    // Truth per strategy, cached on disk.
    std::vector<std::vector<double>> truths;
    for (std::size_t si = 0; si < strategies.size(); ++si) {
        const std::string cache = truth_cache_path(config, strategies[si].label());
        if (auto cached = read_truth_csv(cache, K)) {
            truths.push_back(*cached);
            continue;
        }
        const TruthCurve truth =
            simulate_truth(params, strategies[si], config.truth_n,
                           substream_seed(config.master_seed, 900000 + si), config.workers);
        write_truth_csv(cache, truth);
        truths.push_back(truth.curve.values);
    }

    std::vector<Cell> cells;
    for (const auto& strat : config.strategies)
        for (const auto& method : config.methods)
            for (const auto& mode : config.modes) cells.push_back({method, mode, strat});

    // estimates[cell][time][rep]; NaN marks a failed replication.
    const std::size_t n_cells = cells.size();
    std::vector<std::vector<std::vector<double>>> estimates(
        n_cells, std::vector<std::vector<double>>(
                     static_cast<std::size_t>(K),
                     std::vector<double>(static_cast<std::size_t>(config.n_sim), std::nan(""))));

    std::atomic<int> next_rep{0};
    auto worker = [&]() {
        for (;;) {
            const int rep = next_rep.fetch_add(1);
            if (rep >= config.n_sim) return;
            const std::uint64_t rep_seed =
                substream_seed(config.master_seed, static_cast<std::uint64_t>(rep));
            const Panel panel = simulate_cohort(params, config.n, rep_seed);
            const auto pool = baseline_covariate_pool(panel);

            for (std::size_t ci = 0; ci < n_cells; ++ci) {
                const auto& cell = cells[ci];
                const CurveMode mode = parse_mode(cell.mode);
                const Strategy strategy = Strategy::parse(cell.strategy);
                EstimateOptions opts;
                opts.stabilized = config.stabilized;
                opts.n_mc = config.n_mc;
                opts.seed = substream_seed(rep_seed, 7000 + ci);
                try {
                    const SurvivalCurve curve =
                        estimate_survival(panel, cell.method, mode, strategy, opts);
                    for (int k = 0; k < K; ++k)
                        estimates[ci][static_cast<std::size_t>(k)][static_cast<std::size_t>(rep)] =
                            curve.values[static_cast<std::size_t>(k)];
                } catch (const std::exception&) {
                    // failed replication for this cell; stays NaN
                }
            }
        }
    };

    const int n_workers = std::max(1, std::min(config.workers, config.n_sim));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool_threads;
        for (int t = 0; t < n_workers; ++t) pool_threads.emplace_back(worker);
        for (auto& th : pool_threads) th.join();
    }

    std::vector<ResultRow> rows;
    for (std::size_t si = 0; si < strategies.size(); ++si) {
        for (int k = 0; k < K; ++k) {
            for (const auto& method : config.methods) {
                for (const auto& mode : config.modes) {
                    std::size_t ci = 0;
                    for (; ci < n_cells; ++ci)
                        if (cells[ci].method == method && cells[ci].mode == mode &&
                            cells[ci].strategy == config.strategies[si])
                            break;
                    std::vector<double> ok;
                    for (double v : estimates[ci][static_cast<std::size_t>(k)])
                        if (!std::isnan(v)) ok.push_back(v);
                    ResultRow row;
                    row.scenario = config.scenario;
                    row.strategy = strategies[si].label();
                    row.time = k + 1;
                    row.method = method;
                    row.mode = mode;
                    row.true_value = truths[si][static_cast<std::size_t>(k)];
                    row.n_failed_reps = config.n_sim - static_cast<int>(ok.size());
                    if (ok.size() >= 2) {
                        const Summary s = summarize(ok, row.true_value);
                        row.mean_estimate = s.mean;
                        row.empirical_se = s.empirical_se;
                        row.bias = s.bias;
                        row.mc_se = s.mc_se;
                    } else {
                        row.mean_estimate = row.empirical_se = row.bias = row.mc_se = std::nan("");
                    }
                    rows.push_back(row);
                }
            }
        }
    }
    emit_report(rows, config.out_dir);
    return rows;
}

BootstrapResult bootstrap_ci(const Panel& panel, const std::string& method, CurveMode mode,
                             const Strategy& strategy, int time, int n_resamples,
                             std::uint64_t seed, double level, const EstimateOptions& options) {
    if (n_resamples < 100) throw std::invalid_argument("bootstrap needs B >= 100");
    if (time < 1 || time > panel.horizon) throw std::out_of_range("time out of range");
    if (panel.persons.empty()) throw std::invalid_argument("panel is not indexed or empty");

    const std::size_t n_persons = panel.persons.size();
    std::vector<double> values;
    int n_failed = 0;
    for (int b = 0; b < n_resamples; ++b) {
        const std::uint64_t boot_seed = substream_seed(seed, static_cast<std::uint64_t>(b));
        Rng rng(boot_seed);
        Panel resampled;
        resampled.horizon = panel.horizon;
        resampled.has_lstar = panel.has_lstar;
        for (std::size_t i = 0; i < n_persons; ++i) {
            const auto& person = panel.persons[rng.uniform_index(n_persons)];
            for (std::size_t r = person.begin; r < person.end; ++r) {
                PanelRecord rec = panel.records[r];
                rec.id = static_cast<std::int64_t>(i);
                resampled.records.push_back(rec);
            }
        }
        resampled.index();

        EstimateOptions opts = options;
        opts.seed = substream_seed(boot_seed, 1);
        try {
            const SurvivalCurve curve = estimate_survival(resampled, method, mode, strategy, opts);
            const double v = curve.values[static_cast<std::size_t>(time - 1)];
            if (std::isnan(v)) throw std::runtime_error("missing estimate");
            values.push_back(v);
        } catch (const std::exception&) {
            ++n_failed;
        }
    }
    if (n_failed > n_resamples / 5)
        throw BootstrapUnstableError("more than 20% of bootstrap resamples failed (" +
                                     std::to_string(n_failed) + "/" +
                                     std::to_string(n_resamples) + ")");

    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        const double h = q * (static_cast<double>(values.size()) - 1.0);
        const std::size_t lo = static_cast<std::size_t>(h);
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    const double alpha = 1.0 - level;
    return {quantile(alpha / 2.0), quantile(1.0 - alpha / 2.0), n_failed};
}

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// Minimal CSV quoting for fields that may contain commas (strategy labels).
std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

void emit_report(const std::vector<ResultRow>& rows, const std::string& out_dir) {
    if (rows.empty()) throw std::invalid_argument("no rows to report");
    fs::create_directories(out_dir);

    {
        std::ofstream f(fs::path(out_dir) / "results.csv", std::ios::binary);
        f << "scenario,strategy,time,method,mode,true_value,mean_estimate,empirical_se,bias,"
             "mc_se,n_failed_reps\n";
        for (const auto& r : rows)
            f << r.scenario << ',' << csv_field(r.strategy) << ',' << r.time << ',' << r.method
              << ',' << r.mode << ',' << fmt(r.true_value) << ',' << fmt(r.mean_estimate) << ','
              << fmt(r.empirical_se) << ',' << fmt(r.bias) << ',' << fmt(r.mc_se) << ','
              << r.n_failed_reps << '\n';
    }
    {
        std::ofstream f(fs::path(out_dir) / "bias_pct.csv", std::ios::binary);
        f << "strategy,time,method,mode,bias_pct\n";
        for (const auto& r : rows) {
            const double pct = 100.0 * r.bias / r.true_value;
            f << csv_field(r.strategy) << ',' << r.time << ',' << r.method << ',' << r.mode << ','
              << fmt(pct) << '\n';
        }
    }
    {
        std::ofstream f(fs::path(out_dir) / "bias_table.md", std::ios::binary);
        std::vector<std::string> modes, methods, strategies;
        for (const auto& r : rows) {
            if (std::find(modes.begin(), modes.end(), r.mode) == modes.end())
                modes.push_back(r.mode);
            if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
                methods.push_back(r.method);
            if (std::find(strategies.begin(), strategies.end(), r.strategy) == strategies.end())
                strategies.push_back(r.strategy);
        }
        auto find_row = [&](const std::string& strat, int time, const std::string& method,
                            const std::string& mode) -> const ResultRow* {
            for (const auto& r : rows)
                if (r.strategy == strat && r.time == time && r.method == method && r.mode == mode)
                    return &r;
            return nullptr;
        };
        for (const auto& mode : modes) {
            f << "# " << mode << " estimators\n\n";
            for (const auto& strat : strategies) {
                f << "## " << strat << "\n\n";
                f << "| Time | True value |";
                for (const auto& m : methods) f << ' ' << m << " mean (emp. SE) | bias (MC SE) |";
                f << "\n|---|---|";
                for (std::size_t i = 0; i < methods.size(); ++i) f << "---|---|";
                f << "\n";
                int max_time = 0;
                for (const auto& r : rows) max_time = std::max(max_time, r.time);
                for (int time = 1; time <= max_time; ++time) {
                    const ResultRow* first = find_row(strat, time, methods[0], mode);
                    if (!first) continue;
                    f << "| " << time << " | " << fmt(first->true_value) << " |";
                    for (const auto& m : methods) {
                        const ResultRow* r = find_row(strat, time, m, mode);
                        if (r)
                            f << ' ' << fmt(r->mean_estimate) << " (" << fmt(r->empirical_se)
                              << ") | " << fmt(r->bias) << " (" << fmt(r->mc_se) << ") |";
                        else
                            f << "  |  |";
                    }
                    f << "\n";
                }
                f << "\n";
            }
        }
    }
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty results file");
    std::vector<ResultRow> rows;
    while (std::getline(f, line)) {
        if (line.size() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_row(line);
        if (fields.size() != 11) throw std::runtime_error("short results row");
        auto to_d = [](const std::string& s) { return s.empty() ? std::nan("") : std::stod(s); };
        ResultRow r;
        r.scenario = std::stoi(fields[0]);
        r.strategy = fields[1];
        r.time = std::stoi(fields[2]);
        r.method = fields[3];
        r.mode = fields[4];
        r.true_value = to_d(fields[5]);
        r.mean_estimate = to_d(fields[6]);
        r.empirical_se = to_d(fields[7]);
        r.bias = to_d(fields[8]);
        r.mc_se = to_d(fields[9]);
        r.n_failed_reps = std::stoi(fields[10]);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace imtk
