#include "imtk/dgm.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "imtk/rng.hpp"

namespace imtk {

ScenarioParams scenario_params(int id) {
    ScenarioParams p;  // defaults are the scenario-1 column
    p.id = id;
    switch (id) {
        case 1: break;
        case 2:
            p.beta_n0 = -5.0;
            p.beta_nL = 3.0;
            p.beta_nA = 3.0;
            p.beta_nN = 1.0;
            break;
        case 3:
            p.beta_n0 = -0.7;
            p.beta_nL = 0.0;
            p.beta_nA = 0.0;
            p.beta_nN = 0.0;
            break;
        case 4: p.beta_aN = 2.0; break;
        case 5: p.beta_aN = 0.0; break;
        default: throw std::out_of_range("scenario id must be 1..5");
    }
    return p;
}

namespace {

// One individual's trajectory. Treatment is drawn from the observational
// model in natural periods and set in forced periods; forced periods
// consume no randomness, so strategies sharing a forced prefix produce
// identical draws over that prefix.
struct Trajectory {
    int periods = 0;     // number of generated periods (<= K)
    int failed_at = -1;  // period of failure, -1 if administratively censored
    double u = 0.0;
    double l_star[16];
    double l_obs[16];
    int a[16];
    int n[16];
};

void simulate_individual(const ScenarioParams& p, const Strategy* strategy,
                         std::uint64_t stream_seed, Trajectory& t) {
    Rng rng(stream_seed);
    const int K = p.horizon;
    const double sigma = std::sqrt(p.sigma2);
    t.u = rng.normal(0.0, p.frailty_sd);
    t.failed_at = -1;
    t.periods = 0;

    int a_hist[16];
    for (int k = 0; k < K; ++k) {
        if (k == 0) {
            t.l_star[0] = rng.normal(p.beta_lU * t.u, sigma);
            t.l_obs[0] = t.l_star[0];
        } else {
            t.l_star[k] = rng.normal(
                p.beta_l0 + p.beta_lL * t.l_star[k - 1] + p.beta_lA * t.a[k - 1] +
                    p.beta_lU * t.u,
                sigma);
            t.l_obs[k] = t.n[k - 1] == 1 ? t.l_star[k] : t.l_obs[k - 1];
        }

        std::optional<int> forced;
        if (strategy)
            forced = forced_value(
                strategy->classify_period(std::span<const int>(a_hist, static_cast<std::size_t>(k)),
                                          k, K));
        if (forced) {
            t.a[k] = *forced;
        } else {
            double eta = p.beta_a0 + p.beta_aL * t.l_obs[k];
            if (k > 0) eta += p.beta_aA * t.a[k - 1] + p.beta_aN * t.n[k - 1];
            t.a[k] = rng.bernoulli(expit(eta)) ? 1 : 0;
        }
        a_hist[k] = t.a[k];

        // The monitoring decision tracks the patient's actual state, not
        // the last recorded value.
        double eta_n = p.beta_n0 + p.beta_nL * t.l_star[k] + p.beta_nA * t.a[k];
        if (k > 0) eta_n += p.beta_nN * t.n[k - 1];
        t.n[k] = rng.bernoulli(expit(eta_n)) ? 1 : 0;

        double lsum = t.l_star[k], asum = t.a[k];
        if (k > 0) {
            lsum += t.l_star[k - 1];
            asum += t.a[k - 1];
        }
        const double eta_y = p.beta_y0 + p.beta_yU * t.u + p.beta_yL * lsum + p.beta_yA * asum;
        t.periods = k + 1;
        if (rng.bernoulli(expit(eta_y))) {
            t.failed_at = k;
            break;
        }
    }
}

template <typename Fn>
void run_partitioned(std::int64_t n, int workers, Fn&& per_range) {
    if (workers <= 1 || n < 1024) {
        per_range(0, n);
        return;
    }
    const int w = std::min<std::int64_t>(workers, (n + 1023) / 1024);
    std::vector<std::thread> threads;
    const std::int64_t chunk = (n + w - 1) / w;
    for (int t = 0; t < w; ++t) {
        const std::int64_t lo = t * chunk;
        const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        threads.emplace_back([&per_range, lo, hi] { per_range(lo, hi); });
    }
    for (auto& th : threads) th.join();
}

}  // namespace

Panel simulate_cohort(const ScenarioParams& params, std::int64_t n, std::uint64_t seed,
                      int workers) {
    if (n < 1) throw std::invalid_argument("cohort size must be >= 1");
    if (params.horizon > 16) throw std::invalid_argument("horizon too large");

    const int K = params.horizon;
    std::vector<std::uint8_t> lengths(static_cast<std::size_t>(n));
    std::vector<PanelRecord> buffer(static_cast<std::size_t>(n) * static_cast<std::size_t>(K));

    run_partitioned(n, workers, [&](std::int64_t lo, std::int64_t hi) {
        Trajectory t;
        for (std::int64_t i = lo; i < hi; ++i) {
            simulate_individual(params, nullptr, substream_seed(seed, static_cast<std::uint64_t>(i)),
                                t);
            lengths[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(t.periods);
            PanelRecord* out = &buffer[static_cast<std::size_t>(i) * K];
            for (int k = 0; k < t.periods; ++k) {
                out[k].id = i;
                out[k].k = k;
                out[k].l_star = t.l_star[k];
                out[k].l = t.l_obs[k];
                out[k].n = t.n[k];
                out[k].a = t.a[k];
                out[k].y = (k == t.failed_at) ? 1 : 0;
                out[k].at_risk = 1;
            }
        }
    });

    Panel panel;
    panel.horizon = K;
    panel.has_lstar = true;
    std::size_t total = 0;
    for (auto len : lengths) total += len;
    panel.records.reserve(total);
    for (std::int64_t i = 0; i < n; ++i) {
        const PanelRecord* src = &buffer[static_cast<std::size_t>(i) * K];
        panel.records.insert(panel.records.end(), src, src + lengths[static_cast<std::size_t>(i)]);
    }
    panel.index();
    return panel;
}

TruthCurve simulate_truth(const ScenarioParams& params, const Strategy& strategy,
                          std::int64_t n, std::uint64_t seed, int workers) {
    if (n < 1) throw std::invalid_argument("cohort size must be >= 1");
    const int K = params.horizon;

    std::vector<std::atomic<std::int64_t>> failures_by(static_cast<std::size_t>(K));
    for (auto& f : failures_by) f.store(0);

    run_partitioned(n, workers, [&](std::int64_t lo, std::int64_t hi) {
        Trajectory t;
        std::vector<std::int64_t> local(static_cast<std::size_t>(K), 0);
        for (std::int64_t i = lo; i < hi; ++i) {
            simulate_individual(params, &strategy,
                                substream_seed(seed, static_cast<std::uint64_t>(i)), t);
            if (t.failed_at >= 0) ++local[static_cast<std::size_t>(t.failed_at)];
        }
        for (int k = 0; k < K; ++k)
            failures_by[static_cast<std::size_t>(k)].fetch_add(local[static_cast<std::size_t>(k)]);
    });

    TruthCurve out;
    out.n_individuals = n;
    out.curve.method = "truth";
    out.curve.mode = CurveMode::Truth;
    out.curve.strategy = strategy.label();
    std::int64_t alive = n;
    for (int k = 0; k < K; ++k) {
        alive -= failures_by[static_cast<std::size_t>(k)].load();
        const double s = static_cast<double>(alive) / static_cast<double>(n);
        out.curve.values.push_back(s);
        out.mc_se.push_back(std::sqrt(s * (1.0 - s) / static_cast<double>(n)));
    }
    return out;
}

}  // namespace imtk
