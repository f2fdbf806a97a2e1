#include "imtk/features.hpp"

namespace imtk {

Dataset build_person_period_table(const Panel& panel) {
    const std::size_t n = panel.records.size();
    const int K = panel.horizon;

    std::vector<double> k_col(n), y(n), a(n), l(n), nn(n), at_risk(n);
    std::vector<double> a_lag1(n), a_lag2(n), l_lag1(n), l_lag2(n);
    std::vector<double> n_lag1(n), n_lag2(n), n_lag3(n), l_sum3(n), a_sum3(n);
    std::vector<std::vector<double>> time_d(static_cast<std::size_t>(K)),
        a_at(static_cast<std::size_t>(K));
    for (int t = 1; t < K; ++t) time_d[static_cast<std::size_t>(t)].assign(n, 0.0);
    for (int t = 0; t < K; ++t) a_at[static_cast<std::size_t>(t)].assign(n, 0.0);

    std::size_t i = 0;
    while (i < n) {
        const std::int64_t id = panel.records[i].id;
        std::size_t j = i;
        while (j < n && panel.records[j].id == id) ++j;
        for (std::size_t r = i; r < j; ++r) {
            const auto& rec = panel.records[r];
            const int k = rec.k;
            auto lag = [&](int back) -> const PanelRecord* {
                const std::size_t idx = r - static_cast<std::size_t>(back);
                if (back > static_cast<int>(r - i)) return nullptr;
                return &panel.records[idx];
            };
            const PanelRecord* p1 = lag(1);
            const PanelRecord* p2 = lag(2);
            const PanelRecord* p3 = lag(3);

            k_col[r] = k;
            y[r] = rec.y;
            a[r] = rec.a;
            l[r] = rec.l;
            nn[r] = rec.n;
            at_risk[r] = rec.at_risk;
            a_lag1[r] = p1 ? p1->a : 0.0;
            a_lag2[r] = p2 ? p2->a : 0.0;
            l_lag1[r] = p1 ? p1->l : 0.0;
            l_lag2[r] = p2 ? p2->l : 0.0;
            // N_{-1} := 1, N_j := 0 for j < -1
            n_lag1[r] = p1 ? p1->n : (k - 1 == -1 ? 1.0 : 0.0);
            n_lag2[r] = p2 ? p2->n : (k - 2 == -1 ? 1.0 : 0.0);
            n_lag3[r] = p3 ? p3->n : (k - 3 == -1 ? 1.0 : 0.0);
            l_sum3[r] = l[r] + l_lag1[r] + l_lag2[r];
            a_sum3[r] = a[r] + a_lag1[r] + a_lag2[r];
            if (k >= 1 && k < K) time_d[static_cast<std::size_t>(k)][r] = 1.0;
            for (std::size_t rr = i; rr <= r; ++rr) {
                const auto& past = panel.records[rr];
                a_at[static_cast<std::size_t>(past.k)][r] = past.a;
            }
        }
        i = j;
    }

    Dataset data(n);
    data.add_column("k", std::move(k_col));
    data.add_column("y", std::move(y));
    data.add_column("a", std::move(a));
    data.add_column("l", std::move(l));
    data.add_column("n", std::move(nn));
    data.add_column("at_risk", std::move(at_risk));
    data.add_column("a_lag1", std::move(a_lag1));
    data.add_column("a_lag2", std::move(a_lag2));
    data.add_column("l_lag1", std::move(l_lag1));
    data.add_column("l_lag2", std::move(l_lag2));
    data.add_column("n_lag1", std::move(n_lag1));
    data.add_column("n_lag2", std::move(n_lag2));
    data.add_column("n_lag3", std::move(n_lag3));
    data.add_column("l_sum3", std::move(l_sum3));
    data.add_column("a_sum3", std::move(a_sum3));
    for (int t = 1; t < K; ++t)
        data.add_column("time_" + std::to_string(t),
                        std::move(time_d[static_cast<std::size_t>(t)]));
    for (int t = 0; t < K; ++t)
        data.add_column("a_at_" + std::to_string(t),
                        std::move(a_at[static_cast<std::size_t>(t)]));
    return data;
}

std::vector<std::size_t> at_risk_rows(const Panel& panel, int k) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < panel.records.size(); ++r) {
        const auto& rec = panel.records[r];
        if (rec.at_risk == 1 && (k < 0 || rec.k == k)) rows.push_back(r);
    }
    return rows;
}

std::vector<std::size_t> at_risk_rows_from(const Panel& panel, int k_min) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < panel.records.size(); ++r) {
        const auto& rec = panel.records[r];
        if (rec.at_risk == 1 && rec.k >= k_min) rows.push_back(r);
    }
    return rows;
}

DesignSpec adapted_outcome_design(int period) {
    DesignSpec spec;
    spec.terms.push_back(Term::raw("a"));
    if (period >= 1) spec.terms.push_back(Term::raw("a_lag1"));
    if (period >= 2) spec.terms.push_back(Term::raw("a_lag2"));
    const char* n_names[] = {"n_lag1", "n_lag2", "n_lag3"};
    const char* l_names[] = {"l", "l_lag1", "l_lag2"};
    for (int lag = 0; lag <= 2 && lag <= period; ++lag) {
        if (period - lag - 1 == -1) {
            // monitoring indicator constant 1 here: only the covariate
            spec.terms.push_back(Term::raw(l_names[lag]));
        } else {
            spec.terms.push_back(Term::raw(n_names[lag]));
            spec.terms.push_back(Term::raw(l_names[lag]));
            spec.terms.push_back(Term::product({n_names[lag], l_names[lag]}));
        }
    }
    return spec;
}

}  // namespace imtk
