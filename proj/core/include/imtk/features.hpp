#pragma once

#include <vector>

#include "imtk/glm.hpp"
#include "imtk/panel.hpp"

namespace imtk {

// Long-format person-period table with the lag columns every estimator
// needs. Row r corresponds to panel.records[r]. Boundary conventions:
// A_j = L_j = 0 for j < 0; N_{-1} = 1 (baseline is always monitored) and
// N_j = 0 for j < -1. These implement the dropped-negative-lag reading
// of the pooled model forms.
//
// Columns: k, y, a, l, n, at_risk, a_lag1, a_lag2, l_lag1, l_lag2,
// n_lag1, n_lag2, n_lag3, l_sum3 (= l + l_lag1 + l_lag2),
// a_sum3 (= a + a_lag1 + a_lag2), time_1..time_{K-1} (period dummies)
// and a_at_0..a_at_{K-1} (treatment-history columns, zero for j > k).
Dataset build_person_period_table(const Panel& panel);

// Row indices with at_risk = 1 and period == k (or any period if k < 0).
std::vector<std::size_t> at_risk_rows(const Panel& panel, int k = -1);

// Row indices with at_risk = 1 and period >= k_min.
std::vector<std::size_t> at_risk_rows_from(const Panel& panel, int k_min);

// Adapted outcome design at one period: treatment lags plus, for each
// covariate lag, monitoring main effect, covariate main effect and their
// interaction. Terms that are constant at this period by the boundary
// conventions are folded away (e.g. at k = 0 the current-covariate
// triple reduces to the covariate itself).
DesignSpec adapted_outcome_design(int period);

}  // namespace imtk
