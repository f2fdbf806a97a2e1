#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace imtk {

// One person-period row. `k` is the 0-based period index; the outcome
// drawn at the end of period k is reported as time k+1. `l_star` is the
// true covariate level, present only in simulated panels (NaN otherwise).
struct PanelRecord {
    std::int64_t id = 0;
    int k = 0;
    double l_star = 0.0;
    double l = 0.0;
    int n = 0;
    int a = 0;
    int y = 0;
    int at_risk = 1;
};

// Long-format panel, sorted by (id, k). `horizon` is the number of
// potential observation periods K.
struct Panel {
    std::vector<PanelRecord> records;
    int horizon = 0;
    bool has_lstar = false;

    // Offsets of each individual's record block, built by `index()`.
    struct Person {
        std::int64_t id;
        std::size_t begin;
        std::size_t end;  // one past last record
    };
    std::vector<Person> persons;

    void index();
    std::size_t n_individuals() const { return persons.size(); }
};

struct Violation {
    std::int64_t id;
    int k;
    std::string rule;
};

// Checks LOCF, absorbing failure, baseline monitoring, contiguity and
// at-risk consistency. Violations are data, not faults.
std::vector<Violation> validate_panel(const Panel& panel);

// Ids with at_risk = 1 at period k (sorted). Throws std::out_of_range
// for k outside [0, K).
std::vector<std::int64_t> risk_set(const Panel& panel, int k);

enum class CurveMode { Adapted, Naive, Truth };

const char* to_string(CurveMode mode);

// Marginal survival probabilities at times 1..K. A NaN entry means the
// estimate at that time is missing (e.g. empty risk set); `notes` carry
// per-time diagnostics.
struct SurvivalCurve {
    std::vector<double> values;
    std::string method;
    CurveMode mode = CurveMode::Adapted;
    std::string strategy;
    bool non_monotone_flagged = false;
    std::vector<std::string> notes;

    bool missing_at(int time_index) const;  // 0-based into values
};

// values[k] = prod_{j<=k} (1 - h_j). Throws std::invalid_argument for a
// hazard outside [0,1].
SurvivalCurve survival_from_hazards(std::span<const double> hazards);

// Canonical CSV interchange: header id,k,l_star,l,n,a,y,at_risk, rows
// sorted by id then k, UTF-8, LF. l_star written empty when absent.
void write_panel_csv(const Panel& panel, std::ostream& os);
void write_panel_csv(const Panel& panel, const std::string& path);
Panel read_panel_csv(std::istream& is);
Panel read_panel_csv(const std::string& path);

}  // namespace imtk
