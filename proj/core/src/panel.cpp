#include "imtk/panel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace imtk {

void Panel::index() {
    persons.clear();
    std::size_t i = 0;
    while (i < records.size()) {
        std::size_t j = i;
        while (j < records.size() && records[j].id == records[i].id) ++j;
        persons.push_back({records[i].id, i, j});
        i = j;
    }
}

const char* to_string(CurveMode mode) {
    switch (mode) {
        case CurveMode::Adapted: return "adapted";
        case CurveMode::Naive: return "naive";
        case CurveMode::Truth: return "truth";
    }
    return "?";
}

bool SurvivalCurve::missing_at(int time_index) const {
    return time_index < 0 || time_index >= static_cast<int>(values.size()) ||
           std::isnan(values[time_index]);
}

std::vector<Violation> validate_panel(const Panel& panel) {
    std::vector<Violation> out;
    auto flag = [&](std::int64_t id, int k, const std::string& rule) {
        out.push_back({id, k, rule});
    };

    std::size_t i = 0;
    while (i < panel.records.size()) {
        const std::int64_t id = panel.records[i].id;
        std::size_t j = i;
        while (j < panel.records.size() && panel.records[j].id == id) ++j;

        bool failed = false;   // y=1 seen at an earlier period
        int expected_k = 0;
        for (std::size_t r = i; r < j; ++r) {
            const PanelRecord& rec = panel.records[r];
            if (rec.k != expected_k) {
                flag(id, rec.k, "contiguous-periods");
                expected_k = rec.k;  // resume from here
            }
            ++expected_k;
            if (rec.k < 0 || rec.k >= panel.horizon) flag(id, rec.k, "period-range");

            for (int b : {rec.n, rec.a, rec.y, rec.at_risk})
                if (b != 0 && b != 1) {
                    flag(id, rec.k, "binary-field");
                    break;
                }

            if (rec.at_risk != (failed ? 0 : 1)) {
                flag(id, rec.k, failed ? "absorbing-failure" : "at-risk-consistency");
            }

            if (rec.k == 0) {
                if (panel.has_lstar && !std::isnan(rec.l_star) &&
                    std::abs(rec.l - rec.l_star) > 1e-9) {
                    flag(id, rec.k, "baseline-monitored");
                }
            } else if (r > i) {
                const PanelRecord& prev = panel.records[r - 1];
                if (prev.k == rec.k - 1) {
                    if (prev.n == 0) {
                        if (std::abs(rec.l - prev.l) > 1e-9) flag(id, rec.k, "locf");
                    } else if (panel.has_lstar && !std::isnan(rec.l_star) &&
                               std::abs(rec.l - rec.l_star) > 1e-9) {
                        flag(id, rec.k, "locf");
                    }
                }
            }
            if (rec.y == 1) failed = true;
        }
        if (panel.records[i].k != 0) flag(id, panel.records[i].k, "missing-baseline");
        i = j;
    }
    return out;
}

std::vector<std::int64_t> risk_set(const Panel& panel, int k) {
    if (k < 0 || k >= panel.horizon) throw std::out_of_range("risk_set: period out of range");
    std::vector<std::int64_t> ids;
    for (const auto& rec : panel.records)
        if (rec.k == k && rec.at_risk == 1) ids.push_back(rec.id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

SurvivalCurve survival_from_hazards(std::span<const double> hazards) {
    SurvivalCurve curve;
    double s = 1.0;
    for (double h : hazards) {
        if (!(h >= 0.0 && h <= 1.0)) throw std::invalid_argument("hazard outside [0,1]");
        s *= 1.0 - h;
        curve.values.push_back(s);
    }
    return curve;
}

namespace {

void write_real(std::string& buf, double v) {
    char tmp[32];
    std::snprintf(tmp, sizeof tmp, "%.9g", v);
    buf += tmp;
}

}  // namespace

void write_panel_csv(const Panel& panel, std::ostream& os) {
    std::string buf;
    buf.reserve(64 * panel.records.size() + 64);
    buf += "id,k,l_star,l,n,a,y,at_risk\n";
    char tmp[64];
    for (const auto& r : panel.records) {
        std::snprintf(tmp, sizeof tmp, "%lld,%d,", static_cast<long long>(r.id), r.k);
        buf += tmp;
        if (panel.has_lstar && !std::isnan(r.l_star)) write_real(buf, r.l_star);
        buf += ',';
        write_real(buf, r.l);
        std::snprintf(tmp, sizeof tmp, ",%d,%d,%d,%d\n", r.n, r.a, r.y, r.at_risk);
        buf += tmp;
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void write_panel_csv(const Panel& panel, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    write_panel_csv(panel, f);
}

Panel read_panel_csv(std::istream& is) {
    Panel panel;
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("empty panel CSV");
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line != "id,k,l_star,l,n,a,y,at_risk")
        throw std::runtime_error("unexpected panel CSV header: " + line);

    int max_k = -1;
    bool any_lstar = false;
    while (std::getline(is, line)) {
        if (line.size() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        PanelRecord rec;
        std::stringstream ss(line);
        std::string field;
        auto next = [&]() {
            if (!std::getline(ss, field, ',')) throw std::runtime_error("short panel CSV row");
            return field;
        };
        rec.id = std::stoll(next());
        rec.k = std::stoi(next());
        next();
        if (field.empty()) {
            rec.l_star = std::nan("");
        } else {
            rec.l_star = std::stod(field);
            any_lstar = true;
        }
        rec.l = std::stod(next());
        rec.n = std::stoi(next());
        rec.a = std::stoi(next());
        rec.y = std::stoi(next());
        rec.at_risk = std::stoi(next());
        max_k = std::max(max_k, rec.k);
        panel.records.push_back(rec);
    }
    panel.horizon = max_k + 1;
    panel.has_lstar = any_lstar;
    std::stable_sort(panel.records.begin(), panel.records.end(),
                     [](const PanelRecord& a, const PanelRecord& b) {
                         return a.id != b.id ? a.id < b.id : a.k < b.k;
                     });
    panel.index();
    return panel;
}

Panel read_panel_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    return read_panel_csv(f);
}

}  // namespace imtk
