#include "imtk/strategy.hpp"

#include <stdexcept>

namespace imtk {

Strategy::Strategy(Kind kind, int p1, int q1, int q_last, std::string label)
    : kind_(kind), p1_(p1), q1_(q1), q_last_(q_last), label_(std::move(label)) {}

Strategy Strategy::always_treat() { return {Kind::AlwaysTreat, 0, 0, 0, "always"}; }

Strategy Strategy::never_treat() { return {Kind::NeverTreat, 0, 0, 0, "never"}; }

Strategy Strategy::treat_early(int p1) {
    if (p1 < 1) throw std::invalid_argument("treat-early requires p1 >= 1");
    return {Kind::TreatEarly, p1, 0, 0, "treat-early:p1=" + std::to_string(p1)};
}

Strategy Strategy::wait_to_treat(int q1, int q_last, int p1) {
    if (p1 < 1) throw std::invalid_argument("wait requires p1 >= 1");
    if (q1 > q_last) throw std::invalid_argument("wait requires q1 <= q_last");
    return {Kind::WaitToTreat, p1, q1, q_last,
            "wait:q1=" + std::to_string(q1) + ",q_last=" + std::to_string(q_last) +
                ",p1=" + std::to_string(p1)};
}

namespace {

int parse_kv(const std::string& spec, const std::string& key) {
    auto pos = spec.find(key + "=");
    if (pos == std::string::npos)
        throw std::invalid_argument("strategy spec missing " + key + ": " + spec);
    return std::stoi(spec.substr(pos + key.size() + 1));
}

}  // namespace

Strategy Strategy::parse(const std::string& text) {
    if (text == "always") return always_treat();
    if (text == "never") return never_treat();
    if (text.rfind("treat-early", 0) == 0) return treat_early(parse_kv(text, "p1"));
    if (text.rfind("wait", 0) == 0)
        return wait_to_treat(parse_kv(text, "q1"), parse_kv(text, "q_last"), parse_kv(text, "p1"));
    throw std::invalid_argument("unknown strategy: " + text);
}

// Assumes history[0..k) is compatible.
PeriodClass Strategy::classify_unchecked(std::span<const int> history, int k) const {
    switch (kind_) {
        case Kind::AlwaysTreat: return PeriodClass::Forced1;
        case Kind::NeverTreat: return PeriodClass::Forced0;
        case Kind::TreatEarly:
            return k < p1_ ? PeriodClass::Forced1 : PeriodClass::Natural;
        case Kind::WaitToTreat: {
            if (k < q1_) return PeriodClass::Forced0;
            // first treated period at or after q1, if any
            int t0 = -1;
            for (int j = q1_; j < k; ++j)
                if (history[static_cast<std::size_t>(j)] == 1) {
                    t0 = j;
                    break;
                }
            if (t0 < 0) {
                if (k < q_last_) return PeriodClass::Natural;
                return PeriodClass::Forced1;  // must initiate by q_last
            }
            return k < t0 + p1_ ? PeriodClass::Forced1 : PeriodClass::Natural;
        }
    }
    throw std::logic_error("unreachable");
}

PeriodClass Strategy::classify_period(std::span<const int> history, int k, int horizon) const {
    if (k >= horizon) throw std::out_of_range("classify_period: k beyond horizon");
    if (static_cast<int>(history.size()) < k)
        throw std::invalid_argument("classify_period: history shorter than k");
    if (!is_compatible(history.first(static_cast<std::size_t>(k)), horizon))
        throw std::invalid_argument("classify_period: history incompatible with strategy");
    return classify_unchecked(history, k);
}

bool Strategy::is_compatible(std::span<const int> trajectory, int horizon) const {
    if (static_cast<int>(trajectory.size()) > horizon) return false;
    for (int k = 0; k < static_cast<int>(trajectory.size()); ++k) {
        auto forced = forced_value(classify_unchecked(trajectory, k));
        if (forced && trajectory[static_cast<std::size_t>(k)] != *forced) return false;
    }
    return true;
}

std::vector<std::vector<int>> Strategy::enumerate_compatible(int horizon) const {
    std::vector<std::vector<int>> out;
    std::vector<int> traj(static_cast<std::size_t>(horizon), 0);
    const std::uint64_t total = 1ULL << horizon;
    for (std::uint64_t bits = 0; bits < total; ++bits) {
        for (int k = 0; k < horizon; ++k)
            traj[static_cast<std::size_t>(k)] = static_cast<int>((bits >> (horizon - 1 - k)) & 1);
        if (is_compatible(traj, horizon)) out.push_back(traj);
    }
    return out;
}

}  // namespace imtk
