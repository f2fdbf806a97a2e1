#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace imtk {

enum class PeriodClass { Forced0, Forced1, Natural };

inline std::optional<int> forced_value(PeriodClass c) {
    switch (c) {
        case PeriodClass::Forced0: return 0;
        case PeriodClass::Forced1: return 1;
        case PeriodClass::Natural: return std::nullopt;
    }
    return std::nullopt;
}

// Static treatment strategies, including the natural grace-period ones.
// TreatEarly forces treatment for the first p1 periods then leaves it
// natural. WaitToTreat forces no treatment before q1, allows natural
// initiation in [q1, q_last), forces initiation at q_last, then keeps
// treatment forced for p1 consecutive periods from initiation.
class Strategy {
  public:
    enum class Kind { AlwaysTreat, NeverTreat, TreatEarly, WaitToTreat };

    static Strategy always_treat();
    static Strategy never_treat();
    static Strategy treat_early(int p1);
    static Strategy wait_to_treat(int q1, int q_last, int p1);

    // Names accepted by configs and the CLI: `always`, `never`,
    // `treat-early:p1=3`, `wait:q1=2,q_last=3,p1=2`.
    static Strategy parse(const std::string& text);

    Kind kind() const { return kind_; }
    const std::string& label() const { return label_; }
    int p1() const { return p1_; }
    int q1() const { return q1_; }
    int q_last() const { return q_last_; }

    // Throws std::invalid_argument if `history` is incompatible with the
    // strategy through period k-1, or std::out_of_range if k >= horizon.
    PeriodClass classify_period(std::span<const int> history, int k, int horizon) const;

    bool is_compatible(std::span<const int> trajectory, int horizon) const;

    // Exactly the length-K binary trajectories with is_compatible true,
    // in lexicographic order.
    std::vector<std::vector<int>> enumerate_compatible(int horizon) const;

  private:
    Strategy(Kind kind, int p1, int q1, int q_last, std::string label);
    PeriodClass classify_unchecked(std::span<const int> history, int k) const;

    Kind kind_;
    int p1_ = 0;
    int q1_ = 0;
    int q_last_ = 0;
    std::string label_;
};

}  // namespace imtk
