#pragma once

#include <string>
#include <vector>

#include "semcom/channel.hpp"
#include "semcom/ib_mask.hpp"
#include "semcom/matrix.hpp"

namespace semcom {

enum class Strategy { proposed, random, worst_case, brute_force };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct AllocationPlan {
    std::vector<std::size_t> assign;  // assign[k] = subchannel index of unit k
    Strategy strategy = Strategy::proposed;
};

// Throws if any index is out of range, any subchannel exceeds its capacity,
// or the plan does not cover all units.
void validate_plan(const AllocationPlan& plan, const SubchannelSet& subs);

// Units in ascending robustness score, each to the best-SNR subchannel with
// remaining capacity; ties break to the lower index on both sides.
AllocationPlan greedy_allocate(const RobustnessMask& mask, const SubchannelSet& subs);

// Uniformly random feasible assignment.
AllocationPlan random_allocate(std::size_t m, const SubchannelSet& subs, Rng& rng);

// Ascending robustness paired with ascending SNR: the exact reverse pairing
// of greedy_allocate, same tie-breaks.
AllocationPlan worst_case_allocate(const RobustnessMask& mask, const SubchannelSet& subs);

// Exhaustive oracle, bounded to m <= 10 and s <= 5. Maximizes
// sum_k score(k, assign[k]); ties resolve to the lexicographically smallest
// assignment. score is an m x s table.
AllocationPlan brute_force_allocate(const RealMatrix& score, const SubchannelSet& subs);

// CSV: "unit_index,subchannel_index,r,snr_db"
void write_plan_csv(const AllocationPlan& plan, const RobustnessMask& mask,
                    const SubchannelSet& subs, const std::string& path);

}  // namespace semcom
