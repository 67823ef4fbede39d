#include "semcom/allocation.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>

#include "semcom/errors.hpp"
#include "semcom/serialize.hpp"

namespace semcom {

namespace {

// Unit order for the pairing loop: ascending r, ties to the lower index.
std::vector<std::size_t> units_by_ascending_score(const RobustnessMask& mask) {
    std::vector<std::size_t> order(mask.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return mask.r[a] < mask.r[b];
    });
    return order;
}

// Subchannels best-first (or worst-first), ties to the lower index.
std::vector<std::size_t> subchannels_by_snr(const SubchannelSet& subs, bool best_first) {
    std::vector<std::size_t> order(subs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return best_first ? subs.snr_db[a] > subs.snr_db[b] : subs.snr_db[a] < subs.snr_db[b];
    });
    return order;
}

AllocationPlan pair_sorted(const RobustnessMask& mask, const SubchannelSet& subs,
                           bool best_first, Strategy strategy) {
    const std::size_t m = mask.size();
    if (subs.total_capacity() < m)
        throw config_error("allocate: subchannel capacity is insufficient for all units");
    const std::vector<std::size_t> units = units_by_ascending_score(mask);
    const std::vector<std::size_t> channels = subchannels_by_snr(subs, best_first);

    AllocationPlan plan;
    plan.strategy = strategy;
    plan.assign.assign(m, 0);
    std::size_t channel_pos = 0;
    std::size_t remaining = subs.capacity;
    for (std::size_t unit : units) {
        plan.assign[unit] = channels[channel_pos];
        if (--remaining == 0) {
            ++channel_pos;
            remaining = subs.capacity;
        }
    }
    validate_plan(plan, subs);
    return plan;
}

}  // namespace

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::proposed: return "proposed";
        case Strategy::random: return "random";
        case Strategy::worst_case: return "worst_case";
        case Strategy::brute_force: return "brute_force";
    }
    return "unknown";
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "proposed") return Strategy::proposed;
    if (name == "random") return Strategy::random;
    if (name == "worst_case") return Strategy::worst_case;
    if (name == "brute_force") return Strategy::brute_force;
    throw config_error("unknown allocation strategy '" + name + "'");
}

void validate_plan(const AllocationPlan& plan, const SubchannelSet& subs) {
    std::vector<std::size_t> load(subs.size(), 0);
    for (std::size_t j : plan.assign) {
        if (j >= subs.size()) throw config_error("plan: subchannel index out of range");
        if (++load[j] > subs.capacity) throw config_error("plan: subchannel over capacity");
    }
}

AllocationPlan greedy_allocate(const RobustnessMask& mask, const SubchannelSet& subs) {
    return pair_sorted(mask, subs, /*best_first=*/true, Strategy::proposed);
}

AllocationPlan worst_case_allocate(const RobustnessMask& mask, const SubchannelSet& subs) {
    return pair_sorted(mask, subs, /*best_first=*/false, Strategy::worst_case);
}

AllocationPlan random_allocate(std::size_t m, const SubchannelSet& subs, Rng& rng) {
    if (subs.total_capacity() < m)
        throw config_error("allocate: subchannel capacity is insufficient for all units");
    std::vector<std::size_t> slots;
    slots.reserve(subs.total_capacity());
    for (std::size_t j = 0; j < subs.size(); ++j)
        for (std::size_t c = 0; c < subs.capacity; ++c) slots.push_back(j);
    for (std::size_t i = slots.size(); i > 1; --i)
        std::swap(slots[i - 1], slots[rng.next_below(i)]);

    AllocationPlan plan;
    plan.strategy = Strategy::random;
    plan.assign.assign(slots.begin(), slots.begin() + m);
    validate_plan(plan, subs);
    return plan;
}

AllocationPlan brute_force_allocate(const RealMatrix& score, const SubchannelSet& subs) {
    const std::size_t m = score.rows;
    const std::size_t s = subs.size();
    if (score.cols != s) throw std::invalid_argument("brute_force: score table must be m x s");
    if (m > 10 || s > 5)
        throw std::invalid_argument("brute_force: instance too large (m <= 10, s <= 5)");
    if (subs.total_capacity() < m)
        throw config_error("allocate: subchannel capacity is insufficient for all units");

    std::vector<std::size_t> current(m, 0), best;
    std::vector<std::size_t> load(s, 0);
    double best_total = -std::numeric_limits<double>::infinity();

    // DFS in ascending subchannel order per unit: complete assignments come
    // out in lexicographic order, so strict improvement keeps the smallest.
    auto recurse = [&](auto&& self, std::size_t unit, double total) -> void {
        if (unit == m) {
            if (total > best_total) {
                best_total = total;
                best = current;
            }
            return;
        }
        for (std::size_t j = 0; j < s; ++j) {
            if (load[j] == subs.capacity) continue;
            ++load[j];
            current[unit] = j;
            self(self, unit + 1, total + score(unit, j));
            --load[j];
        }
    };
    recurse(recurse, 0, 0.0);

    AllocationPlan plan;
    plan.strategy = Strategy::brute_force;
    plan.assign = std::move(best);
    validate_plan(plan, subs);
    return plan;
}

void write_plan_csv(const AllocationPlan& plan, const RobustnessMask& mask,
                    const SubchannelSet& subs, const std::string& path) {
    if (plan.assign.size() != mask.size())
        throw std::invalid_argument("write_plan_csv: plan/mask length mismatch");
    std::ostringstream out;
    out << "unit_index,subchannel_index,r,snr_db\n";
    for (std::size_t k = 0; k < plan.assign.size(); ++k)
        out << k << "," << plan.assign[k] << "," << format_double(mask.r[k]) << ","
            << format_double(subs.snr_db[plan.assign[k]]) << "\n";
    write_file(path, out.str());
}

}  // namespace semcom
