#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cfprobe/model.hpp"
#include "cfprobe/random.hpp"

namespace cfprobe {

// Per-worker plan shape: x items total, n probe pairs among them, and the
// minimum display distance d between a pair's two halves.
struct PlanConfig {
    int total_items = 0;       // x
    int pairs_per_worker = 0;  // n
    int min_separation = 1;    // d
    std::uint64_t rng_seed = 0;
};

inline int default_min_separation(int total_items) {
    return (total_items + 2) / 3;  // ceil(x/3)
}

inline void check_plan_config(const PlanConfig& cfg) {
    if (cfg.pairs_per_worker < 1) throw Error("plan needs at least one probe pair per worker");
    if (cfg.min_separation < 1) throw Error("min separation must be >= 1");
    if (cfg.total_items < 2 * cfg.pairs_per_worker)
        throw Error("total items (" + std::to_string(cfg.total_items) + ") must be >= 2 * pairs (" +
                    std::to_string(2 * cfg.pairs_per_worker) + ")");
}

// Largest number of pairs placeable within the sorted free slots so that
// every pair spans >= d positions: k pairs fit iff matching the k smallest
// slots with the k largest (in order) keeps every span >= d.
inline int max_pairs_in_slots(const std::vector<int>& sorted_slots, int d) {
    const int m = static_cast<int>(sorted_slots.size());
    for (int k = m / 2; k >= 1; --k) {
        bool ok = true;
        for (int i = 0; i < k; ++i) {
            if (sorted_slots[m - k + i] - sorted_slots[i] < d) {
                ok = false;
                break;
            }
        }
        if (ok) return k;
    }
    return 0;
}

// Feasibility bound for build_plan: the largest n such that n pairs admit a
// placement in x slots with all distances >= d. build_plan succeeds iff the
// requested n is at most this value.
inline int max_feasible_pairs(int x, int d) {
    if (x < 2 || d < 1) throw Error("max_feasible_pairs requires x >= 2 and d >= 1");
    std::vector<int> slots(x);
    for (int i = 0; i < x; ++i) slots[i] = i;
    return max_pairs_in_slots(slots, d);
}

namespace detail {

struct PairSlots {
    int original_pos;
    int counterfactual_pos;
};

// Greedy placement over seeded-shuffled slot candidates with backtracking.
// Before committing a candidate the remaining slots are checked for residual
// feasibility, so dead ends are pruned and the search is exact.
inline bool place_pairs(std::vector<int>& free_slots, int pairs_left, int d, RandomStream& rng,
                        std::vector<PairSlots>& out) {
    if (pairs_left == 0) return true;
    std::vector<int> order = free_slots;
    rng.shuffle(order);
    for (std::size_t a = 0; a < order.size(); ++a) {
        for (std::size_t b = 0; b < order.size(); ++b) {
            int i = order[a], j = order[b];
            if (j - i < d) continue;
            std::vector<int> rest;
            rest.reserve(free_slots.size() - 2);
            for (int s : free_slots)
                if (s != i && s != j) rest.push_back(s);
            if (max_pairs_in_slots(rest, d) < pairs_left - 1) continue;
            out.push_back({i, j});
            if (place_pairs(rest, pairs_left - 1, d, rng, out)) {
                free_slots = std::move(rest);
                return true;
            }
            out.pop_back();
        }
    }
    return false;
}

}  // namespace detail

// Assembles one worker's plan: a seeded permutation of all 2n pair items and
// x-2n fillers in which each original precedes its counterfactual by at
// least d positions. Deterministic given (rng_seed, worker_id).
inline TaskPlan build_plan(const std::string& worker_id, const std::vector<Query>& fillers,
                           const std::vector<ProbePair>& pairs, const PlanConfig& config) {
    check_plan_config(config);
    const int x = config.total_items;
    const int n = config.pairs_per_worker;
    const int d = config.min_separation;

    if (static_cast<int>(pairs.size()) != n)
        throw Error("expected " + std::to_string(n) + " probe pairs, got " + std::to_string(pairs.size()));
    if (static_cast<int>(fillers.size()) != x - 2 * n)
        throw Error("expected " + std::to_string(x - 2 * n) + " fillers, got " + std::to_string(fillers.size()));

    int feasible = max_feasible_pairs(x, d);
    if (n > feasible)
        throw Error("infeasible plan: " + std::to_string(n) + " pairs with separation " + std::to_string(d) +
                    " do not fit in " + std::to_string(x) + " slots (at most " + std::to_string(feasible) +
                    " such pairs fit; max distance in " + std::to_string(x) + " slots is " + std::to_string(x - 1) +
                    ")");

    RandomStream rng(derive_seed(config.rng_seed, worker_id));

    std::vector<int> free_slots(x);
    for (int i = 0; i < x; ++i) free_slots[i] = i;
    std::vector<detail::PairSlots> placements;
    if (!detail::place_pairs(free_slots, n, d, rng, placements))
        throw Error("internal: placement search failed on a feasible config");

    std::vector<std::size_t> filler_order(fillers.size());
    for (std::size_t i = 0; i < fillers.size(); ++i) filler_order[i] = i;
    rng.shuffle(filler_order);

    struct SlotContent {
        const Query* query;
        Role role;
        const std::string* pair_id;
    };
    std::vector<SlotContent> slots(x, {nullptr, Role::filler, nullptr});
    for (int k = 0; k < n; ++k) {
        slots[placements[k].original_pos] = {&pairs[k].original, Role::original, &pairs[k].pair_id};
        slots[placements[k].counterfactual_pos] = {&pairs[k].counterfactual, Role::counterfactual, &pairs[k].pair_id};
    }
    std::size_t next_filler = 0;
    for (int s = 0; s < x; ++s) {
        if (!slots[s].query) slots[s].query = &fillers[filler_order[next_filler++]];
    }

    int digits = 1;
    for (int v = x - 1; v >= 10; v /= 10) ++digits;

    TaskPlan plan;
    plan.worker_id = worker_id;
    plan.items.reserve(x);
    for (int s = 0; s < x; ++s) {
        std::string pos = std::to_string(s);
        std::string display_id = worker_id + "-q" + std::string(digits - pos.size(), '0') + pos;
        plan.items.push_back({display_id, slots[s].query->features});
        HiddenEntry entry;
        entry.query_id = slots[s].query->query_id;
        entry.role = slots[s].role;
        if (slots[s].pair_id) entry.pair_id = *slots[s].pair_id;
        plan.hidden_map[display_id] = entry;
    }
    return plan;
}

// Independent checker for build_plan output: uniqueness, hidden-map
// coverage, pair completeness, ordering, separation, and counts. Violations
// name the offending pair and the measured distance.
inline std::vector<Violation> validate_plan(const TaskPlan& plan, const PlanConfig& config) {
    std::vector<Violation> out;
    const int x = config.total_items;
    const int d = config.min_separation;

    if (static_cast<int>(plan.items.size()) != x)
        out.push_back({plan.worker_id, "plan has " + std::to_string(plan.items.size()) + " items, expected " +
                                           std::to_string(x)});

    std::map<std::string, int> position;  // display_id -> index
    for (std::size_t i = 0; i < plan.items.size(); ++i) {
        const auto& id = plan.items[i].display_id;
        if (!position.emplace(id, static_cast<int>(i)).second)
            out.push_back({id, "duplicate display id"});
    }
    for (const auto& item : plan.items) {
        if (!plan.hidden_map.count(item.display_id))
            out.push_back({item.display_id, "display item missing from hidden map"});
    }
    for (const auto& [id, entry] : plan.hidden_map) {
        if (!position.count(id)) out.push_back({id, "hidden entry without display item"});
    }

    struct PairPos {
        int original = -1;
        int counterfactual = -1;
    };
    std::map<std::string, PairPos> pair_pos;
    int fillers = 0;
    for (const auto& [id, entry] : plan.hidden_map) {
        auto pos_it = position.find(id);
        if (pos_it == position.end()) continue;
        switch (entry.role) {
            case Role::filler:
                ++fillers;
                break;
            case Role::original:
                if (pair_pos[entry.pair_id].original != -1)
                    out.push_back({entry.pair_id, "original scheduled more than once"});
                pair_pos[entry.pair_id].original = pos_it->second;
                break;
            case Role::counterfactual:
                if (pair_pos[entry.pair_id].counterfactual != -1)
                    out.push_back({entry.pair_id, "counterfactual scheduled more than once"});
                pair_pos[entry.pair_id].counterfactual = pos_it->second;
                break;
        }
    }

    if (static_cast<int>(pair_pos.size()) != config.pairs_per_worker)
        out.push_back({plan.worker_id, "plan has " + std::to_string(pair_pos.size()) + " pairs, expected " +
                                           std::to_string(config.pairs_per_worker)});
    if (fillers != x - 2 * config.pairs_per_worker)
        out.push_back({plan.worker_id, "plan has " + std::to_string(fillers) + " fillers, expected " +
                                           std::to_string(x - 2 * config.pairs_per_worker)});

    for (const auto& [pair_id, pp] : pair_pos) {
        if (pp.original == -1 || pp.counterfactual == -1) {
            out.push_back({pair_id, "unmatched pair member"});
            continue;
        }
        if (pp.original >= pp.counterfactual)
            out.push_back({pair_id, "original does not precede counterfactual"});
        int distance = std::abs(pp.counterfactual - pp.original);
        if (distance < d)
            out.push_back({pair_id, "pair distance " + std::to_string(distance) + " < " + std::to_string(d)});
    }
    return out;
}

}  // namespace cfprobe
