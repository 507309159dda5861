#pragma once

/**
 * @file reconstruct.hpp
 * @brief Turning the DP's best actions into a concrete coupling.
 *
 * The trace replays the action sequence the dynamic program chose while
 * mirroring each step on pools of live fragments. Fragment selection is
 * deterministic: smallest origin first, FIFO among equal origins. At the
 * base case the remaining fragments are handed to the greedy coupler,
 * whose output entropy never exceeds the independence bound the DP charged
 * for them, so the result is an exactly valid coupling with entropy at
 * most the memoized root cost.
 */

#include "mec/dpcore.hpp"
#include "mec/model.hpp"

#include <limits>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

namespace mec {

namespace detail {

/// Live fragments of one distribution, ordered for deterministic picks:
/// value descending, then origin ascending, then insertion order.
struct FragmentPool {
    struct Entry {
        Mass value;
        int origin;
        long seq;
    };
    struct ByValueDesc {
        bool operator()(const Entry& a, const Entry& b) const {
            if (a.value != b.value) return a.value > b.value;
            if (a.origin != b.origin) return a.origin < b.origin;
            return a.seq < b.seq;
        }
    };
    std::set<Entry, ByValueDesc> live;
    long next_seq = 0;

    void insert(const Mass& value, int origin) { live.insert(Entry{value, origin, next_seq++}); }

    /// Removes and returns the fragment of exactly `value` with the smallest
    /// origin (FIFO among equals). Entries of one value are contiguous and
    /// ordered by (origin, seq), so the lower bound with a sentinel origin
    /// lands on the pick.
    Entry take(const Mass& value) {
        auto it = live.lower_bound(Entry{value, std::numeric_limits<int>::min(), 0});
        if (it == live.end() || it->value != value)
            throw std::logic_error("FragmentPool: fragment value not present");
        Entry out = *it;
        live.erase(it);
        return out;
    }

    bool empty() const { return live.empty(); }
};

} // namespace detail

/**
 * Greedy coupling of fragment pools with exactly equal total mass:
 * repeatedly take each pool's maximum-value fragment (ties by smallest
 * origin), couple the minimum of those values, and subtract. Each round
 * exhausts at least one fragment, so the output has at most
 * sum-of-pool-sizes states. Ordered sets give the O(m^2 n log n)-style
 * running time.
 */
inline std::vector<CouplingState> greedy_couple(const std::vector<std::vector<Fragment>>& pools) {
    const size_t m = pools.size();
    std::vector<detail::FragmentPool> sets(m);
    Mass total0;
    for (size_t d = 0; d < m; ++d) {
        Mass total;
        for (const Fragment& f : pools[d]) {
            if (f.value.is_zero()) continue;
            sets[d].insert(f.value, f.origin);
            total += f.value;
        }
        if (d == 0) {
            total0 = total;
        } else if (total != total0) {
            throw std::invalid_argument("greedy_couple: pools have unequal total mass");
        }
    }
    std::vector<CouplingState> out;
    while (!sets.empty() && !sets[0].empty()) {
        std::vector<int> origins(m);
        Mass z = sets[0].live.begin()->value;
        for (size_t d = 0; d < m; ++d) {
            const auto& top = *sets[d].live.begin();
            origins[d] = top.origin;
            if (top.value < z) z = top.value;
        }
        for (size_t d = 0; d < m; ++d) {
            auto top = *sets[d].live.begin();
            sets[d].live.erase(sets[d].live.begin());
            const Mass rest = top.value - z;
            if (!rest.is_zero()) sets[d].live.insert(detail::FragmentPool::Entry{rest, top.origin, top.seq});
        }
        out.push_back(CouplingState{z, std::move(origins)});
    }
    for (const auto& s : sets) {
        if (!s.empty()) throw std::logic_error("greedy_couple: leftover mass after termination");
    }
    return out;
}

/**
 * Replays a best-action sequence over the preprocessed fragments and
 * materializes the coupling. Internal inconsistencies between the pool and
 * the action sequence are defects and throw logic_error.
 */
inline Coupling trace_to_coupling(const PreprocessedInput& pre, const Params& params,
                                  std::span<const Action> actions) {
    const size_t m = pre.fragments.size();

    // Pending start fragments, ascending by value; window descent activates
    // a [lo, hi) slice from the top end.
    std::vector<std::vector<Fragment>> pending(m);
    std::vector<detail::FragmentPool> live(m);
    for (size_t d = 0; d < m; ++d) {
        pending[d] = pre.fragments[d];
        std::stable_sort(pending[d].begin(), pending[d].end(),
                         [](const Fragment& a, const Fragment& b) { return a.value < b.value; });
    }
    auto activate = [&](size_t d, const Mass& lo, const std::optional<Mass>& hi) {
        auto& pend = pending[d];
        while (!pend.empty() && pend.back().value >= lo) {
            if (hi && pend.back().value >= *hi) break;
            live[d].insert(pend.back().value, pend.back().origin);
            pend.pop_back();
        }
    };

    Mass window_top = floor_to_grid(Mass(1), params.grid).value;
    for (size_t d = 0; d < m; ++d) activate(d, params.alpha * window_top, std::nullopt);

    std::vector<CouplingState> states;
    std::vector<int> shape;
    shape.reserve(m);
    for (const Distribution& p : pre.original) shape.push_back(p.size());

    for (const Action& act : actions) {
        switch (act.kind) {
        case Action::Kind::AdvanceM: {
            const Mass& to = act.advance_to.value;
            for (size_t d = 0; d < m; ++d) activate(d, params.alpha * to, params.alpha * window_top);
            window_top = to;
            break;
        }
        case Action::Kind::Split: {
            const size_t d = static_cast<size_t>(act.split_index);
            auto frag = live[d].take(act.split_value);
            const Mass half = act.split_value.mul_pow2(-1);
            live[d].insert(half, frag.origin);
            live[d].insert(half, frag.origin);
            break;
        }
        case Action::Kind::Match: {
            const MatchAction& ma = *act.match;
            std::vector<int> origins(m);
            for (size_t d = 0; d < m; ++d) {
                auto frag = live[d].take(ma.x[d]);
                origins[d] = frag.origin;
                if (ma.a[d]) live[d].insert(ma.a[d]->value, frag.origin);
                if (ma.b[d]) live[d].insert(ma.b[d]->value, frag.origin);
            }
            states.push_back(CouplingState{ma.z.value, std::move(origins)});
            break;
        }
        case Action::Kind::BaseCase: {
            std::vector<std::vector<Fragment>> leftovers(m);
            for (size_t d = 0; d < m; ++d) {
                for (const auto& e : live[d].live) leftovers[d].push_back(Fragment{e.value, e.origin, false});
                for (const Fragment& f : pending[d]) leftovers[d].push_back(f);
            }
            std::vector<CouplingState> tail = greedy_couple(leftovers);
            states.insert(states.end(), tail.begin(), tail.end());
            return finalize_coupling(std::move(states), std::move(shape));
        }
        }
    }
    throw std::logic_error("trace_to_coupling: action sequence did not end in a base case");
}

/// Convenience: solve (if needed), take the best trace, and reconstruct.
inline Coupling trace_to_coupling(DynamicProgram& dp, const PreprocessedInput& pre,
                                  std::vector<Action>* trace_out = nullptr) {
    dp.fast_coupling(dp.initial_state());
    std::vector<Action> actions = dp.best_actions();
    Coupling out = trace_to_coupling(pre, dp.params(), actions);
    if (trace_out != nullptr) *trace_out = std::move(actions);
    return out;
}

} // namespace mec
