#pragma once

/**
 * @file dpcore.hpp
 * @brief Memoized dynamic program over sliding-window multiset states.
 *
 * A DP-state is the current window top M (a grid element) together with,
 * per distribution, the multiset of remaining state values inside the
 * window [alpha*M, M]. States are canonically encoded (M, then each
 * multiset as value/count pairs sorted by value) and memoized by the
 * encoded bytes, so multiset identity is representation-independent.
 *
 * Transitions:
 *   - base case when M < tau/alpha (checked on entry, before anything
 *     else): cost is the independence upper bound over the leftover
 *     values;
 *   - AdvanceM when no multiset contains M: M drops to the next value at
 *     which anything can happen (the largest remaining or pending value,
 *     or the base-case boundary), activating the start values that enter
 *     the window on the way down. The intermediate one-step states have a
 *     single forced transition each, so skipping them changes neither the
 *     value nor the constructed coupling;
 *   - otherwise, for the smallest-indexed multiset containing M: the Split
 *     option (replace M by two M/2, no immediate cost) and every Match
 *     option with z in the grid window [eps*M, M], costing H(z).
 *
 * The memoized value of a state is the exact minimum over its full option
 * set. Options are evaluated best-bound-first and a branch is skipped once
 * an admissible lower bound shows it cannot strictly improve on the
 * incumbent, which preserves the minimum bit for bit; among equal-cost
 * options the tie goes to the first one resolved in (bound, canonical)
 * order, deterministically. The bound: any remaining coupling refines each
 * distribution's remaining fragments, so the cost-to-go is at least the
 * largest per-distribution sum of fragment entropies.
 *
 * Values are interned to small integer ids (with cached entropies and
 * match results), and the recursion runs on an explicit stack; traces can
 * be thousands of actions deep at small tau. Exceeding the state budget
 * aborts cleanly with BudgetExceeded rather than returning a wrong answer.
 */

#include "mec/grid.hpp"
#include "mec/model.hpp"
#include "mec/preprocess.hpp"

#include <cassert>
#include <cstring>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mec {

struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Multiset of exact values with positive counts, kept ascending by value.
using ValueCounts = std::vector<std::pair<Mass, int>>;

namespace detail {

inline void add_value(ValueCounts& ms, const Mass& v, int count = 1) {
    auto it = std::lower_bound(ms.begin(), ms.end(), v,
                               [](const auto& e, const Mass& x) { return e.first < x; });
    if (it != ms.end() && it->first == v) {
        it->second += count;
    } else {
        ms.insert(it, {v, count});
    }
}

inline void remove_value(ValueCounts& ms, const Mass& v) {
    auto it = std::lower_bound(ms.begin(), ms.end(), v,
                               [](const auto& e, const Mass& x) { return e.first < x; });
    if (it == ms.end() || it->first != v) throw std::logic_error("remove_value: value not present");
    if (--it->second == 0) ms.erase(it);
}

inline bool contains_value(const ValueCounts& ms, const Mass& v) {
    auto it = std::lower_bound(ms.begin(), ms.end(), v,
                               [](const auto& e, const Mass& x) { return e.first < x; });
    return it != ms.end() && it->first == v;
}

} // namespace detail

struct DPState {
    GridPoint M;
    std::vector<ValueCounts> counts; // one multiset per distribution

    /// Canonical human-readable key (the engine uses a binary equivalent).
    std::string encode() const {
        std::string key = M.value.to_string();
        for (const ValueCounts& ms : counts) {
            key += '|';
            for (const auto& [v, c] : ms) {
                key += v.to_string();
                key += '*';
                key += std::to_string(c);
                key += ',';
            }
        }
        return key;
    }
};

struct MatchAction {
    GridPoint z;
    std::vector<Mass> x;                     // chosen value per distribution
    std::vector<std::optional<GridPoint>> a; // nullopt = zero
    std::vector<std::optional<GridPoint>> b;
};

struct Action {
    enum class Kind { AdvanceM, Split, Match, BaseCase };
    Kind kind = Kind::BaseCase;
    GridPoint advance_to;       // AdvanceM: target window top
    int split_index = -1;       // Split: distribution index
    Mass split_value;           // Split: the value halved (the state's M)
    std::optional<MatchAction> match;
};

struct MemoEntry {
    EntropyValue cost = 0.0;
    Action best_action;
};

struct Transition {
    Action action;
    DPState successor;
    EntropyValue immediate_cost = 0.0;
};

class DynamicProgram {
    // ---- internal compact representation ---------------------------------
    using IdCounts = std::vector<std::pair<int, int>>; // (value id, count), ascending by value
    struct IdState {
        int m_id = -1;
        std::vector<IdCounts> s;
    };
    enum class IKind : uint8_t { Advance, Split, Match, Base };
    struct IAction {
        IKind kind = IKind::Base;
        int istar = -1;           // Split
        int z = -1;               // Match
        std::vector<int> x;       // Match: one id per distribution
        int advance_to = -1;      // Advance: id of the target M
    };
    struct IMemoEntry {
        double cost = 0.0; // exact minimum, or a proven lower bound
        IAction best;      // meaningful only when exact
        bool exact = true;
    };

public:
    DynamicProgram(const PreprocessedInput& pre, const Params& params)
        : params_(params), threshold_(params.base_threshold()) {
        const size_t m = pre.fragments.size();
        start_vals_.resize(m);
        start_ids_.resize(m);
        start_pref_h_.resize(m);
        for (size_t d = 0; d < m; ++d) {
            auto& vals = start_vals_[d];
            for (const Fragment& f : pre.fragments[d]) vals.push_back(f.value);
            std::sort(vals.begin(), vals.end());
            start_ids_[d].reserve(vals.size());
            start_pref_h_[d].reserve(vals.size() + 1);
            start_pref_h_[d].push_back(0.0);
            for (const Mass& v : vals) {
                const int id = intern(v);
                start_ids_[d].push_back(id);
                start_pref_h_[d].push_back(start_pref_h_[d].back() + entropy_[static_cast<size_t>(id)]);
            }
        }
        // Largest grid element below the base threshold: the M at which the
        // base case triggers.
        GridPoint f = floor_to_grid(threshold_, params_.grid);
        GridPoint floor_m = f;
        if (f.value == threshold_) {
            f = predecessor(f, params_.grid);
        } else {
            floor_m = successor(f, params_.grid).value_or(f);
        }
        base_m_id_ = intern_grid(f);
        // No future match can use z below eps * (smallest grid element that
        // can still be a window top); values under that are stuck until the
        // base case and their entropy is paid once per distribution.
        unmatchable_cut_ = params_.grid.epsilon * floor_m.value;
    }

    DPState initial_state() const {
        DPState s;
        s.M = floor_to_grid(Mass(1), params_.grid);
        const Mass lo = params_.alpha * s.M.value;
        s.counts.resize(start_vals_.size());
        for (size_t d = 0; d < start_vals_.size(); ++d) {
            const auto& vals = start_vals_[d];
            for (auto it = std::lower_bound(vals.begin(), vals.end(), lo); it != vals.end(); ++it)
                detail::add_value(s.counts[d], *it);
        }
        return s;
    }

    /// Memoized minimum cost from `root`, run on an explicit stack.
    /// Throws BudgetExceeded past params.budget memoized states.
    MemoEntry fast_coupling(const DPState& root) {
        const IdState iroot = to_internal(root);
        if (is_base(iroot)) {
            IAction base;
            base.kind = IKind::Base;
            return MemoEntry{base_cost_internal(iroot), to_public_action(iroot, base)};
        }
        solve(iroot);
        const IMemoEntry& e = memo_.at(encode(iroot));
        return MemoEntry{e.cost, to_public_action(iroot, e.best)};
    }

    /// Leftover cost: the independence (maximum-entropy) upper bound over
    /// the window contents plus every start value still below the window.
    EntropyValue base_case_cost(const DPState& s) const {
        const Mass cut = params_.alpha * s.M.value;
        EntropyValue total = 0.0;
        for (size_t d = 0; d < s.counts.size(); ++d) {
            std::vector<Mass> leftover;
            for (const auto& [v, c] : s.counts[d])
                for (int r = 0; r < c; ++r) leftover.push_back(v);
            const auto& vals = start_vals_[d];
            for (auto it = vals.begin(); it != std::lower_bound(vals.begin(), vals.end(), cut); ++it)
                leftover.push_back(*it);
            total += entropy_of_multiset(leftover);
        }
        return total;
    }

    /// Successor of the (compressed) AdvanceM action.
    DPState advance_state(const DPState& s) {
        return to_public_state(apply(to_internal(s), make_advance(to_internal(s))));
    }

    /// Split and Match options for a state with M >= tau/alpha present in
    /// some multiset, in canonical order: Split, then Matches ascending in
    /// (z, lexicographic x). Exhaustive and duplicate-free; Match
    /// candidates with an empty S_i window are omitted.
    std::vector<Transition> enumerate_transitions(const DPState& s) {
        const IdState is = to_internal(s);
        std::vector<Transition> out;
        for (const IAction& ia : branch_actions(is)) {
            Transition t;
            t.action = to_public_action(is, ia);
            t.successor = to_public_state(apply(is, ia));
            t.immediate_cost = ia.kind == IKind::Match ? entropy_[static_cast<size_t>(ia.z)] : 0.0;
            out.push_back(std::move(t));
        }
        return out;
    }

    /// Memo lookup for a previously solved state.
    std::optional<MemoEntry> lookup(const DPState& s) {
        const IdState is = to_internal(s);
        auto it = memo_.find(encode(is));
        if (it == memo_.end()) return std::nullopt;
        return MemoEntry{it->second.cost, to_public_action(is, it->second.best)};
    }

    /// The best-action sequence from the initial state down to the base
    /// case. fast_coupling(initial_state()) must have run.
    std::vector<Action> best_actions() {
        IdState cur = to_internal(initial_state());
        std::vector<Action> out;
        while (true) {
            if (is_base(cur)) {
                IAction base;
                base.kind = IKind::Base;
                out.push_back(to_public_action(cur, base));
                return out;
            }
            auto it = memo_.find(encode(cur));
            if (it == memo_.end()) throw std::logic_error("best_actions: state missing from memo");
            const IAction& ia = it->second.best;
            out.push_back(to_public_action(cur, ia));
            cur = apply(cur, ia);
        }
    }

    std::size_t states_visited() const { return memo_.size(); }
    const Params& params() const { return params_; }
    const Mass& base_threshold() const { return threshold_; }

private:
    // ---- value interning --------------------------------------------------
    int intern(const Mass& v) {
        auto it = id_of_.find(v);
        if (it != id_of_.end()) return it->second;
        const int id = static_cast<int>(values_.size());
        values_.push_back(v);
        entropy_.push_back(mec::entropy(v));
        id_of_.emplace(v, id);
        return id;
    }
    int intern_grid(const GridPoint& p) {
        const int id = intern(p.value);
        grid_form_.try_emplace(id, p);
        return id;
    }
    const GridPoint& grid_form(int id) {
        auto it = grid_form_.find(id);
        if (it != grid_form_.end()) return it->second;
        return grid_form_.emplace(id, maximal_form(values_[static_cast<size_t>(id)], params_.grid)).first->second;
    }
    bool id_less(int a, int b) const { return values_[static_cast<size_t>(a)] < values_[static_cast<size_t>(b)]; }

    void id_add(IdCounts& ms, int id, int count = 1) const {
        auto it = std::lower_bound(ms.begin(), ms.end(), id, [this](const auto& e, int x) {
            return id_less(e.first, x);
        });
        if (it != ms.end() && it->first == id) {
            it->second += count;
        } else {
            ms.insert(it, {id, count});
        }
    }
    void id_remove(IdCounts& ms, int id) const {
        auto it = std::lower_bound(ms.begin(), ms.end(), id, [this](const auto& e, int x) {
            return id_less(e.first, x);
        });
        if (it == ms.end() || it->first != id) throw std::logic_error("id_remove: value not present");
        if (--it->second == 0) ms.erase(it);
    }
    bool id_contains(const IdCounts& ms, int id) const {
        auto it = std::lower_bound(ms.begin(), ms.end(), id, [this](const auto& e, int x) {
            return id_less(e.first, x);
        });
        return it != ms.end() && it->first == id;
    }

    static std::string encode(const IdState& s) {
        std::string key;
        key.reserve(8 + 16 * s.s.size());
        auto put = [&key](int v) {
            char buf[sizeof(int)];
            std::memcpy(buf, &v, sizeof(int));
            key.append(buf, sizeof(int));
        };
        put(s.m_id);
        for (const IdCounts& ms : s.s) {
            put(static_cast<int>(ms.size()));
            for (const auto& [id, c] : ms) {
                put(id);
                put(c);
            }
        }
        return key;
    }

    // ---- conversions between public and internal form ----------------------
    IdState to_internal(const DPState& s) {
        IdState out;
        out.m_id = intern_grid(s.M);
        out.s.resize(s.counts.size());
        for (size_t d = 0; d < s.counts.size(); ++d) {
            for (const auto& [v, c] : s.counts[d]) out.s[d].push_back({intern(v), c});
            // public multisets are value-sorted already; id order matches
        }
        return out;
    }
    DPState to_public_state(const IdState& s) {
        DPState out;
        out.M = grid_form(s.m_id);
        out.counts.resize(s.s.size());
        for (size_t d = 0; d < s.s.size(); ++d) {
            for (const auto& [id, c] : s.s[d]) out.counts[d].push_back({values_[static_cast<size_t>(id)], c});
        }
        return out;
    }
    Action to_public_action(const IdState& s, const IAction& ia) {
        Action out;
        switch (ia.kind) {
        case IKind::Base:
            out.kind = Action::Kind::BaseCase;
            break;
        case IKind::Advance:
            out.kind = Action::Kind::AdvanceM;
            out.advance_to = grid_form(ia.advance_to);
            break;
        case IKind::Split:
            out.kind = Action::Kind::Split;
            out.split_index = ia.istar;
            out.split_value = values_[static_cast<size_t>(s.m_id)];
            break;
        case IKind::Match: {
            out.kind = Action::Kind::Match;
            MatchAction ma;
            ma.z = grid_form(ia.z);
            std::vector<GridPoint> xs;
            for (int xid : ia.x) {
                ma.x.push_back(values_[static_cast<size_t>(xid)]);
                xs.push_back(grid_form(xid));
            }
            MatchParts parts = match_split(ma.z, xs, params_.grid);
            ma.a = std::move(parts.a);
            ma.b = std::move(parts.b);
            out.match = std::move(ma);
            break;
        }
        }
        return out;
    }

    // ---- transition machinery ----------------------------------------------
    Mass alpha_m(int m_id) {
        auto it = alpha_m_.find(m_id);
        if (it != alpha_m_.end()) return it->second;
        return alpha_m_.emplace(m_id, params_.alpha * values_[static_cast<size_t>(m_id)]).first->second;
    }

    /// Grid ids of z candidates in [eps*M, M], ascending.
    const std::vector<int>& z_candidates(int m_id) {
        auto it = z_cache_.find(m_id);
        if (it != z_cache_.end()) return it->second;
        std::vector<int> ids;
        for (const GridPoint& p : window_values(grid_form(m_id), params_.grid.epsilon, params_.grid))
            ids.push_back(intern_grid(p));
        return z_cache_.emplace(m_id, std::move(ids)).first->second;
    }

    /// Cached Match pieces for (z, x): ids of a and b, -1 meaning zero.
    std::pair<int, int> match_ids(int z_id, int x_id) {
        const uint64_t key = (static_cast<uint64_t>(static_cast<uint32_t>(z_id)) << 32) |
                             static_cast<uint32_t>(x_id);
        auto it = match_cache_.find(key);
        if (it != match_cache_.end()) return it->second;
        const GridPoint xs[] = {grid_form(x_id)};
        MatchParts parts = match_split(grid_form(z_id), xs, params_.grid);
        std::pair<int, int> out{parts.a[0] ? intern_grid(*parts.a[0]) : -1,
                                parts.b[0] ? intern_grid(*parts.b[0]) : -1};
        return match_cache_.emplace(key, out).first->second;
    }

    int smallest_holder(const IdState& s) const {
        for (size_t d = 0; d < s.s.size(); ++d) {
            if (id_contains(s.s[d], s.m_id)) return static_cast<int>(d);
        }
        return -1;
    }

    /// Compressed advance: the next M where anything can happen.
    IAction make_advance(const IdState& s) {
        int best = -1;
        for (const IdCounts& ms : s.s) {
            if (!ms.empty() && (best < 0 || id_less(best, ms.back().first))) best = ms.back().first;
        }
        if (best < 0) {
            // nothing live: the largest pending start value, if any
            const Mass cut = alpha_m(s.m_id);
            Mass target;
            for (const auto& vals : start_vals_) {
                auto it = std::lower_bound(vals.begin(), vals.end(), cut);
                if (it != vals.begin() && *(it - 1) > target) target = *(it - 1);
            }
            if (!target.is_zero() && target >= threshold_) best = intern(target);
        }
        IAction out;
        out.kind = IKind::Advance;
        out.advance_to = (best >= 0 && values_[static_cast<size_t>(best)] >= threshold_) ? best : base_m_id_;
        return out;
    }

    IdState apply(const IdState& s, const IAction& ia) {
        IdState out;
        switch (ia.kind) {
        case IKind::Base:
            throw std::logic_error("apply: base case has no successor");
        case IKind::Advance: {
            out.m_id = ia.advance_to;
            out.s = s.s;
            const Mass lo = alpha_m(out.m_id);
            const Mass hi = alpha_m(s.m_id);
            for (size_t d = 0; d < out.s.size(); ++d) {
                const auto& vals = start_vals_[d];
                auto first = std::lower_bound(vals.begin(), vals.end(), lo);
                auto last = std::lower_bound(vals.begin(), vals.end(), hi);
                for (auto it = first; it != last; ++it)
                    id_add(out.s[d], start_ids_[d][static_cast<size_t>(it - vals.begin())]);
            }
            break;
        }
        case IKind::Split: {
            out.m_id = s.m_id;
            out.s = s.s;
            auto& ms = out.s[static_cast<size_t>(ia.istar)];
            id_remove(ms, s.m_id);
            id_add(ms, halve(s.m_id), 2);
            break;
        }
        case IKind::Match: {
            out.m_id = s.m_id;
            out.s = s.s;
            for (size_t d = 0; d < out.s.size(); ++d) {
                id_remove(out.s[d], ia.x[d]);
                const auto [a, b] = match_ids(ia.z, ia.x[d]);
                if (a >= 0) id_add(out.s[d], a);
                if (b >= 0) id_add(out.s[d], b);
            }
            break;
        }
        }
        return out;
    }

    int halve(int id) {
        auto it = halve_.find(id);
        if (it != halve_.end()) return it->second;
        const int h = intern(values_[static_cast<size_t>(id)].mul_pow2(-1));
        halve_.emplace(id, h);
        return h;
    }

    /// Split first, then Matches ascending in (z, lexicographic x).
    std::vector<IAction> branch_actions(const IdState& s) {
        const int istar = smallest_holder(s);
        if (istar < 0) throw std::logic_error("branch_actions: M not present in any multiset");
        std::vector<IAction> out;
        {
            IAction split;
            split.kind = IKind::Split;
            split.istar = istar;
            out.push_back(std::move(split));
        }
        const std::vector<int>& zs = z_candidates(s.m_id);
        std::vector<std::vector<int>> cands(s.s.size());
        for (int z : zs) {
            bool feasible = true;
            for (size_t d = 0; d < s.s.size(); ++d) {
                cands[d].clear();
                if (static_cast<int>(d) == istar) {
                    cands[d].push_back(s.m_id);
                    continue;
                }
                for (const auto& [id, c] : s.s[d]) {
                    if (!id_less(id, z)) cands[d].push_back(id); // id >= z; <= M by the window invariant
                }
                if (cands[d].empty()) {
                    feasible = false;
                    break;
                }
            }
            if (!feasible) continue;
            std::vector<size_t> pick(s.s.size(), 0);
            while (true) {
                IAction ma;
                ma.kind = IKind::Match;
                ma.z = z;
                ma.x.reserve(cands.size());
                for (size_t d = 0; d < cands.size(); ++d) ma.x.push_back(cands[d][pick[d]]);
                out.push_back(std::move(ma));
                size_t d = pick.size();
                bool done = false;
                while (d > 0) {
                    --d;
                    if (++pick[d] < cands[d].size()) break;
                    pick[d] = 0;
                    if (d == 0) done = true;
                }
                if (done) break;
            }
        }
        return out;
    }

    /// Admissible lower bound on the cost-to-go. Two ingredients:
    /// every remaining fragment of distribution d is refined into coupling
    /// states, so the cost is at least sum H over d's remaining values; and
    /// values below eps*M_floor can never be matched or split again, so
    /// their entropy lands in the per-distribution leftover sums of every
    /// other distribution as well. Together:
    ///     max_d [ totalH_d - smallH_d ] + sum_d smallH_d.
    double lower_bound(const IdState& s) {
        const Mass cut = alpha_m(s.m_id);
        double best_excess = 0.0;
        double small_sum = 0.0;
        for (size_t d = 0; d < s.s.size(); ++d) {
            double total = 0.0;
            double small = 0.0;
            for (const auto& [id, c] : s.s[d]) {
                const double h = c * entropy_[static_cast<size_t>(id)];
                total += h;
                if (values_[static_cast<size_t>(id)] < unmatchable_cut_) small += h;
            }
            const auto& vals = start_vals_[d];
            const auto idx = static_cast<size_t>(
                std::lower_bound(vals.begin(), vals.end(), cut) - vals.begin());
            total += start_pref_h_[d][idx];
            const Mass pending_small_cut = cut < unmatchable_cut_ ? cut : unmatchable_cut_;
            const auto sidx = static_cast<size_t>(
                std::lower_bound(vals.begin(), vals.end(), pending_small_cut) - vals.begin());
            small += start_pref_h_[d][sidx];
            small_sum += small;
            if (total - small > best_excess) best_excess = total - small;
        }
        return best_excess + small_sum;
    }

    double base_cost_internal(const IdState& s) {
        const Mass cut = alpha_m(s.m_id);
        double total = 0.0;
        for (size_t d = 0; d < s.s.size(); ++d) {
            std::vector<Mass> leftover;
            for (const auto& [id, c] : s.s[d])
                for (int r = 0; r < c; ++r) leftover.push_back(values_[static_cast<size_t>(id)]);
            const auto& vals = start_vals_[d];
            for (auto it = vals.begin(); it != std::lower_bound(vals.begin(), vals.end(), cut); ++it)
                leftover.push_back(*it);
            total += entropy_of_multiset(leftover);
        }
        return total;
    }

    struct Child {
        double bound = 0.0; // imm + admissible lower bound of the subtree
        int canon = -1;
        double imm = 0.0;
    };
    struct Frame {
        std::string key;
        IdState state; // kept so children materialize lazily
        double cap = std::numeric_limits<double>::infinity(); // caller stops caring at this cost
        std::vector<IAction> actions; // canonical order
        std::vector<Child> children;  // sorted by (bound, canon)
        size_t next = 0;
        double best = std::numeric_limits<double>::infinity(); // min over exactly resolved children
        int best_canon = std::numeric_limits<int>::max();
        double skipped_lb = std::numeric_limits<double>::infinity(); // min bound among cap-skipped children
        bool pending = false; // a child frame is being computed
        double pending_imm = 0.0;
        int pending_canon = -1;
        std::string pending_key;
    };

    void insert_memo(std::string key, IMemoEntry entry) {
        memo_.insert_or_assign(std::move(key), std::move(entry));
        if (memo_.size() > params_.budget)
            throw BudgetExceeded("dynamic program exceeded the memoized-state budget");
    }

    bool is_base(const IdState& s) const { return values_[static_cast<size_t>(s.m_id)] < threshold_; }

    /// Per-distribution (total remaining entropy, entropy of unmatchable
    /// values) used by lower_bound and the per-child delta bounds.
    struct BoundTerms {
        std::vector<double> total;
        std::vector<double> small;
        double combine() const {
            double excess = 0.0;
            double small_sum = 0.0;
            for (size_t d = 0; d < total.size(); ++d) {
                small_sum += small[d];
                excess = std::max(excess, total[d] - small[d]);
            }
            return excess + small_sum;
        }
    };

    BoundTerms bound_terms(const IdState& s) {
        const Mass cut = alpha_m(s.m_id);
        BoundTerms t;
        t.total.resize(s.s.size());
        t.small.resize(s.s.size());
        for (size_t d = 0; d < s.s.size(); ++d) {
            double total = 0.0;
            double small = 0.0;
            for (const auto& [id, c] : s.s[d]) {
                const double h = c * entropy_[static_cast<size_t>(id)];
                total += h;
                if (values_[static_cast<size_t>(id)] < unmatchable_cut_) small += h;
            }
            const auto& vals = start_vals_[d];
            const auto idx = static_cast<size_t>(
                std::lower_bound(vals.begin(), vals.end(), cut) - vals.begin());
            total += start_pref_h_[d][idx];
            const Mass pending_small_cut = cut < unmatchable_cut_ ? cut : unmatchable_cut_;
            const auto sidx = static_cast<size_t>(
                std::lower_bound(vals.begin(), vals.end(), pending_small_cut) - vals.begin());
            small += start_pref_h_[d][sidx];
            t.total[d] = total;
            t.small[d] = small;
        }
        return t;
    }

    /// H delta of replacing x by (a, b) in one multiset: (d_total, d_small).
    std::pair<double, double> match_delta(int z_id, int x_id) {
        const auto [a, b] = match_ids(z_id, x_id);
        double dt = -entropy_[static_cast<size_t>(x_id)];
        double ds = 0.0; // x >= z >= unmatchable cut, never small itself
        if (a >= 0) {
            const double h = entropy_[static_cast<size_t>(a)];
            dt += h;
            if (values_[static_cast<size_t>(a)] < unmatchable_cut_) ds += h;
        }
        if (b >= 0) {
            const double h = entropy_[static_cast<size_t>(b)];
            dt += h;
            if (values_[static_cast<size_t>(b)] < unmatchable_cut_) ds += h;
        }
        return {dt, ds};
    }

    /// Opens a frame with children ordered best-bound-first, so a strong
    /// incumbent usually arrives with the first dive and prunes the sorted
    /// tail wholesale. Child bounds come from O(m) entropy deltas; the
    /// successor states materialize only if a child is actually visited.
    void open_frame(IdState s, std::string key, double cap, std::vector<Frame>& stack) {
        check_window_invariant(s);
        Frame f;
        f.key = std::move(key);
        f.cap = cap;
        if (smallest_holder(s) < 0) {
            // single forced transition; built eagerly since the target may
            // already be the base case
            IAction adv = make_advance(s);
            IdState succ = apply(s, adv);
            if (is_base(succ)) {
                insert_memo(std::move(f.key), IMemoEntry{base_cost_internal(succ), adv, true});
                return;
            }
            f.actions.push_back(std::move(adv));
            f.children.push_back(Child{lower_bound(succ), 0, 0.0});
        } else {
            f.actions = branch_actions(s);
            const BoundTerms base = bound_terms(s);
            const double mh = entropy_[static_cast<size_t>(s.m_id)];
            const double half_h = 2.0 * entropy_[static_cast<size_t>(halve(s.m_id))];
            f.children.reserve(f.actions.size());
            std::vector<double> dt(s.s.size());
            for (int canon = 0; canon < static_cast<int>(f.actions.size()); ++canon) {
                const IAction& ia = f.actions[static_cast<size_t>(canon)];
                double bound;
                double imm = 0.0;
                if (ia.kind == IKind::Split) {
                    // M -> two M/2 in distribution istar; smalls unchanged
                    double excess = 0.0;
                    double small_sum = 0.0;
                    for (size_t d = 0; d < base.total.size(); ++d) {
                        small_sum += base.small[d];
                        double td = base.total[d];
                        if (static_cast<int>(d) == ia.istar) td += half_h - mh;
                        excess = std::max(excess, td - base.small[d]);
                    }
                    bound = excess + small_sum;
                } else {
                    imm = entropy_[static_cast<size_t>(ia.z)];
                    double excess = 0.0;
                    double small_sum = 0.0;
                    for (size_t d = 0; d < base.total.size(); ++d) {
                        const auto [dtd, dsd] = match_delta(ia.z, ia.x[d]);
                        small_sum += base.small[d] + dsd;
                        excess = std::max(excess, base.total[d] + dtd - (base.small[d] + dsd));
                    }
                    bound = imm + excess + small_sum;
                }
                f.children.push_back(Child{bound, canon, imm});
            }
        }
        std::sort(f.children.begin(), f.children.end(), [](const Child& a, const Child& b) {
            if (a.bound != b.bound) return a.bound < b.bound;
            return a.canon < b.canon;
        });
        f.state = std::move(s);
        stack.push_back(std::move(f));
    }

    /// Writes the frame's result: the exact minimum when every skipped
    /// branch was provably no better than the chosen one, otherwise the
    /// proven lower bound (a fail-high the caller may re-expand later with
    /// a looser cap).
    void finalize(Frame& f) {
        if (f.skipped_lb < f.best) {
            insert_memo(std::move(f.key), IMemoEntry{f.skipped_lb, IAction{}, false});
            return;
        }
        if (f.best_canon == std::numeric_limits<int>::max())
            throw std::logic_error("solve: state with no transitions");
        insert_memo(std::move(f.key),
                    IMemoEntry{f.best, f.actions[static_cast<size_t>(f.best_canon)], true});
    }

    void solve(const IdState& root) {
        std::string root_key = encode(root);
        if (auto it = memo_.find(root_key); it != memo_.end() && it->second.exact) return;
        std::vector<Frame> stack;
        open_frame(root, std::move(root_key), std::numeric_limits<double>::infinity(), stack);
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.pending) {
                auto it = memo_.find(f.pending_key);
                if (it == memo_.end()) throw std::logic_error("solve: pending child missing from memo");
                if (it->second.exact) {
                    fold(f, f.pending_imm + it->second.cost, f.pending_canon);
                } else {
                    // the child failed high against its cap; it cannot
                    // strictly improve on what that cap protected
                    note_skip(f, f.pending_imm + it->second.cost);
                }
                f.pending = false;
                continue;
            }
            // children are bound-sorted: once one cannot strictly beat the
            // incumbent (or the caller's cap), neither can the rest.
            const double threshold = std::min(f.best, f.cap);
            if (f.next < f.children.size() && f.children[f.next].bound >= threshold) {
                note_skip(f, f.children[f.next].bound);
                f.next = f.children.size();
            }
            if (f.next == f.children.size()) {
                finalize(f);
                stack.pop_back();
                continue;
            }
            Child& c = f.children[f.next];
            ++f.next;
            if (auto it = memo_.find(c.key); it != memo_.end()) {
                if (it->second.exact) {
                    // resolved as a side effect of an earlier sibling's subtree
                    fold(f, c.imm + it->second.cost, c.canon);
                    continue;
                }
                if (c.imm + it->second.cost >= threshold) {
                    note_skip(f, c.imm + it->second.cost);
                    continue;
                }
            }
            f.pending = true;
            f.pending_imm = c.imm;
            f.pending_canon = c.canon;
            f.pending_key = c.key;
            open_frame(std::move(c.succ), std::move(c.key), threshold - c.imm, stack);
        }
    }

    static void fold(Frame& f, double cand, int canon) {
        if (cand < f.best || (cand == f.best && canon < f.best_canon)) {
            f.best = cand;
            f.best_canon = canon;
        }
    }

    /// Records that a child with proven subtree cost >= lb was skipped.
    /// Skips below the current incumbent make the frame's result a bound
    /// instead of an exact value; skips at or above it are harmless.
    static void note_skip(Frame& f, double lb) {
        if (lb < f.skipped_lb) f.skipped_lb = lb;
    }

    void check_window_invariant(const IdState& s) const {
#ifndef NDEBUG
        const Mass& mval = values_[static_cast<size_t>(s.m_id)];
        if (mval < threshold_) return; // terminal states may hold sub-tau residuals
        const Mass lo = params_.alpha * mval;
        for (const IdCounts& ms : s.s) {
            for (const auto& [id, c] : ms) {
                assert(c >= 1);
                const Mass& v = values_[static_cast<size_t>(id)];
                assert(v >= lo && v <= mval);
                assert(is_member(v, params_.grid));
            }
        }
#endif
    }

    Params params_;
    Mass threshold_;
    Mass unmatchable_cut_; // eps * (smallest grid element >= tau/alpha)
    int base_m_id_ = -1;

    // interning tables
    std::map<Mass, int> id_of_;
    std::deque<Mass> values_;
    std::vector<double> entropy_;
    std::unordered_map<int, GridPoint> grid_form_;
    std::unordered_map<int, int> halve_;
    std::unordered_map<int, Mass> alpha_m_;
    std::unordered_map<int, std::vector<int>> z_cache_;
    std::unordered_map<uint64_t, std::pair<int, int>> match_cache_;

    // start fragments per distribution, ascending by value
    std::vector<std::vector<Mass>> start_vals_;
    std::vector<std::vector<int>> start_ids_;
    std::vector<std::vector<double>> start_pref_h_; // prefix sums of H

    std::unordered_map<std::string, IMemoEntry> memo_;
};

} // namespace mec
