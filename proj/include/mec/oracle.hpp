#pragma once

/**
 * @file oracle.hpp
 * @brief Exact minimum-entropy coupling at tiny sizes by exhaustive peeling.
 *
 * Entropy is concave, so its minimum over the coupling polytope is attained
 * at an extreme point. Every extreme point has forest support, and a forest
 * admits a leaf-first peel order in which each assignment equals the running
 * minimum of its row/column remainders. The recursion below therefore
 * enumerates every vertex: at each step pick any live index tuple, assign
 * the minimum of the remaining masses, drop exhausted coordinates, and
 * recurse over all choices. Orderings that reproduce the same partial
 * assignment are pruned through a visited set; complete couplings are
 * deduplicated before the entropy comparison.
 *
 * For m = 2 this provably covers the whole vertex set. For m = 3 the same
 * recursion runs but is labeled best-found, not exact.
 */

#include "mec/model.hpp"

#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mec {

struct CapExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OracleResult {
    EntropyValue opt_entropy = 0.0;
    Coupling opt_coupling;
    long long vertices_enumerated = 0; ///< distinct complete couplings seen
};

namespace detail {

struct PeelSearch {
    long long cap = 0;
    long long nodes = 0;
    std::set<std::string> visited;
    std::set<std::string> complete;
    bool have_best = false;
    EntropyValue best_entropy = 0.0;
    std::vector<CouplingState> best_states;

    static std::string encode(const std::vector<std::vector<Mass>>& rem,
                              const std::vector<CouplingState>& partial) {
        std::string key;
        for (const auto& dist : rem) {
            for (const Mass& v : dist) {
                key += v.to_string();
                key += ',';
            }
            key += '|';
        }
        key += '#';
        for (const CouplingState& s : partial) {
            key += s.mass.to_string();
            for (int o : s.origins) {
                key += ':';
                key += std::to_string(o);
            }
            key += ';';
        }
        return key;
    }

    void run(std::vector<std::vector<Mass>>& rem, std::vector<CouplingState>& partial) {
        if (++nodes > cap) throw CapExceeded("oracle: recursion node cap exceeded");
        if (!visited.insert(encode(rem, partial)).second) return;

        std::vector<std::vector<int>> live(rem.size());
        bool any_live = false;
        for (size_t d = 0; d < rem.size(); ++d) {
            for (size_t j = 0; j < rem[d].size(); ++j) {
                if (!rem[d][j].is_zero()) live[d].push_back(static_cast<int>(j));
            }
            any_live = any_live || !live[d].empty();
        }
        if (!any_live) {
            if (!complete.insert(encode(rem, partial)).second) return;
            std::vector<Mass> masses;
            masses.reserve(partial.size());
            for (const CouplingState& s : partial) masses.push_back(s.mass);
            const EntropyValue h = entropy_of_multiset(masses);
            if (!have_best || h < best_entropy) {
                have_best = true;
                best_entropy = h;
                best_states = partial;
            }
            return;
        }
        for (const auto& l : live) {
            // Equal totals make a half-exhausted configuration impossible.
            if (l.empty()) throw std::logic_error("oracle: mass imbalance during peel");
        }

        std::vector<size_t> pick(rem.size(), 0);
        while (true) {
            std::vector<int> tuple(rem.size());
            for (size_t d = 0; d < rem.size(); ++d) tuple[d] = live[d][pick[d]];
            Mass t = rem[0][static_cast<size_t>(tuple[0])];
            for (size_t d = 1; d < rem.size(); ++d) {
                const Mass& r = rem[d][static_cast<size_t>(tuple[d])];
                if (r < t) t = r;
            }
            for (size_t d = 0; d < rem.size(); ++d)
                rem[d][static_cast<size_t>(tuple[d])] -= t;
            partial.push_back(CouplingState{t, tuple});
            run(rem, partial);
            partial.pop_back();
            for (size_t d = 0; d < rem.size(); ++d)
                rem[d][static_cast<size_t>(tuple[d])] += t;

            size_t d = rem.size();
            while (d > 0) {
                --d;
                if (++pick[d] < live[d].size()) break;
                pick[d] = 0;
                if (d == 0) return;
            }
        }
    }
};

inline OracleResult peel_exhaustive(std::span<const Distribution> ps, long long cap) {
    PeelSearch search;
    search.cap = cap;
    std::vector<std::vector<Mass>> rem;
    std::vector<int> shape;
    for (const Distribution& p : ps) {
        rem.push_back(p.states);
        shape.push_back(p.size());
    }
    std::vector<CouplingState> partial;
    search.run(rem, partial);
    if (!search.have_best) throw std::logic_error("oracle: no coupling found");
    OracleResult out;
    out.opt_entropy = search.best_entropy;
    out.opt_coupling = finalize_coupling(std::move(search.best_states), std::move(shape));
    out.vertices_enumerated = static_cast<long long>(search.complete.size());
    return out;
}

} // namespace detail

/// Exact minimum-entropy coupling for two distributions with at most five
/// states each. Throws CapExceeded when the peel recursion outgrows `cap`.
inline OracleResult exact_m2(const Distribution& p1, const Distribution& p2, long long cap = 5'000'000) {
    if (p1.size() > 5 || p2.size() > 5)
        throw std::invalid_argument("exact_m2: needs n1, n2 <= 5");
    const Distribution ps[] = {p1, p2};
    return detail::peel_exhaustive(ps, cap);
}

/// Same peel recursion over m-tuples. Best-found baseline for m = 3 (vertex
/// coverage is only established for m = 2); agrees with exact_m2 at m = 2.
inline OracleResult exhaustive_mway(std::span<const Distribution> ps, long long cap = 5'000'000) {
    if (ps.size() < 2 || ps.size() > 3)
        throw std::invalid_argument("exhaustive_mway: needs 2 <= m <= 3");
    for (const Distribution& p : ps) {
        if (p.size() > 3) throw std::invalid_argument("exhaustive_mway: needs all n_i <= 3");
    }
    return detail::peel_exhaustive(ps, cap);
}

} // namespace mec
