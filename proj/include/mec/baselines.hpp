#pragma once

/// @file baselines.hpp
/// Greedy and independent couplings over raw distributions, plus the trivial
/// entropy bounds max_i H(p_i) <= H(coupling) <= sum_i H(p_i).

#include "mec/model.hpp"
#include "mec/reconstruct.hpp"

#include <span>
#include <stdexcept>
#include <vector>

namespace mec {

struct OutputLimitExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Greedy coupling on whole states (same rule and tie-breaks as the DP's
/// leftover coupler; origins are the state indices).
inline Coupling greedy_coupling(std::span<const Distribution> ps) {
    std::vector<std::vector<Fragment>> pools;
    pools.reserve(ps.size());
    std::vector<int> shape;
    shape.reserve(ps.size());
    for (const Distribution& p : ps) {
        pools.push_back(fragments_of(p));
        shape.push_back(p.size());
    }
    return finalize_coupling(greedy_couple(pools), std::move(shape));
}

/// Product coupling: one state per index tuple with mass prod_i p_i(j_i).
/// Refuses instances whose output would exceed `max_states`.
inline Coupling independent_coupling(std::span<const Distribution> ps, std::size_t max_states = 1'000'000) {
    std::size_t total = 1;
    std::vector<int> shape;
    shape.reserve(ps.size());
    for (const Distribution& p : ps) {
        shape.push_back(p.size());
        if (total > max_states / static_cast<std::size_t>(p.size()))
            throw OutputLimitExceeded("independent_coupling: product state count exceeds the output cap");
        total *= static_cast<std::size_t>(p.size());
    }
    std::vector<CouplingState> states;
    states.reserve(total);
    std::vector<int> idx(ps.size(), 0);
    while (true) {
        Mass mass(1);
        for (size_t d = 0; d < ps.size(); ++d) mass = mass * ps[d].states[static_cast<size_t>(idx[d])];
        states.push_back(CouplingState{mass, idx});
        size_t d = ps.size();
        while (d > 0) {
            --d;
            if (++idx[d] < shape[d]) break;
            idx[d] = 0;
            if (d == 0) return finalize_coupling(std::move(states), std::move(shape));
        }
    }
}

/// (max_i H(p_i), sum_i H(p_i)): every coupling's entropy lies between them.
inline std::pair<EntropyValue, EntropyValue> trivial_bounds(std::span<const Distribution> ps) {
    EntropyValue lower = 0.0;
    EntropyValue upper = 0.0;
    for (const Distribution& p : ps) {
        const EntropyValue h = entropy_of_multiset(p.states);
        lower = std::max(lower, h);
        upper += h;
    }
    return {lower, upper};
}

} // namespace mec
