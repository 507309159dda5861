#pragma once

/**
 * @file preprocess.hpp
 * @brief Rounding of input distributions onto the grid.
 *
 * Each input state x is split into a chain of grid-valued pieces by repeated
 * floor-to-grid, stopping once the working value drops below tau; what is
 * left is the sub-tau residual. The working value shrinks by a factor of at
 * least eps^2 per step, so a state produces at most ceil(1 + log2(1/tau))
 * on-grid pieces. Fragments keep the origin index of the state they came
 * from, and per origin the pieces sum back to the original mass exactly.
 */

#include "mec/grid.hpp"
#include "mec/model.hpp"

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace mec {

struct Params {
    GridParams grid;
    Mass alpha; ///< window width factor, default eps^3/2
    Mass tau;   ///< residual threshold, default eps^9/n^6
    int m = 0;
    int n = 0; ///< max state count across distributions
    std::size_t budget = 10'000'000; ///< max distinct memoized DP states
    bool alpha_overridden = false;
    bool tau_overridden = false;

    static Params make(const GridParams& grid, int m, int n,
                       std::optional<Mass> tau_override = std::nullopt,
                       std::optional<Mass> alpha_override = std::nullopt,
                       std::size_t budget = 10'000'000) {
        if (m < 1 || n < 1) throw std::invalid_argument("Params: need m >= 1, n >= 1");
        Params out;
        out.grid = grid;
        out.m = m;
        out.n = n;
        out.budget = budget;
        const Mass eps = grid.epsilon;
        out.alpha = alpha_override.value_or((eps * eps * eps).mul_pow2(-1));
        out.alpha_overridden = alpha_override.has_value();
        Mass nn(static_cast<unsigned long long>(n));
        Mass n6 = nn * nn;
        n6 = n6 * n6 * nn * nn; // n^6
        Mass eps9 = eps;
        for (int p = 1; p < 9; ++p) eps9 = eps9 * eps;
        out.tau = tau_override.value_or(eps9 / n6);
        out.tau_overridden = tau_override.has_value();

        // The window invariant needs every match output (>= eps^3*M/2) and
        // split half (M/2) to stay above alpha*M.
        if (out.alpha.is_zero() || out.alpha > (eps * eps * eps).mul_pow2(-1))
            throw std::invalid_argument("Params: alpha must be in (0, eps^3/2]");
        const Mass m0 = floor_to_grid(Mass(1), grid).value;
        if (out.tau.is_zero() || out.tau >= out.alpha * m0)
            throw std::invalid_argument("Params: tau must be in (0, alpha * M0)");
        return out;
    }

    /// Base-case threshold tau/alpha.
    Mass base_threshold() const { return tau / alpha; }
};

struct RoundedState {
    std::vector<GridPoint> parts; // grid elements, descending
    Mass residual;                // < tau, possibly zero
};

/// Iterated floor-to-grid of a single state value; x = sum(parts) + residual
/// exactly, with residual < tau.
inline RoundedState round_state(const Mass& x, const Params& params) {
    if (x.is_zero() || x > Mass(1)) throw std::invalid_argument("round_state: x outside (0,1]");
    RoundedState out;
    Mass rest = x;
    while (rest >= params.tau) {
        GridPoint y = floor_to_grid(rest, params.grid);
        rest = rest - y.value;
        out.parts.push_back(std::move(y));
    }
    out.residual = rest;
    return out;
}

struct PreprocessedInput {
    std::vector<Distribution> original;
    /// Per distribution, fragments sorted descending by value (ties by
    /// origin then insertion order). On-grid fragments have value >= tau;
    /// the rest are sub-tau residuals.
    std::vector<std::vector<Fragment>> fragments;
};

inline PreprocessedInput preprocess(std::span<const Distribution> ps, const Params& params) {
    PreprocessedInput out;
    out.original.assign(ps.begin(), ps.end());
    out.fragments.reserve(ps.size());
    for (const Distribution& p : ps) {
        std::vector<Fragment> frags;
        for (int j = 0; j < p.size(); ++j) {
            RoundedState r = round_state(p.states[static_cast<size_t>(j)], params);
            for (const GridPoint& part : r.parts) frags.push_back(Fragment{part.value, j, true});
            if (!r.residual.is_zero()) frags.push_back(Fragment{r.residual, j, false});
        }
        std::stable_sort(frags.begin(), frags.end(), [](const Fragment& a, const Fragment& b) {
            if (a.value != b.value) return a.value > b.value;
            return a.origin < b.origin;
        });
        out.fragments.push_back(std::move(frags));
    }
    return out;
}

} // namespace mec
