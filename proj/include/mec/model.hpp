#pragma once

/**
 * @file model.hpp
 * @brief Distributions, provenance-carrying fragments, couplings, and
 *        bit-exact coupling validation.
 *
 * A Coupling is stored sparsely as a list of (mass, origin tuple) states;
 * the dense m-dimensional table is never built. Validation recomputes every
 * marginal as an exact rational and reports discrepancies exactly, so a pass
 * means the marginals match bit for bit.
 */

#include "mec/mass.hpp"

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mec {

struct Distribution {
    std::vector<Mass> states; // all > 0, summing to exactly 1

    static Distribution from_masses(std::vector<Mass> states) {
        if (states.empty()) throw std::invalid_argument("Distribution: no states");
        Mass total;
        for (const Mass& s : states) {
            if (s.is_zero()) throw std::invalid_argument("Distribution: zero-mass state");
            total += s;
        }
        if (total != Mass(1)) throw std::invalid_argument("Distribution: states must sum to exactly 1");
        return Distribution{std::move(states)};
    }

    int size() const { return static_cast<int>(states.size()); }
};

/// A piece of an original distribution state. Created by preprocessing and
/// further divided by DP actions; `origin` is the index of the state it
/// descends from, which is all the reconstruction ever needs.
struct Fragment {
    Mass value;
    int origin = 0;
    bool on_grid = false;
};

inline std::vector<Fragment> fragments_of(const Distribution& p) {
    std::vector<Fragment> out;
    out.reserve(p.states.size());
    for (int idx = 0; idx < p.size(); ++idx) out.push_back(Fragment{p.states[idx], idx, false});
    return out;
}

struct CouplingState {
    Mass mass;                // > 0
    std::vector<int> origins; // one original-state index per distribution
};

struct Coupling {
    std::vector<CouplingState> states; // sorted lexicographically by origins
    int m = 0;
    std::vector<int> source_shape; // per-distribution state counts
};

/// Aggregates duplicate origin tuples and sorts lexicographically, producing
/// the canonical byte-reproducible form.
inline Coupling finalize_coupling(std::vector<CouplingState> raw, std::vector<int> source_shape) {
    const int m = static_cast<int>(source_shape.size());
    std::map<std::vector<int>, Mass> agg;
    for (CouplingState& s : raw) {
        if (s.mass.is_zero()) continue;
        if (static_cast<int>(s.origins.size()) != m)
            throw std::invalid_argument("finalize_coupling: origin tuple arity mismatch");
        agg[std::move(s.origins)] += s.mass;
    }
    Coupling out;
    out.m = m;
    out.source_shape = std::move(source_shape);
    out.states.reserve(agg.size());
    for (auto& [origins, mass] : agg) out.states.push_back(CouplingState{mass, origins});
    return out;
}

struct MarginalMismatch {
    int distribution = 0;
    int state = 0;
    Mass expected;
    Mass actual;

    /// |expected - actual| as an exact rational.
    Mass discrepancy() const { return expected >= actual ? expected - actual : actual - expected; }
};

struct ValidationReport {
    std::vector<std::string> structural_errors;
    std::vector<MarginalMismatch> mismatches;

    bool structural_ok() const { return structural_errors.empty(); }
    bool pass() const { return structural_errors.empty() && mismatches.empty(); }
};

/// Checks that every marginal of `c` equals the corresponding input
/// distribution exactly. Structural defects (arity or index range errors,
/// nonpositive masses) are reported separately from marginal mismatches.
inline ValidationReport validate_coupling(const Coupling& c, std::span<const Distribution> ps) {
    ValidationReport report;
    const int m = static_cast<int>(ps.size());
    if (c.m != m) {
        report.structural_errors.push_back("coupling has m=" + std::to_string(c.m) +
                                           " but " + std::to_string(m) + " distributions given");
        return report;
    }
    for (const CouplingState& s : c.states) {
        if (s.mass.is_zero())
            report.structural_errors.push_back("coupling state with zero mass");
        if (static_cast<int>(s.origins.size()) != m) {
            report.structural_errors.push_back("origin tuple of wrong arity");
            continue;
        }
        for (int d = 0; d < m; ++d) {
            if (s.origins[d] < 0 || s.origins[d] >= ps[d].size())
                report.structural_errors.push_back("origin index out of range for distribution " +
                                                   std::to_string(d));
        }
    }
    if (!report.structural_ok()) return report;

    for (int d = 0; d < m; ++d) {
        std::vector<Mass> marginal(ps[d].states.size());
        for (const CouplingState& s : c.states) marginal[static_cast<size_t>(s.origins[d])] += s.mass;
        for (int j = 0; j < ps[d].size(); ++j) {
            if (marginal[static_cast<size_t>(j)] != ps[d].states[static_cast<size_t>(j)])
                report.mismatches.push_back(
                    MarginalMismatch{d, j, ps[d].states[static_cast<size_t>(j)], marginal[static_cast<size_t>(j)]});
        }
    }
    return report;
}

/// Entropy of the coupling after aggregating states with identical origin
/// tuples (aggregation never increases entropy).
inline EntropyValue coupling_entropy(const Coupling& c) {
    std::map<std::vector<int>, Mass> agg;
    for (const CouplingState& s : c.states) agg[s.origins] += s.mass;
    std::vector<Mass> masses;
    masses.reserve(agg.size());
    for (auto& [origins, mass] : agg) masses.push_back(mass);
    return entropy_of_multiset(masses);
}

} // namespace mec
