#pragma once

/**
 * @file grid.hpp
 * @brief The rounding grid of allowed state values and its exact arithmetic.
 *
 * For epsilon = 2^-k the grid is
 *
 *     { j * 2^-(i+k)  :  i integer,  1 <= j <= 2/eps^2 - 1 }  intersected with (0,1).
 *
 * The grid is infinite toward zero and is never materialized; every query is
 * a scale-local computation on exact rationals. A grid element's canonical
 * representation is its maximal form: the (i, j) pair with the largest i,
 * which forces the coefficient j into [1/eps^2, 2/eps^2 - 1]. Maximal forms
 * are unique, which is what makes them usable as map keys and what the
 * match_split construction relies on.
 *
 * Membership test used throughout: a positive rational p/q in lowest terms
 * is on the grid iff q is a power of two and p (odd by reducedness) has bit
 * length at most 2k+1, i.e. p <= j_max.
 */

#include "mec/mass.hpp"

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace mec {

/// Raised when a construction's stated inequality fails post-hoc
/// (typically: epsilon too large for the guarantee).
struct GuaranteeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GridParams {
    int k = 2;    ///< epsilon = 2^-k, k >= 2
    Mass epsilon;
    BigInt j_min; ///< 4^k, smallest maximal-form coefficient
    BigInt j_max; ///< 2*4^k - 1

    static GridParams from_exponent(int k) {
        if (k < 2) throw std::invalid_argument("GridParams: epsilon must be a power of two below 1/2");
        GridParams g;
        g.k = k;
        g.epsilon = Mass::pow2(-k);
        g.j_min = BigInt(1) << static_cast<unsigned>(2 * k);
        g.j_max = (BigInt(1) << static_cast<unsigned>(2 * k + 1)) - 1;
        return g;
    }

    /// epsilon must be exactly a power of two in (0, 1/2).
    static GridParams from_epsilon(const Mass& epsilon) {
        const BigInt num = epsilon.numerator();
        const BigInt den = epsilon.denominator();
        const bool den_pow2 = den > 0 && BigInt(den & (den - 1)) == 0;
        if (num != 1 || !den_pow2 || den < 4)
            throw std::invalid_argument("GridParams: epsilon must be a power of two below 1/2");
        return from_exponent(static_cast<int>(boost::multiprecision::msb(den)));
    }
};

/// A grid element held in maximal form; value == j * 2^-(i+k).
struct GridPoint {
    long long i = 0;
    BigInt j;
    Mass value;

    bool operator==(const GridPoint& o) const { return value == o.value; }
    std::strong_ordering operator<=>(const GridPoint& o) const { return value <=> o.value; }
};

namespace detail {

/// The unique t with x * 2^t in [4^k, 2*4^k), for 0 < x < 1.
inline long long coefficient_scale(const Mass& x, const GridParams& g) {
    const BigInt p = x.numerator();
    const BigInt q = x.denominator();
    long long t = 2 * g.k + static_cast<long long>(bit_length(q)) - static_cast<long long>(bit_length(p));
    auto coeff_num = [&](long long tt) { return tt >= 0 ? p << static_cast<unsigned>(tt) : p; };
    // t >= 0 here because x < 1 implies bit_length(q) >= bit_length(p).
    while (coeff_num(t) < g.j_min * q) ++t;
    while (coeff_num(t) > g.j_max * q) --t;
    return t;
}

} // namespace detail

inline bool is_member(const Mass& x, const GridParams& g) {
    if (x.is_zero() || x >= Mass(1)) throw std::invalid_argument("is_member: value outside (0,1)");
    const BigInt den = x.denominator();
    if (BigInt(den & (den - 1)) != 0) return false; // not dyadic
    return x.numerator() <= g.j_max;                // numerator is odd in lowest terms
}

inline GridPoint maximal_form(const Mass& x, const GridParams& g) {
    if (!is_member(x, g)) throw std::invalid_argument("maximal_form: not a grid element");
    const BigInt p = x.numerator(); // odd
    const unsigned shift = static_cast<unsigned>(2 * g.k + 1 - detail::bit_length(p));
    GridPoint out;
    out.j = p << shift;
    // value = j * 2^-(i+k) = p / q  =>  i = shift + log2(q) - k
    out.i = static_cast<long long>(shift) + static_cast<long long>(boost::multiprecision::msb(x.denominator())) - g.k;
    out.value = x;
    return out;
}

/// Largest grid element <= x; for x >= 1, the largest grid element below 1.
inline GridPoint floor_to_grid(const Mass& x, const GridParams& g) {
    if (x.is_zero()) throw std::invalid_argument("floor_to_grid: requires x > 0");
    if (x >= Mass(1)) {
        return maximal_form(Mass(g.j_max, BigInt(1) << static_cast<unsigned>(2 * g.k + 1)), g);
    }
    const long long t = detail::coefficient_scale(x, g);
    const BigInt j = x.mul_pow2(t).floor(); // in [4^k, 2*4^k)
    return maximal_form(Mass(j, 1).mul_pow2(-t), g);
}

/// Largest grid element strictly below M. Always exists: the grid is
/// unbounded toward 0, and each step shrinks by at most a 1 - eps^2 factor.
inline GridPoint predecessor(const GridPoint& M, const GridParams& g) {
    if (M.j > g.j_min) {
        const long long t = M.i + g.k;
        return maximal_form(Mass(M.j - 1, 1).mul_pow2(-t), g);
    }
    // j == 4^k: the next value down lives one scale finer with j = j_max.
    GridPoint out;
    out.i = M.i + 1;
    out.j = g.j_max;
    out.value = Mass(g.j_max, 1).mul_pow2(-(out.i + g.k));
    return out;
}

/// Smallest grid element strictly above M (none if M is the top element).
inline std::optional<GridPoint> successor(const GridPoint& M, const GridParams& g) {
    if (M.j < g.j_max) {
        const long long t = M.i + g.k;
        return maximal_form(Mass(M.j + 1, 1).mul_pow2(-t), g);
    }
    if (M.i == g.k + 1) return std::nullopt; // already the largest element below 1
    GridPoint out;
    out.i = M.i - 1;
    out.j = g.j_min;
    out.value = Mass(g.j_min, 1).mul_pow2(-(out.i + g.k));
    return out;
}

/// All grid elements in [alpha*M, M], ascending. 0 < alpha <= 1.
inline std::vector<GridPoint> window_values(const GridPoint& M, const Mass& alpha, const GridParams& g) {
    if (alpha.is_zero() || alpha > Mass(1)) throw std::invalid_argument("window_values: alpha outside (0,1]");
    const Mass low = alpha * M.value;
    std::vector<GridPoint> out;
    GridPoint cur = M;
    while (cur.value >= low) {
        out.push_back(cur);
        cur = predecessor(cur, g);
    }
    std::reverse(out.begin(), out.end());
    return out;
}

/// Output of match_split: per input state, the two on-grid remainder pieces
/// (nullopt meaning exactly zero) with x_k = z + a_k + b_k.
struct MatchParts {
    std::vector<std::optional<GridPoint>> a;
    std::vector<std::optional<GridPoint>> b;
};

/**
 * Splits each x_k into z plus two pieces that stay on the grid.
 *
 * Requires eps*M <= z <= min_k x_k with M = max_k x_k, all on the grid.
 * Guarantees, exactly: a_k, b_k are zero or grid elements, x_k = z + a_k + b_k,
 * every nonzero piece is >= eps^3*M/2, and a_k <= eps*z.
 *
 * Construction: with maximal forms z = (i, K) and x_k = (j, L), equal scales
 * give a_k = 0, b_k = x_k - z; otherwise b_k is the largest multiple of
 * 2^-(j+k) not exceeding x_k - z and a_k is the remainder, which is an exact
 * multiple of 2^-(i+k).
 */
inline MatchParts match_split(const GridPoint& z, std::span<const GridPoint> xs, const GridParams& g) {
    if (xs.empty()) throw std::invalid_argument("match_split: no states");
    Mass max_x = xs[0].value;
    for (const GridPoint& x : xs) {
        if (x.value > max_x) max_x = x.value;
        if (z.value > x.value) throw std::invalid_argument("match_split: z exceeds a state");
    }
    if (z.value < g.epsilon * max_x) throw std::invalid_argument("match_split: z below eps*M");

    MatchParts out;
    out.a.reserve(xs.size());
    out.b.reserve(xs.size());
    for (const GridPoint& x : xs) {
        if (z.i == x.i) {
            out.a.push_back(std::nullopt);
            const Mass diff = x.value - z.value;
            out.b.push_back(diff.is_zero() ? std::nullopt : std::optional(maximal_form(diff, g)));
            continue;
        }
        // z <= x forces i > j for distinct scales.
        if (z.i < x.i) throw std::logic_error("match_split: scale ordering violated");
        const Mass diff = x.value - z.value;
        const BigInt b_coeff = diff.mul_pow2(x.i + g.k).floor();
        Mass b_val = Mass(b_coeff, 1).mul_pow2(-(x.i + g.k));
        const Mass a_val = diff - b_val;
        out.b.push_back(b_coeff.is_zero() ? std::nullopt : std::optional(maximal_form(b_val, g)));
        out.a.push_back(a_val.is_zero() ? std::nullopt : std::optional(maximal_form(a_val, g)));
    }
    return out;
}

/**
 * Picks z on the grid with 1.5*eps*q <= q - z <= 2*eps*z, by writing
 * q = 2^-i * eps * L with L in [1/eps^2, 2/eps^2) and flooring L - 1.5*eps*L.
 * The inequalities are re-checked exactly and a GuaranteeError is raised if
 * they fail, which signals that epsilon is too large for the bound.
 */
inline GridPoint choose_z(const Mass& q, const GridParams& g) {
    if (q.is_zero() || q >= Mass(1)) throw std::invalid_argument("choose_z: q outside (0,1)");
    const long long t = detail::coefficient_scale(q, g);
    const Mass coeff = q.mul_pow2(t); // L in [4^k, 2*4^k)
    // 1 - 1.5*eps = (2^(k+1) - 3) / 2^(k+1)
    const Mass keep(BigInt((BigInt(1) << static_cast<unsigned>(g.k + 1)) - 3),
                    BigInt(1) << static_cast<unsigned>(g.k + 1));
    const BigInt zj = (coeff * keep).floor();
    const GridPoint z = maximal_form(Mass(zj, 1).mul_pow2(-t), g);
    const Mass gap = q - z.value;
    const Mass lo = Mass(3, 1) * q.mul_pow2(-(g.k + 1)); // 1.5*eps*q
    const Mass hi = z.value.mul_pow2(1 - g.k);           // 2*eps*z
    if (gap < lo || gap > hi)
        throw GuaranteeError("choose_z: 1.5*eps*q <= q-z <= 2*eps*z failed (epsilon too large)");
    return z;
}

} // namespace mec
