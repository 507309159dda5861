#pragma once

/// @file theorem_params.hpp
/// Derivation of the internal accuracy parameter from a requested accuracy:
/// epsilon' is the largest power of two at most
/// epsilon / (3726 * m * 2^(3m) * log2(1/epsilon)), which keeps the summed
/// component errors below epsilon and sits within a factor two of the
/// divisor bound, i.e. epsilon' >= epsilon / (7452 * m * 2^(3m) * log2(1/epsilon)).

#include "mec/mass.hpp"

#include <cmath>
#include <stdexcept>

namespace mec {

struct ResolvedParams {
    Mass requested_epsilon;
    int m = 2;
    Mass epsilon_prime; ///< power of two
    bool theorem_mode = true;
};

inline ResolvedParams derive_epsilon_prime(const Mass& epsilon, int m) {
    if (epsilon.is_zero() || epsilon >= Mass(1, 2))
        throw std::invalid_argument("derive_epsilon_prime: epsilon must be in (0, 1/2)");
    if (m < 2) throw std::invalid_argument("derive_epsilon_prime: m must be >= 2");

    const BigInt c = BigInt(3726) * m * (BigInt(1) << static_cast<unsigned>(3 * m));
    // log2(1/epsilon) > 1; well conditioned via exponent + mantissa split.
    const long double log_inv = detail::log2_positive_ratio(epsilon.denominator(), epsilon.numerator());
    const long double bound = detail::positive_ratio_to_long_double(epsilon.numerator(), epsilon.denominator()) /
                              (c.convert_to<long double>() * log_inv);

    long long e = static_cast<long long>(std::floor(std::log2(bound)));
    while (std::ldexp(1.0L, static_cast<int>(e)) > bound) --e;
    while (std::ldexp(1.0L, static_cast<int>(e + 1)) <= bound) ++e;

    ResolvedParams out;
    out.requested_epsilon = epsilon;
    out.m = m;
    out.epsilon_prime = Mass::pow2(e);
    out.theorem_mode = true;
    // epsilon' <= bound < 1/(2^(3m) * 4m) always holds since 3726 > 4;
    // checked exactly because the windows above were evaluated in floating point.
    const Mass ceiling(1, BigInt(4 * m) << static_cast<unsigned>(3 * m));
    if (out.epsilon_prime > ceiling)
        throw std::logic_error("derive_epsilon_prime: derived value above the theorem ceiling");
    return out;
}

} // namespace mec
