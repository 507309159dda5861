#pragma once

/**
 * @file mass.hpp
 * @brief Exact non-negative rational masses and binary64 entropy evaluation.
 *
 * All probability bookkeeping in this library is exact: a Mass is a
 * non-negative rational kept in lowest terms, backed by arbitrary-precision
 * integers. Subtraction that would go negative throws instead of wrapping,
 * so conservation bugs surface at the point of the mistake.
 *
 * Entropy is the one place floating point enters. entropy() evaluates
 * H(x) = x*log2(1/x) in binary64 with relative error <= 2^-50 of the true
 * value (internally long double, with the ratio x converted through a
 * 96-bit scaled quotient and the log taken on the well-conditioned side:
 * log1p for x > 1/2, exponent-plus-mantissa otherwise). Multiset entropy
 * uses compensated summation over canonically sorted inputs, so equal
 * multisets always produce bit-identical sums.
 */

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mec {

using BigInt = boost::multiprecision::cpp_int;
using BigRational = boost::multiprecision::cpp_rational;

/// Entropy in bits (log base 2).
using EntropyValue = double;

class Mass;

namespace detail {

inline std::size_t bit_length(const BigInt& v) {
    return v.is_zero() ? 0 : static_cast<std::size_t>(boost::multiprecision::msb(v)) + 1;
}

/// floor(a * 2^(bits - e) / b) for positive a, b; e may be any sign.
inline BigInt scaled_quotient(const BigInt& a, const BigInt& b, long long e, int bits) {
    if (e <= bits) return (a << static_cast<unsigned>(bits - e)) / b;
    return a / (b << static_cast<unsigned>(e - bits));
}

/// a/b as long double, relative error ~2^-63. a, b > 0.
inline long double positive_ratio_to_long_double(const BigInt& a, const BigInt& b) {
    constexpr int kBits = 96;
    const long long e = static_cast<long long>(bit_length(a)) - static_cast<long long>(bit_length(b));
    const BigInt q = scaled_quotient(a, b, e, kBits);
    return std::ldexp(q.convert_to<long double>(), static_cast<int>(e - kBits));
}

/// log2(a/b) for a >= 2b > 0. The result is >= 1, so splitting into the
/// bit-length exponent plus a mantissa log keeps the relative error ~2^-60.
inline long double log2_positive_ratio(const BigInt& a, const BigInt& b) {
    constexpr int kBits = 96;
    const long long e = static_cast<long long>(bit_length(a)) - static_cast<long long>(bit_length(b));
    const BigInt q = scaled_quotient(a, b, e, kBits);
    const long double mant = std::ldexp(q.convert_to<long double>(), -kBits); // in (1/2, 2)
    return static_cast<long double>(e) + std::log2(mant);
}

} // namespace detail

/// Exact non-negative rational, always in lowest terms.
class Mass {
public:
    Mass() = default;
    Mass(unsigned long long n) : v_(n) {} // NOLINT(google-explicit-constructor)

    Mass(const BigInt& num, const BigInt& den) {
        if (den <= 0) throw std::invalid_argument("Mass: denominator must be positive");
        if (num < 0) throw std::invalid_argument("Mass: negative mass");
        v_ = BigRational(num, den);
    }

    /// Parses "p/q", a decimal integer, or a finite decimal like "0.15".
    /// Signs, exponents and binary floats are rejected.
    static Mass parse(std::string_view text) {
        auto all_digits = [](std::string_view s) {
            return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
        };
        auto fail = [&] { throw std::invalid_argument("Mass: cannot parse \"" + std::string(text) + "\""); };
        if (auto slash = text.find('/'); slash != std::string_view::npos) {
            std::string_view num = text.substr(0, slash);
            std::string_view den = text.substr(slash + 1);
            if (!all_digits(num) || !all_digits(den)) fail();
            BigInt p{std::string(num)};
            BigInt q{std::string(den)};
            if (q.is_zero()) fail();
            return Mass(p, q);
        }
        if (auto dot = text.find('.'); dot != std::string_view::npos) {
            std::string_view ip = text.substr(0, dot);
            std::string_view fp = text.substr(dot + 1);
            if (!all_digits(fp) || (!ip.empty() && !all_digits(ip))) fail();
            BigInt scale = boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(fp.size()));
            BigInt num = (ip.empty() ? BigInt(0) : BigInt(std::string(ip))) * scale + BigInt(std::string(fp));
            return Mass(num, scale);
        }
        if (!all_digits(text)) fail();
        return Mass(BigInt(std::string(text)), 1);
    }

    BigInt numerator() const { return boost::multiprecision::numerator(v_); }
    BigInt denominator() const { return boost::multiprecision::denominator(v_); }
    const BigRational& rational() const { return v_; }

    bool is_zero() const { return v_.is_zero(); }

    Mass operator+(const Mass& o) const { return Mass(v_ + o.v_); }
    Mass operator-(const Mass& o) const {
        if (o.v_ > v_) throw std::domain_error("Mass: subtraction went negative");
        return Mass(v_ - o.v_);
    }
    Mass operator*(const Mass& o) const { return Mass(v_ * o.v_); }
    Mass operator/(const Mass& o) const {
        if (o.v_.is_zero()) throw std::domain_error("Mass: division by zero");
        return Mass(v_ / o.v_);
    }
    Mass& operator+=(const Mass& o) { v_ += o.v_; return *this; }
    Mass& operator-=(const Mass& o) { *this = *this - o; return *this; }

    /// Exact scaling by 2^e, e of either sign.
    Mass mul_pow2(long long e) const {
        if (e >= 0) return Mass(v_ * BigRational(BigInt(1) << static_cast<unsigned>(e)));
        return Mass(v_ / BigRational(BigInt(1) << static_cast<unsigned>(-e)));
    }

    static Mass pow2(long long e) { return Mass(BigRational(1)).mul_pow2(e); }

    BigInt floor() const { return numerator() / denominator(); }

    bool operator==(const Mass& o) const { return v_ == o.v_; }
    std::strong_ordering operator<=>(const Mass& o) const {
        if (v_ < o.v_) return std::strong_ordering::less;
        if (v_ == o.v_) return std::strong_ordering::equal;
        return std::strong_ordering::greater;
    }

    std::string to_string() const {
        std::string s = numerator().str();
        if (denominator() != 1) s += "/" + denominator().str();
        return s;
    }

    double to_double() const {
        if (v_.is_zero()) return 0.0;
        return static_cast<double>(detail::positive_ratio_to_long_double(numerator(), denominator()));
    }

private:
    explicit Mass(BigRational v) : v_(std::move(v)) {}
    BigRational v_; // invariant: >= 0, lowest terms (maintained by cpp_rational)
};

/// H(x) = x*log2(1/x) for x in [0, 1], with H(0) = H(1) = 0.
/// Relative error <= 2^-50 of the true value.
inline EntropyValue entropy(const Mass& x) {
    static const Mass one(1);
    if (x > one) throw std::domain_error("entropy: mass exceeds 1");
    if (x.is_zero() || x == one) return 0.0;
    const BigInt p = x.numerator();
    const BigInt q = x.denominator();
    long double log_inv; // log2(1/x) > 0
    if (2 * p > q) {
        // x > 1/2: 1/x = 1 + (q-p)/p with a small second term; log1p avoids
        // the cancellation a log(q)-log(p) difference would suffer.
        const long double d = detail::positive_ratio_to_long_double(q - p, p);
        log_inv = std::log1p(d) / std::numbers::ln2_v<long double>;
    } else {
        log_inv = detail::log2_positive_ratio(q, p);
    }
    const long double xv = detail::positive_ratio_to_long_double(p, q);
    return static_cast<double>(xv * log_inv);
}

/// Sum of per-element entropies. Elements are sorted (exact rational order)
/// before a Neumaier compensated sum, so the result is independent of the
/// caller's ordering.
inline EntropyValue entropy_of_multiset(std::span<const Mass> xs) {
    std::vector<const Mass*> order;
    order.reserve(xs.size());
    for (const Mass& x : xs) order.push_back(&x);
    std::sort(order.begin(), order.end(), [](const Mass* a, const Mass* b) { return *a < *b; });
    double sum = 0.0;
    double comp = 0.0;
    for (const Mass* x : order) {
        const double term = entropy(*x);
        const double next = sum + term;
        if (std::abs(sum) >= std::abs(term)) {
            comp += (sum - next) + term;
        } else {
            comp += (term - next) + sum;
        }
        sum = next;
    }
    return sum + comp;
}

inline EntropyValue entropy_of_multiset(const std::vector<Mass>& xs) {
    return entropy_of_multiset(std::span<const Mass>(xs));
}

} // namespace mec
