#pragma once

#include <compare>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>

namespace cpmcqa {

// Exact fraction with a positive denominator. Frequencies, nonconformity
// scores, p-values and significance levels all live on small integer grids
// (k/P, k/(n+1), decimal fractions), so every ordering decision is made in
// integer arithmetic. Doubles only appear when a value is exported.
//
// Magnitude contract: |num| and den stay <= 1e9, so cross products fit in
// int64 with room to spare.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  constexpr Rational() = default;
  constexpr Rational(std::int64_t numerator, std::int64_t denominator)
      : num(numerator), den(denominator) {}

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  Rational reduced() const {
    const std::int64_t g = std::gcd(num, den);
    if (g == 0) return {0, 1};
    return {num / g, den / g};
  }

  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }

  friend constexpr bool operator==(const Rational& a, const Rational& b) {
    return a.num * b.den == b.num * a.den;
  }
  friend constexpr std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
    const std::int64_t lhs = a.num * b.den;
    const std::int64_t rhs = b.num * a.den;
    if (lhs < rhs) return std::strong_ordering::less;
    if (lhs > rhs) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
  }
};

constexpr Rational one_minus(const Rational& r) { return {r.den - r.num, r.den}; }

inline std::ostream& operator<<(std::ostream& os, const Rational& r) { return os << r.str(); }

}  // namespace cpmcqa
