#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "rtbprice/error.hpp"

namespace rtbprice {

// Fixed-point nonnegative-or-signed decimal with 12 fractional digits.
// Stored values never go through binary floating point.
class Decimal {
 public:
  static constexpr int kScaleDigits = 12;
  static constexpr std::int64_t kScale = 1'000'000'000'000;

  constexpr Decimal() = default;

  static constexpr Decimal from_raw(std::int64_t units) {
    Decimal d;
    d.units_ = units;
    return d;
  }
  static constexpr Decimal from_integer(std::int64_t v) {
    return from_raw(v * kScale);
  }

  // Accepts `123`, `123.45`, `.5`, `7.` (the cleartext price grammar).
  // Extra fractional digits beyond 12 round half-to-even.
  static std::optional<Decimal> parse(std::string_view text) {
    if (text.empty()) return std::nullopt;
    bool negative = false;
    if (text.front() == '-') {
      negative = true;
      text.remove_prefix(1);
    }
    if (!is_decimal_token(text)) return std::nullopt;

    const auto dot = text.find('.');
    const std::string_view int_part = text.substr(0, dot);
    const std::string_view frac_part =
        dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);

    constexpr std::int64_t kMax = std::numeric_limits<std::int64_t>::max();
    std::int64_t whole = 0;
    for (char c : int_part) {
      if (whole > (kMax / 10)) return std::nullopt;
      whole = whole * 10 + (c - '0');
    }
    if (whole > kMax / kScale) return std::nullopt;

    std::int64_t frac = 0;
    std::size_t i = 0;
    for (; i < frac_part.size() && i < kScaleDigits; ++i) {
      frac = frac * 10 + (frac_part[i] - '0');
    }
    for (std::size_t pad = i; pad < kScaleDigits; ++pad) frac *= 10;

    if (frac_part.size() > kScaleDigits) {
      // Round on the remaining digits: compare against exactly one half.
      const std::string_view rest = frac_part.substr(kScaleDigits);
      int cmp = 0;
      if (rest[0] > '5') {
        cmp = 1;
      } else if (rest[0] < '5') {
        cmp = -1;
      } else {
        cmp = rest.find_first_not_of('0', 1) == std::string_view::npos ? 0 : 1;
      }
      if (cmp > 0 || (cmp == 0 && (frac % 2) != 0)) ++frac;
    }

    std::int64_t units = whole * kScale;
    if (units > kMax - frac) return std::nullopt;
    units += frac;
    return from_raw(negative ? -units : units);
  }

  static Decimal parse_or_throw(std::string_view text) {
    auto d = parse(text);
    if (!d) throw ParseError("not a decimal number: '" + std::string(text) + "'");
    return *d;
  }

  // Decimal-number grammar: digits with an optional fraction, or a bare
  // fraction. No sign, no exponent.
  static constexpr bool is_decimal_token(std::string_view text) {
    if (text.empty()) return false;
    std::size_t digits = 0;
    bool seen_dot = false;
    for (char c : text) {
      if (c >= '0' && c <= '9') {
        ++digits;
      } else if (c == '.' && !seen_dot) {
        seen_dot = true;
      } else {
        return false;
      }
    }
    return digits > 0;
  }

  constexpr std::int64_t raw() const { return units_; }
  constexpr bool is_negative() const { return units_ < 0; }
  constexpr bool is_zero() const { return units_ == 0; }

  double to_double() const {
    return static_cast<double>(units_ / kScale) +
           static_cast<double>(units_ % kScale) / static_cast<double>(kScale);
  }

  // Nearest representable value; used only for synthetic data and
  // model thresholds, never for parsed prices.
  static Decimal from_double(double v) {
    return from_raw(static_cast<std::int64_t>(v * static_cast<double>(kScale) +
                                              (v < 0 ? -0.5 : 0.5)));
  }

  // Division by a positive integer, rounding half-to-even.
  constexpr Decimal divided_by(std::int64_t divisor) const {
    if (divisor <= 0) throw std::invalid_argument("divisor must be positive");
    const std::int64_t mag = units_ < 0 ? -units_ : units_;
    std::int64_t q = mag / divisor;
    const std::int64_t r = mag % divisor;
    const std::int64_t twice = r * 2;
    if (twice > divisor || (twice == divisor && (q % 2) != 0)) ++q;
    return from_raw(units_ < 0 ? -q : q);
  }

  constexpr Decimal times(std::int64_t factor) const { return from_raw(units_ * factor); }

  // Canonical text: no exponent, no trailing fractional zeros, `0` for zero.
  std::string to_string() const {
    const bool negative = units_ < 0;
    const std::uint64_t mag = negative ? static_cast<std::uint64_t>(-(units_ + 1)) + 1
                                       : static_cast<std::uint64_t>(units_);
    std::string out = std::to_string(mag / kScale);
    std::uint64_t frac = mag % kScale;
    if (frac != 0) {
      std::string digits = std::to_string(frac);
      digits.insert(0, kScaleDigits - digits.size(), '0');
      while (!digits.empty() && digits.back() == '0') digits.pop_back();
      out += '.';
      out += digits;
    }
    return negative ? "-" + out : out;
  }

  friend constexpr Decimal operator+(Decimal a, Decimal b) {
    return from_raw(a.units_ + b.units_);
  }
  friend constexpr Decimal operator-(Decimal a, Decimal b) {
    return from_raw(a.units_ - b.units_);
  }
  constexpr Decimal& operator+=(Decimal o) {
    units_ += o.units_;
    return *this;
  }
  constexpr Decimal& operator-=(Decimal o) {
    units_ -= o.units_;
    return *this;
  }
  friend constexpr auto operator<=>(Decimal, Decimal) = default;
  friend constexpr bool operator==(Decimal, Decimal) = default;

 private:
  std::int64_t units_ = 0;
};

}  // namespace rtbprice
