#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include <boost/multiprecision/cpp_int.hpp>

#include "fmm/errors.hpp"

namespace fmm {

// Arbitrary-precision rational with a positive denominator, always reduced.
using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline double to_double(const Rational& q) { return q.convert_to<double>(); }

inline std::string to_string(const Rational& q) {
  const BigInt num = boost::multiprecision::numerator(q);
  const BigInt den = boost::multiprecision::denominator(q);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

// Exact value of a finite double (every finite double is a dyadic rational).
inline Rational rational_from_double(double x) {
  if (!std::isfinite(x)) throw ContractViolation("non-finite value has no rational form");
  int exponent = 0;
  double mantissa = std::frexp(x, &exponent);
  // Scale the mantissa to a 53-bit integer.
  const auto scaled = static_cast<std::int64_t>(std::ldexp(mantissa, 53));
  exponent -= 53;
  Rational q(scaled);
  if (exponent > 0) {
    q *= Rational(BigInt(1) << exponent);
  } else if (exponent < 0) {
    q /= Rational(BigInt(1) << -exponent);
  }
  return q;
}

namespace detail {

inline bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}

}  // namespace detail

// Parses "p", "-p/q" or a decimal literal such as "-0.25" or "1.5e-3".
// Returns nullopt on malformed input.
inline std::optional<Rational> parse_rational(std::string_view text) {
  if (text.empty()) return std::nullopt;
  bool negative = false;
  std::string_view body = text;
  if (body.front() == '+' || body.front() == '-') {
    negative = body.front() == '-';
    body.remove_prefix(1);
  }
  if (body.empty()) return std::nullopt;

  Rational value;
  if (auto slash = body.find('/'); slash != std::string_view::npos) {
    const auto num = body.substr(0, slash);
    const auto den = body.substr(slash + 1);
    if (!detail::all_digits(num) || !detail::all_digits(den)) return std::nullopt;
    auto strip = [](std::string_view s) {
      const auto first = s.find_first_not_of('0');
      return first == std::string_view::npos ? std::string("0") : std::string(s.substr(first));
    };
    BigInt d{strip(den)};
    if (d == 0) return std::nullopt;
    value = Rational(BigInt{strip(num)}, d);
  } else {
    // Decimal: digits [. digits] [e|E [+-] digits]
    std::string_view mantissa = body;
    long long exp10 = 0;
    if (auto e = body.find_first_of("eE"); e != std::string_view::npos) {
      mantissa = body.substr(0, e);
      std::string_view ex = body.substr(e + 1);
      bool ex_negative = false;
      if (!ex.empty() && (ex.front() == '+' || ex.front() == '-')) {
        ex_negative = ex.front() == '-';
        ex.remove_prefix(1);
      }
      if (!detail::all_digits(ex) || ex.size() > 4) return std::nullopt;
      exp10 = std::stoll(std::string(ex));
      if (ex_negative) exp10 = -exp10;
    }
    std::string digits;
    if (auto dot = mantissa.find('.'); dot != std::string_view::npos) {
      const auto whole = mantissa.substr(0, dot);
      const auto frac = mantissa.substr(dot + 1);
      if (whole.empty() && frac.empty()) return std::nullopt;
      if ((!whole.empty() && !detail::all_digits(whole)) || (!frac.empty() && !detail::all_digits(frac)))
        return std::nullopt;
      digits = std::string(whole) + std::string(frac);
      exp10 -= static_cast<long long>(frac.size());
    } else {
      if (!detail::all_digits(mantissa)) return std::nullopt;
      digits = std::string(mantissa);
    }
    // cpp_int reads a leading 0 as an octal prefix.
    const auto first = digits.find_first_not_of('0');
    digits = first == std::string::npos ? "0" : digits.substr(first);
    BigInt num(digits);
    BigInt scale = boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(std::llabs(exp10)));
    value = exp10 >= 0 ? Rational(num * scale) : Rational(num, scale);
  }
  if (negative) value = -value;
  return value;
}

//
// A factor-matrix entry: value * lambda^power. Exact algorithms only use
// power 0; approximate (APA) algorithms may use +-1.
//
struct Coefficient {
  Rational value{0};
  int lambda_power = 0;

  Coefficient() = default;
  Coefficient(Rational v, int power = 0) : value(std::move(v)), lambda_power(power) {  // NOLINT
    if (value == 0) lambda_power = 0;
  }
  Coefficient(long long v) : Coefficient(Rational(v)) {}  // NOLINT(google-explicit-constructor)

  bool is_zero() const { return value == 0; }
  bool is_exact() const { return lambda_power == 0; }

  double to_double(double lambda = 1.0) const {
    return fmm::to_double(value) * std::pow(lambda, lambda_power);
  }

  friend Coefficient operator*(const Coefficient& a, const Coefficient& b) {
    return {a.value * b.value, a.lambda_power + b.lambda_power};
  }
  friend Coefficient operator/(const Coefficient& a, const Coefficient& b) {
    if (b.is_zero()) throw ContractViolation("division by a zero coefficient");
    return {a.value / b.value, a.lambda_power - b.lambda_power};
  }
  Coefficient operator-() const { return {-value, lambda_power}; }

  friend bool operator==(const Coefficient& a, const Coefficient& b) {
    return a.value == b.value && a.lambda_power == b.lambda_power;
  }
  // Total order used for deterministic tie-breaking.
  friend bool operator<(const Coefficient& a, const Coefficient& b) {
    if (a.lambda_power != b.lambda_power) return a.lambda_power < b.lambda_power;
    return a.value < b.value;
  }
};

inline std::string to_string(const Coefficient& c) {
  std::string s = to_string(c.value);
  switch (c.lambda_power) {
    case 0:
      return s;
    case 1:
      return s + "*L";
    case -1:
      return s + "/L";
    default:
      return s + "*L^" + std::to_string(c.lambda_power);
  }
}

// Parses "p", "-p/q", decimals, and the approximate forms "p/q*L", "p/q/L",
// "L", "-L", "x*L^e".
inline std::optional<Coefficient> parse_coefficient(std::string_view text) {
  int power = 0;
  std::string_view base = text;
  auto ends_with = [&](std::string_view suffix) {
    return base.size() >= suffix.size() && base.substr(base.size() - suffix.size()) == suffix;
  };
  if (auto caret = base.find("*L^"); caret != std::string_view::npos) {
    const auto ex = base.substr(caret + 3);
    std::string_view digits = ex;
    if (!digits.empty() && digits.front() == '-') digits.remove_prefix(1);
    if (!detail::all_digits(digits) || digits.size() > 3) return std::nullopt;
    power = std::stoi(std::string(ex));
    base = base.substr(0, caret);
  } else if (ends_with("*L")) {
    power = 1;
    base.remove_suffix(2);
  } else if (ends_with("/L")) {
    power = -1;
    base.remove_suffix(2);
  } else if (base == "L" || base == "+L" || base == "-L") {
    return Coefficient(Rational(base == "-L" ? -1 : 1), 1);
  }
  auto value = parse_rational(base);
  if (!value) return std::nullopt;
  return Coefficient(*value, power);
}

}  // namespace fmm
