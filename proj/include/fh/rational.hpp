#pragma once

#include <charconv>
#include <climits>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>

#include "errors.hpp"

namespace fh {

// Exact a/b, used for boundary parameter values such as 300/91.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

inline Rational make_rational(std::int64_t n, std::int64_t d) {
  if (d == 0) throw ConfigError("rational with zero denominator");
  if (d < 0) {
    n = -n;
    d = -d;
  }
  const std::int64_t g = std::gcd(n < 0 ? -n : n, d);
  return {n / (g ? g : 1), d / (g ? g : 1)};
}

// -1, 0, +1 for a < b, a == b, a > b.
inline int compare(const Rational& a, const Rational& b) {
  const __int128 l = static_cast<__int128>(a.num) * b.den;
  const __int128 r = static_cast<__int128>(b.num) * a.den;
  return (l > r) - (l < r);
}

namespace detail {
inline std::int64_t narrow(__int128 v) {
  if (v > INT64_MAX || v < INT64_MIN) throw NumericalError("rational arithmetic overflow");
  return static_cast<std::int64_t>(v);
}
inline Rational reduce(__int128 n, __int128 d) {
  if (d == 0) throw NumericalError("rational division by zero");
  if (d < 0) n = -n, d = -d;
  __int128 a = n < 0 ? -n : n, b = d;
  while (b != 0) {
    const __int128 t = a % b;
    a = b;
    b = t;
  }
  if (a > 1) n /= a, d /= a;
  return {narrow(n), narrow(d)};
}
}  // namespace detail

inline Rational operator+(const Rational& a, const Rational& b) {
  return detail::reduce(static_cast<__int128>(a.num) * b.den + static_cast<__int128>(b.num) * a.den,
                        static_cast<__int128>(a.den) * b.den);
}
inline Rational operator-(const Rational& a) { return {-a.num, a.den}; }
inline Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }
inline Rational operator*(const Rational& a, const Rational& b) {
  return detail::reduce(static_cast<__int128>(a.num) * b.num, static_cast<__int128>(a.den) * b.den);
}
inline Rational operator/(const Rational& a, const Rational& b) {
  return detail::reduce(static_cast<__int128>(a.num) * b.den, static_cast<__int128>(a.den) * b.num);
}
inline bool operator==(const Rational& a, const Rational& b) { return compare(a, b) == 0; }

inline std::string to_string(const Rational& r) {
  return r.den == 1 ? std::to_string(r.num) : std::to_string(r.num) + "/" + std::to_string(r.den);
}

// Inexact comparison: values within `width` count as equal.
inline int compare_approx(double a, double b, double width = 1e-12) {
  if (std::abs(a - b) <= width) return 0;
  return a < b ? -1 : 1;
}

namespace detail {
inline std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}
}  // namespace detail

// Accepts "a/b", integers and plain decimals ("3.5" -> 7/2). Exponent forms are not
// rational literals and yield nullopt; callers then fall back to double parsing.
inline std::optional<Rational> parse_rational(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (auto slash = s.find('/'); slash != std::string_view::npos) {
    auto n = detail::parse_int(s.substr(0, slash));
    auto d = detail::parse_int(s.substr(slash + 1));
    if (!n || !d || *d == 0) return std::nullopt;
    return make_rational(*n, *d);
  }
  auto dot = s.find('.');
  if (dot == std::string_view::npos) {
    auto n = detail::parse_int(s);
    if (!n) return std::nullopt;
    return Rational{*n, 1};
  }
  std::string digits(s.substr(0, dot));
  std::string frac(s.substr(dot + 1));
  if (frac.size() > 15) return std::nullopt;
  std::int64_t den = 1;
  for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
  bool neg = !digits.empty() && digits.front() == '-';
  if (neg || (!digits.empty() && digits.front() == '+')) digits.erase(0, 1);
  if (digits.empty()) digits = "0";
  auto whole = detail::parse_int(digits);
  auto part = frac.empty() ? std::optional<std::int64_t>(0) : detail::parse_int(frac);
  if (!whole || !part || frac.find_first_not_of("0123456789") != std::string::npos)
    return std::nullopt;
  std::int64_t n = *whole * den + *part;
  return make_rational(neg ? -n : n, den);
}

// Rational if the text is one, otherwise a checked double.
struct ExactNumber {
  double value = 0.0;
  std::optional<Rational> exact;
};

inline ExactNumber parse_number(std::string_view s) {
  if (auto r = parse_rational(s)) return {r->value(), r};
  std::string buf(s);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (buf.empty() || end == buf.c_str() || *end != '\0' || !std::isfinite(v))
    throw ConfigError("not a number: '" + buf + "'");
  return {v, std::nullopt};
}

}  // namespace fh
