#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sandtree {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline Rational make_rational(std::int64_t num, std::int64_t den = 1) { return Rational(num, den); }

// "num/den" (or "num" when den == 1); used wherever reports keep exact values.
inline std::string to_fraction_string(const Rational& q) {
  const BigInt& n = boost::multiprecision::numerator(q);
  const BigInt& d = boost::multiprecision::denominator(q);
  if (d == 1) return n.str();
  return n.str() + "/" + d.str();
}

inline double to_double(const Rational& q) { return q.convert_to<double>(); }
inline double to_double(const BigInt& z) { return z.convert_to<double>(); }

// Natural log of a positive big integer without overflowing double.
inline double log_big(const BigInt& z) {
  const std::size_t bits = boost::multiprecision::msb(z) + 1;
  if (bits < 1000) return std::log(z.convert_to<double>());
  const std::size_t shift = bits - 64;
  const BigInt top = z >> shift;
  return std::log(top.convert_to<double>()) + static_cast<double>(shift) * std::log(2.0);
}

inline double log_rational(const Rational& q) {
  return log_big(boost::multiprecision::numerator(q)) - log_big(boost::multiprecision::denominator(q));
}

// cpp_int reads a leading 0 as octal.
inline BigInt decimal_integer(std::string digits) {
  const bool negative = !digits.empty() && digits[0] == '-';
  if (negative) digits.erase(0, 1);
  if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) {
    throw std::invalid_argument("bad integer: " + digits);
  }
  const auto first = digits.find_first_not_of('0');
  const BigInt z = first == std::string::npos ? BigInt(0) : BigInt(digits.substr(first));
  return negative ? BigInt(-z) : z;
}

// Accepts "7", "-3/4" and plain decimals such as "0.125" (read exactly).
inline Rational parse_rational(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("empty number");
  const auto slash = text.find('/');
  if (slash != std::string::npos) {
    const BigInt den = decimal_integer(text.substr(slash + 1));
    if (den == 0) throw std::invalid_argument("zero denominator: " + text);
    return Rational(decimal_integer(text.substr(0, slash)), den);
  }
  const auto dot = text.find('.');
  if (dot == std::string::npos) return Rational(decimal_integer(text));
  const std::string frac = text.substr(dot + 1);
  std::string whole = text.substr(0, dot);
  const bool negative = !whole.empty() && whole[0] == '-';
  if (negative) whole.erase(0, 1);
  if (whole.empty()) whole = "0";
  BigInt scale = 1;
  for (std::size_t i = 0; i < frac.size(); ++i) scale *= 10;
  Rational q(decimal_integer(whole) * scale + (frac.empty() ? BigInt(0) : decimal_integer(frac)), scale);
  return negative ? Rational(-q) : q;
}

inline BigInt binomial(unsigned n, unsigned k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  BigInt r = 1;
  for (unsigned i = 1; i <= k; ++i) {
    r *= n - k + i;
    r /= i;
  }
  return r;
}

}  // namespace sandtree
