#pragma once

// Expected numbers of connected clusters (lattice animals) containing the
// root of a binary GW(p) tree.
//
// Indexing: a_n counts clusters with n vertices, a_0 = a_1 = 1, and the
// expected number of clusters with n edges is a_{n+1}.

#include "sandtree/errors.hpp"
#include "sandtree/exact.hpp"
#include "sandtree/rng.hpp"
#include "sandtree/tree.hpp"

#include <boost/math/tools/roots.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

namespace sandtree {

using HighFloat = boost::multiprecision::cpp_bin_float_50;

namespace detail {

template <class T>
double as_double(const T& v) {
  if constexpr (std::is_same_v<T, double>) {
    return v;
  } else {
    return v.template convert_to<double>();
  }
}

template <class T>
T from_big(const BigInt& z) {
  if constexpr (std::is_same_v<T, double>) {
    return z.convert_to<double>();
  } else {
    return T(z);
  }
}

template <class T>
void check_p(const T& p) {
  if (p < T(0) || p > T(1)) throw std::invalid_argument("probability must lie in [0, 1]");
}

// -a when a is a nonpositive integer, -1 otherwise.
template <class T>
long terminating_index(const T& a) {
  const double d = as_double(a);
  if (d > 0 || std::abs(d) > 1e9) return -1;
  const long m = std::lround(-d);
  return a == T(-m) ? m : -1;
}

template <class T>
T power(const T& base, std::size_t e) {
  T r(1);
  for (std::size_t i = 0; i < e; ++i) r *= base;
  return r;
}

}  // namespace detail

template <class T>
struct AnimalSeq {
  T p;
  std::vector<T> values;  // a_0 .. a_nmax
};

inline constexpr std::size_t kMaxAnimalIndex = 10000;

/// a_n = 1{n=1} + p 1{n>=2} sum_i a_i a_{n-i-1}, a_0 = 1. O(nmax^2).
template <class T>
AnimalSeq<T> a_recursion(const T& p, std::size_t nmax) {
  detail::check_p(p);
  if (nmax > kMaxAnimalIndex) throw GuardError("animal recursion length", nmax, kMaxAnimalIndex);
  AnimalSeq<T> out{p, std::vector<T>(nmax + 1, T(0))};
  out.values[0] = T(1);
  if (nmax >= 1) out.values[1] = T(1);
  for (std::size_t n = 2; n <= nmax; ++n) {
    T s(0);
    for (std::size_t i = 0; i < n; ++i) s += out.values[i] * out.values[n - i - 1];
    out.values[n] = p * s;
  }
  return out;
}

/// Closed finite sum: a_k = sum_j Cat(k-j) C(k-j+1, j) p^(k-j) (1-p)^j.
/// The integer weights are exact; p enters only through the powers, so
/// p = 0 needs no special case.
template <class T>
T a_exact_sum(const T& p, std::size_t k) {
  detail::check_p(p);
  const T q = T(1) - p;
  T total(0);
  for (std::size_t j = 0; j <= (k + 1) / 2; ++j) {
    const auto m = static_cast<unsigned>(k - j);
    const BigInt w = binomial(2 * m, m) * binomial(m + 1, static_cast<unsigned>(j)) / (m + 1);
    if (w == 0) continue;
    total += detail::from_big<T>(w) * detail::power(p, k - j) * detail::power(q, j);
  }
  return total;
}

/// Terminating 2F1(a, b; c; z). One of a, b must be a nonpositive integer;
/// c may not hit a nonpositive integer before the series stops.
template <class T>
T hyp2f1_terminating(const T& a, const T& b, const T& c, const T& z) {
  const long ma = detail::terminating_index(a);
  const long mb = detail::terminating_index(b);
  if (ma < 0 && mb < 0) throw NumericalDomainError("hypergeometric series does not terminate");
  const long m = ma < 0 ? mb : (mb < 0 ? ma : std::min(ma, mb));
  T term(1);
  T sum(1);
  for (long j = 0; j < m; ++j) {
    const T cj = c + T(j);
    if (cj == T(0)) throw NumericalDomainError("hypergeometric denominator vanishes");
    term *= (a + T(j)) * (b + T(j)) / (cj * T(j + 1)) * z;
    sum += term;
  }
  return sum;
}

/// a_k = p^k / (k+1) C(2k, k) 2F1(-(k+1)/2, -k/2; 1/2 - k; -(1-p)/p).
/// Needs p > 0 (z blows up); p = 0 falls back to a_0 = a_1 = 1, a_k = 0.
template <class T>
T a_hypergeometric(const T& p, std::size_t k) {
  detail::check_p(p);
  if (p == T(0)) return k <= 1 ? T(1) : T(0);
  const auto kk = static_cast<long>(k);
  const T a = T(-(kk + 1)) / T(2);
  const T b = T(-kk) / T(2);
  const T c = T(1) / T(2) - T(kk);
  const T z = -(T(1) - p) / p;
  const auto ku = static_cast<unsigned>(k);
  return detail::power(p, k) * detail::from_big<T>(binomial(2 * ku, ku)) / T(kk + 1) *
         hyp2f1_terminating(a, b, c, z);
}

enum class AnimalMethod { recursion, hypergeometric, exact_sum };

/// Expected number of root clusters with n edges, i.e. a_{n+1}.
template <class T>
T expected_clusters(const T& p, std::size_t n, AnimalMethod method) {
  switch (method) {
    case AnimalMethod::recursion:
      return a_recursion(p, n + 1).values[n + 1];
    case AnimalMethod::hypergeometric:
      return a_hypergeometric(p, n + 1);
    case AnimalMethod::exact_sum:
      return a_exact_sum(p, n + 1);
  }
  throw std::invalid_argument("unknown method");
}

// ---------------------------------------------------------------------------
// Generating function

/// Largest x where A(x) = sum a_n x^n is given by the closed form.
inline double gen_fn_radius(double p) {
  detail::check_p(p);
  if (p == 0.0) return std::numeric_limits<double>::infinity();
  if (p == 1.0) return 0.25;
  return (std::sqrt(p) - p) / (2 * p * (1 - p));
}

/// A(x) = (1 - sqrt(1 - 4px(1 + x(1-p)))) / (2px) on (0, radius].
inline double gen_fn_closed(double p, double x) {
  detail::check_p(p);
  if (!(x > 0)) throw NumericalDomainError("generating function needs x > 0");
  if (p == 0.0) return 1 + x;
  const double radius = gen_fn_radius(p);
  if (x > radius * (1 + 1e-12)) throw NumericalDomainError("x outside the convergence domain");
  const double disc = std::max(0.0, 1 - 4 * p * x * (1 + x * (1 - p)));
  // 1 - sqrt(d) written as (1 - d)/(1 + sqrt(d)) to avoid cancellation at small x
  return (1 - disc) / (1 + std::sqrt(disc)) / (2 * p * x);
}

// ---------------------------------------------------------------------------
// Bounds and thresholds

struct AnimalBounds {
  double largen = 0;    // C (n+1) 4^n ((p + sqrt p)/2)^n
  double binomial = 0;  // C 4^n p^n
};

inline AnimalBounds animal_bounds(double p, std::size_t n, double C = 1.0) {
  detail::check_p(p);
  if (n < 1) throw std::invalid_argument("bounds need n >= 1");
  const double nn = static_cast<double>(n);
  return {C * (nn + 1) * std::pow(2 * (p + std::sqrt(p)), nn), C * std::pow(4 * p, nn)};
}

/// Smallest C making a_{n+1} <= largen bound for 1 <= n <= nmax.
inline double calibrate_C(double p, std::size_t nmax = 30) {
  const auto a = a_recursion(p, nmax + 1).values;
  double c = 0;
  for (std::size_t n = 1; n <= nmax; ++n) c = std::max(c, a[n + 1] / animal_bounds(p, n).largen);
  return c;
}

struct Thresholds {
  double p_star = 0;           // (p + sqrt p)/2 = 2^(-16/25)
  double p_binomial_star = 0;  // 2^(-16/25)
  double residual = 0;
};

inline Thresholds threshold_solve() {
  Thresholds t;
  t.p_binomial_star = std::pow(2.0, -16.0 / 25.0);
  const auto g = [&](double p) { return (p + std::sqrt(p)) / 2 - t.p_binomial_star; };
  const auto bracket = boost::math::tools::bisect(g, 0.0, 1.0, [](double lo, double hi) { return hi - lo < 1e-15; });
  t.p_star = (bracket.first + bracket.second) / 2;
  t.residual = std::abs(g(t.p_star));
  return t;
}

// ---------------------------------------------------------------------------
// Monte-Carlo oracle

inline constexpr std::size_t kBruteClusterGuard = 8;

struct BruteEstimate {
  double mean = 0;
  double std_error = 0;
  std::size_t samples = 0;
};

/// Average number of n-edge root clusters over GW(p) trees grown to depth
/// n + 1 (deeper vertices cannot belong to such a cluster). Sample i uses
/// substream i.
inline BruteEstimate brute_expected(double p, std::size_t n, std::size_t samples, const RandomSource& rng,
                                    std::size_t guard = kBruteClusterGuard) {
  detail::check_p(p);
  if (n > guard) throw GuardError("brute-force cluster size", n, guard);
  if (samples < 2) throw std::invalid_argument("need at least two samples");
  double sum = 0;
  double sum_sq = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    RandomSource sub = rng.substream(i);
    const TreeTopology t = sample_gw_binary(p, static_cast<int>(n) + 1, sub);
    const auto count = static_cast<double>(enumerate_clusters(t, t.root(), n, ClusterUnit::edges).size());
    sum += count;
    sum_sq += count * count;
  }
  const double m = static_cast<double>(samples);
  BruteEstimate out;
  out.samples = samples;
  out.mean = sum / m;
  const double var = std::max(0.0, (sum_sq - m * out.mean * out.mean) / (m - 1));
  out.std_error = std::sqrt(var / m);
  return out;
}

}  // namespace sandtree
