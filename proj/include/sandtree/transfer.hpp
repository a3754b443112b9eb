#pragma once

#include "sandtree/errors.hpp"
#include "sandtree/exact.hpp"
#include "sandtree/ratio.hpp"
#include "sandtree/rng.hpp"
#include "sandtree/tree.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace sandtree {

/// 2x2 nonnegative matrix kept as exp(log_scale) * entries with the largest
/// entry equal to 1. log_det is tracked separately: the determinant of the
/// normalized entries cancels catastrophically in long products.
struct ScaledMatrix2 {
  std::array<double, 4> entries{1, 0, 0, 1};  // row-major a b / c d
  double log_scale = 0;
  double log_det = 0;  // -inf for singular matrices

  double operator()(int i, int j) const { return entries[2 * i + j]; }

  static ScaledMatrix2 from_entries(double a, double b, double c, double d) {
    if (a < 0 || b < 0 || c < 0 || d < 0) throw std::invalid_argument("entries must be nonnegative");
    ScaledMatrix2 m;
    m.entries = {a, b, c, d};
    const double det = a * d - b * c;
    m.log_det = det > 0 ? std::log(det) : -std::numeric_limits<double>::infinity();
    m.normalize();
    return m;
  }

  void normalize() {
    const double top = std::max({entries[0], entries[1], entries[2], entries[3]});
    if (top <= 0) throw std::invalid_argument("zero matrix");
    for (auto& e : entries) e /= top;
    log_scale += std::log(top);
  }

  double trace_scaled() const { return entries[0] + entries[3]; }
  double log_trace() const { return log_scale + std::log(trace_scaled()); }
  // Entry (i, j) of the true matrix, may overflow for long products.
  double value(int i, int j) const { return std::exp(log_scale) * (*this)(i, j); }

  friend ScaledMatrix2 operator*(const ScaledMatrix2& x, const ScaledMatrix2& y) {
    const auto& a = x.entries;
    const auto& b = y.entries;
    ScaledMatrix2 r;
    r.entries = {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2],
                 a[2] * b[1] + a[3] * b[3]};
    r.log_scale = x.log_scale + y.log_scale;
    r.log_det = x.log_det + y.log_det;
    r.normalize();
    return r;
  }
};

namespace detail {

inline void check_ratio(double x) {
  if (!(x == 0.0 || (x >= 0.5 && x <= 1.0))) throw std::invalid_argument("ratio must be 0 or lie in [1/2, 1]");
}

}  // namespace detail

/// M(x) = [[1+x, 1+x], [1, 2+x]], det (1+x)^2.
inline ScaledMatrix2 m_of(double x) {
  detail::check_ratio(x);
  ScaledMatrix2 m;
  m.entries = {1 + x, 1 + x, 1, 2 + x};
  m.log_det = 2 * std::log1p(x);
  m.normalize();
  return m;
}

/// M(x_1) M(x_2) ... M(x_n), renormalized after every multiplication.
inline ScaledMatrix2 product_log_scaled(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("empty product");
  ScaledMatrix2 m = m_of(xs[0]);
  for (std::size_t i = 1; i < xs.size(); ++i) m = m * m_of(xs[i]);
  return m;
}

struct EigenPair {
  double log_lambda_plus = 0;
  double log_lambda_minus = 0;  // log(det) - log(lambda_plus)
  bool clamped = false;         // slightly negative discriminant set to 0
};

/// Eigenvalues (a +- sqrt(a^2 - 4b))/2 in log form. lambda_minus comes from
/// det / lambda_plus.
inline EigenPair eigen_2x2(const ScaledMatrix2& m, double tol = 1e-9) {
  const double a = m.trace_scaled();
  const double b = std::exp(m.log_det - 2 * m.log_scale);  // det of the normalized entries
  double disc = a * a - 4 * b;
  EigenPair e;
  if (disc < 0) {
    if (disc < -tol * a * a) throw NumericalDomainError("complex eigenvalues");
    disc = 0;
    e.clamped = true;
  }
  const double plus = (a + std::sqrt(disc)) / 2;
  if (!(plus > 0)) throw NumericalDomainError("nonpositive leading eigenvalue");
  e.log_lambda_plus = m.log_scale + std::log(plus);
  e.log_lambda_minus = m.log_det - e.log_lambda_plus;
  return e;
}

// gamma = (4/25) 2^(32/25), per-step decay of lambda_-/lambda_+.
inline double quenched_gamma() { return 4.0 / 25.0 * std::pow(2.0, 32.0 / 25.0); }

/// log of Z 2^(-16n/25), Z = prod (1 + 2 y_i), y_i = 1 + x_i.
inline double trace_lower_bound(const std::vector<double>& xs) {
  double log_z = 0;
  for (double x : xs) {
    detail::check_ratio(x);
    log_z += std::log(1 + 2 * (1 + x));
  }
  return log_z - static_cast<double>(xs.size()) * 16.0 / 25.0 * std::log(2.0);
}

struct SpectralReport {
  std::size_t n = 0;
  double log_ratio = 0;          // log(lambda_- / lambda_+)
  double log_det_over_tr2 = 0;   // log(det / Tr^2)
  double log_bound_49 = 0;       // n log(4/9)
  double log_bound_gamma = 0;    // n log(gamma)
  double log_trace = 0;
  double log_trace_bound = 0;
  double det_identity_err = 0;   // relative error of det vs prod (1+x)^2
  double ratio_vs_det_tr2_err = 0;  // |(lambda_-/lambda_+) Tr^2/det - 1|
  bool det_tr2_ok = false;
  bool trace_bound_ok = false;
  bool nonnegative = false;
};

/// Quenched checks on one product of M(x_i), x_i in [1/2, 1].
inline SpectralReport spectral_bounds_check(const std::vector<double>& xs) {
  for (double x : xs) {
    if (!(x >= 0.5 && x <= 1.0)) throw std::invalid_argument("spectral bounds need x in [1/2, 1]");
  }
  const ScaledMatrix2 m = product_log_scaled(xs);
  const EigenPair e = eigen_2x2(m);
  SpectralReport r;
  r.n = xs.size();
  const double n = static_cast<double>(xs.size());
  r.log_ratio = e.log_lambda_minus - e.log_lambda_plus;
  r.log_trace = m.log_trace();
  r.log_det_over_tr2 = m.log_det - 2 * r.log_trace;
  r.log_bound_49 = n * std::log(4.0 / 9.0);
  r.log_bound_gamma = n * std::log(quenched_gamma());
  r.log_trace_bound = trace_lower_bound(xs);
  double expect = 0;
  for (double x : xs) expect += 2 * std::log1p(x);
  // det tracked through products vs the closed form; both in logs
  r.det_identity_err = std::abs(std::expm1(m.log_det - expect));
  r.ratio_vs_det_tr2_err = std::abs(std::expm1(r.log_ratio + 2 * r.log_trace - m.log_det));
  r.det_tr2_ok = r.log_det_over_tr2 <= r.log_bound_49 + 1e-12;
  r.trace_bound_ok = r.log_trace >= r.log_trace_bound - 1e-12;
  r.nonnegative = !e.clamped && std::isfinite(e.log_lambda_minus);
  return r;
}

// ---------------------------------------------------------------------------
// Exact products and the E1/E2 expansion

using Matrix2Q = std::array<Rational, 4>;
using Matrix2Z = std::array<BigInt, 4>;

template <class T>
std::array<T, 4> mul2(const std::array<T, 4>& a, const std::array<T, 4>& b) {
  return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2],
          a[2] * b[1] + a[3] * b[3]};
}

inline Matrix2Q m_exact(const Rational& x) { return {1 + x, 1 + x, Rational(1), 2 + x}; }

inline Matrix2Q product_exact(const std::vector<Rational>& xs) {
  Matrix2Q m{Rational(1), Rational(0), Rational(0), Rational(1)};
  for (const auto& x : xs) m = mul2(m, m_exact(x));
  return m;
}

inline const Matrix2Z& e1_matrix() {
  static const Matrix2Z e{1, 1, 0, 1};
  return e;
}
inline const Matrix2Z& e2_matrix() {
  static const Matrix2Z e{0, 0, 1, 1};
  return e;
}

// N(alpha) = sum_{i<n} alpha_i (1 - alpha_{i+1}), alpha_{n+1} = 1.
inline int alpha_blocks(const std::vector<bool>& alpha) {
  int n = 0;
  for (std::size_t i = 0; i + 1 < alpha.size(); ++i) n += alpha[i] && !alpha[i + 1];
  return n;
}

/// Tr(E(alpha)) with E(alpha) = prod E1^alpha_i E2^(1-alpha_i). Computed by
/// the direct matrix product and by the closed form: writing alpha as
/// 1^k1 0.. 1^k2 0.. ... 1^kr 0.. 1^k(r+1), Tr = prod_{i>=2}^r (1+k_i) (1+k_1+k_(r+1)),
/// and 2 for the all-ones word. Throws std::logic_error if the two disagree
/// or the 2^N(alpha) lower bound fails.
inline BigInt e_pattern_trace(const std::vector<bool>& alpha) {
  Matrix2Z m{1, 0, 0, 1};
  for (bool a : alpha) m = mul2(m, a ? e1_matrix() : e2_matrix());
  const BigInt direct = m[0] + m[3];

  std::vector<long> runs;  // lengths of 1-runs, split at zero blocks
  long run = 0;
  bool any_zero = false;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i]) {
      ++run;
    } else {
      any_zero = true;
      if (i == 0 || alpha[i - 1]) {
        runs.push_back(run);
        run = 0;
      }
    }
  }
  BigInt closed;
  if (!any_zero) {
    closed = 2;
  } else {
    const long last = run;  // k_(r+1)
    closed = 1 + runs[0] + last;
    for (std::size_t i = 1; i < runs.size(); ++i) closed *= 1 + runs[i];
  }
  if (closed != direct) throw std::logic_error("trace closed form disagrees with the matrix product");
  if (direct < (BigInt(1) << alpha_blocks(alpha))) throw std::logic_error("trace below 2^N(alpha)");
  return direct;
}

struct TraceExpansion {
  Rational trace_direct;
  Rational trace_expanded;
};

/// Tr(M) both as the exact product and as sum_alpha prod y_i^alpha_i Tr(E(alpha)).
inline TraceExpansion trace_expansion(const std::vector<Rational>& xs, std::size_t max_n = 20) {
  if (xs.size() > max_n) throw GuardError("trace expansion over 2^n patterns", xs.size(), max_n);
  const auto m = product_exact(xs);
  TraceExpansion r;
  r.trace_direct = m[0] + m[3];
  r.trace_expanded = 0;
  const std::size_t n = xs.size();
  std::vector<bool> alpha(n);
  for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << n); ++mask) {
    Rational weight = 1;
    for (std::size_t i = 0; i < n; ++i) {
      alpha[i] = (mask >> i) & 1;
      if (alpha[i]) weight *= 1 + xs[i];
    }
    r.trace_expanded += weight * Rational(e_pattern_trace(alpha));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Annealed quantities

struct LambdaPair {
  double plus = 0;
  double minus = 0;
};

/// Eigenvalues of [[gamma, gamma], [1, 1+gamma]]: (2g+1 +- sqrt(4g+1))/2.
inline LambdaPair lambda_pm_const(double gamma) {
  if (!(gamma >= 0)) throw std::invalid_argument("gamma must be nonnegative");
  const double s = std::sqrt(4 * gamma + 1);
  return {(2 * gamma + 1 + s) / 2, (2 * gamma + 1 - s) / 2};
}

struct AnnealedBound {
  double gamma = 0;      // 1 / E(1/(1+x))
  double log_ratio = 0;  // log(Lambda_+ / Lambda_-)
  double ratio = 0;      // Lambda_+ / Lambda_-
};

inline AnnealedBound annealed_bound(const DiscreteMeasure& mu) {
  if (mu.size() == 0) throw std::invalid_argument("empty measure");
  if (mu.support().front() < 0.5 || mu.support().back() > 1.0) {
    throw std::invalid_argument("annealed bound needs support in [1/2, 1]");
  }
  AnnealedBound b;
  b.gamma = 1.0 / mu.expectation([](double x) { return 1.0 / (1.0 + x); });
  if (b.gamma < 1.5 - 1e-12 || b.gamma > 2.0 + 1e-12) throw std::logic_error("gamma outside [3/2, 2]");
  const auto l = lambda_pm_const(b.gamma);
  b.ratio = l.plus / l.minus;
  b.log_ratio = std::log(b.ratio);
  return b;
}

struct LyapunovEstimate {
  std::size_t n = 0;
  std::size_t samples = 0;
  double L_plus = 0;   // mean of log(lambda_+)/n
  double L_minus = 0;  // mean of log(lambda_-)/n, lambda_- = det/lambda_+
  double Yn_mean = 0;
  double Yn_std = 0;
  double Yn_stderr = 0;
  double two_E_log = 0;        // 2 E log(1+x) under mu
  double identity_stderr = 0;  // stderr of (L_+ + L_-)
  double det_check_err = 0;    // |(L_+ + L_-) - 2 E log(1+x)|
};

namespace detail {

// Welford update; the naive sum of squares cancels badly when the spread
// is tiny compared to the mean.
struct Moments {
  double mu = 0, m2 = 0;
  std::size_t n = 0;
  void add(double x) {
    ++n;
    const double d = x - mu;
    mu += d / static_cast<double>(n);
    m2 += d * (x - mu);
  }
  double mean() const { return mu; }
  double stddev() const {
    if (n < 2) return 0;
    return std::sqrt(std::max(0.0, m2 / static_cast<double>(n - 1)));
  }
};

}  // namespace detail

/// Monte Carlo over products of n i.i.d. M(x_i), x_i ~ mu; sample s draws
/// from rng.substream(s).
inline LyapunovEstimate lyapunov_estimate(const DiscreteMeasure& mu, std::size_t n, std::size_t samples,
                                          const RandomSource& rng) {
  if (n < 1 || samples < 1) throw std::invalid_argument("need n >= 1 and samples >= 1");
  detail::Moments plus, minus, y, sum;
  std::vector<double> xs(n);
  for (std::size_t s = 0; s < samples; ++s) {
    RandomSource sub = rng.substream(s);
    for (auto& x : xs) x = mu.sample(sub);
    const auto e = eigen_2x2(product_log_scaled(xs));
    const double dn = static_cast<double>(n);
    plus.add(e.log_lambda_plus / dn);
    minus.add(e.log_lambda_minus / dn);
    sum.add((e.log_lambda_plus + e.log_lambda_minus) / dn);
    y.add((e.log_lambda_plus - e.log_lambda_minus) / dn);
  }
  LyapunovEstimate r;
  r.n = n;
  r.samples = samples;
  r.L_plus = plus.mean();
  r.L_minus = minus.mean();
  r.Yn_mean = y.mean();
  r.Yn_std = y.stddev();
  r.Yn_stderr = r.Yn_std / std::sqrt(static_cast<double>(samples));
  r.two_E_log = 2 * mu.expectation([](double x) { return std::log1p(x); });
  r.identity_stderr = sum.stddev() / std::sqrt(static_cast<double>(samples));
  r.det_check_err = std::abs(r.L_plus + r.L_minus - r.two_E_log);
  return r;
}

struct ConcentrationRow {
  std::size_t n = 0;
  std::size_t samples = 0;
  double Yn_mean = 0;
  double Yn_std = 0;
  double L_plus = 0;
  double L_minus = 0;
  double det_check_err = 0;
};

/// Y_n statistics per n. Each n uses its own stream derived from rng.
inline std::vector<ConcentrationRow> concentration_stats(const DiscreteMeasure& mu,
                                                         const std::vector<std::size_t>& n_grid,
                                                         std::size_t samples, const RandomSource& rng) {
  std::vector<ConcentrationRow> rows;
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw std::invalid_argument("n grid must be ascending");
    const RandomSource stream(rng.seed(), mix64(rng.stream() ^ (0x5851f42d4c957f2dULL * (n_grid[i] + 1))));
    const auto e = lyapunov_estimate(mu, n_grid[i], samples, stream);
    rows.push_back({e.n, e.samples, e.Yn_mean, e.Yn_std, e.L_plus, e.L_minus, e.det_check_err});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Matrices attached to paths and clusters

inline std::vector<double> slot_ratios(const TreeTopology& t, const std::vector<Slot>& slots) {
  std::vector<double> xs;
  xs.reserve(slots.size());
  for (const Slot& s : slots) xs.push_back(s.absent() ? 0.0 : ratio_hanging(t, s.neighbor, s.owner));
  return xs;
}

/// Product of M(x) over the |C| + 2 subtrees hanging off the cluster, in the
/// depth-first slot order of cluster_slots.
inline ScaledMatrix2 cluster_matrix(const TreeTopology& t, const std::vector<NodeId>& cluster, NodeId origin) {
  return product_log_scaled(slot_ratios(t, cluster_slots(t, cluster, origin)));
}

/// Product of M(x) over the n + 3 subtrees hanging off the path u..v.
inline ScaledMatrix2 path_matrix(const TreeTopology& t, NodeId u, NodeId v) {
  return product_log_scaled(slot_ratios(t, path_slots(t, u, v)));
}

}  // namespace sandtree
