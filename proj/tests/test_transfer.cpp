#include "sandtree/transfer.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sandtree;

namespace {

std::vector<double> draw(RandomSource& rng, std::size_t n) {
  std::vector<double> xs(n);
  for (auto& x : xs) x = 0.5 + 0.5 * rng.uniform();
  return xs;
}

std::vector<bool> bits(const std::string& s) {
  std::vector<bool> b;
  for (char c : s) b.push_back(c == '1');
  return b;
}

}  // namespace

TEST(Matrix, Basics) {
  const auto m1 = m_of(1.0);
  EXPECT_DOUBLE_EQ(m1.value(0, 0), 2);
  EXPECT_DOUBLE_EQ(m1.value(0, 1), 2);
  EXPECT_DOUBLE_EQ(m1.value(1, 0), 1);
  EXPECT_DOUBLE_EQ(m1.value(1, 1), 3);
  const auto m0 = m_of(0.0);
  EXPECT_DOUBLE_EQ(m0.value(1, 1), 2);
  EXPECT_DOUBLE_EQ(m0.value(0, 0), 1);
  EXPECT_THROW(m_of(0.3), std::invalid_argument);
  EXPECT_THROW(m_of(1.2), std::invalid_argument);
  for (const Rational x : {Rational(0), Rational(1, 2), Rational(3, 4), Rational(1)}) {
    const auto m = m_exact(x);
    EXPECT_EQ(m[0] * m[3] - m[1] * m[2], (1 + x) * (1 + x));
  }
}

TEST(Product, Small) {
  const auto p = product_log_scaled({1.0, 1.0});
  EXPECT_NEAR(p.value(0, 0), 6, 1e-12);
  EXPECT_NEAR(p.value(0, 1), 10, 1e-12);
  EXPECT_NEAR(p.value(1, 0), 5, 1e-12);
  EXPECT_NEAR(p.value(1, 1), 11, 1e-12);
  const auto q = product_log_scaled({0.5, 1.0});
  EXPECT_NEAR(std::exp(q.log_trace()), 14, 1e-12);
  EXPECT_NEAR(std::exp(q.log_det), 9, 1e-12);
  EXPECT_THROW(product_log_scaled({}), std::invalid_argument);
}

TEST(Product, LongAllOnes) {
  const auto e = eigen_2x2(product_log_scaled(std::vector<double>(1000, 1.0)));
  EXPECT_NEAR(e.log_lambda_plus, 1000 * std::log(4.0), 1e-6);
  EXPECT_NEAR(e.log_lambda_minus, 0.0, 1e-6);
  // no overflow far beyond double range
  const auto big = product_log_scaled(std::vector<double>(1000000, 1.0));
  EXPECT_TRUE(std::isfinite(big.log_scale));
  EXPECT_NEAR(eigen_2x2(big).log_lambda_plus / 1e6, std::log(4.0), 1e-9);
}

TEST(Product, ScalingMatchesNaive) {
  RandomSource rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const auto xs = draw(rng, 1 + rng.below(40));
    std::array<double, 4> naive{1, 0, 0, 1};
    for (double x : xs) naive = mul2<double>(naive, {1 + x, 1 + x, 1, 2 + x});
    const auto s = product_log_scaled(xs);
    for (int k = 0; k < 4; ++k) {
      EXPECT_NEAR(s.value(k / 2, k % 2) / naive[k], 1.0, 1e-12);
    }
  }
}

TEST(Product, MatchesExactRational) {
  const std::vector<Rational> xs{Rational(1, 2), Rational(3, 4), Rational(1), Rational(5, 8), Rational(0)};
  std::vector<double> xd;
  for (const auto& x : xs) xd.push_back(to_double(x));
  const auto e = product_exact(xs);
  const auto s = product_log_scaled(xd);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(s.value(k / 2, k % 2), to_double(e[k]), 1e-10);
}

TEST(Eigen, Examples) {
  for (double x : {0.5, 0.75, 1.0}) {
    const auto e = eigen_2x2(m_of(x));
    EXPECT_NEAR(std::exp(e.log_lambda_plus), (3 + 2 * x + std::sqrt(5 + 4 * x)) / 2, 1e-12);
    EXPECT_NEAR(std::exp(e.log_lambda_minus), (3 + 2 * x - std::sqrt(5 + 4 * x)) / 2, 1e-12);
  }
  auto e = eigen_2x2(m_of(1.0));
  EXPECT_NEAR(std::exp(e.log_lambda_plus), 4, 1e-12);
  EXPECT_NEAR(std::exp(e.log_lambda_minus), 1, 1e-12);
  e = eigen_2x2(product_log_scaled({1.0, 1.0}));
  EXPECT_NEAR(std::exp(e.log_lambda_plus), 16, 1e-12);
  EXPECT_NEAR(std::exp(e.log_lambda_minus), 1, 1e-12);
  e = eigen_2x2(product_log_scaled({0.5, 1.0}));
  EXPECT_NEAR(std::exp(e.log_lambda_plus), 7 + 2 * std::sqrt(10.0), 1e-12);
  EXPECT_NEAR(std::exp(e.log_lambda_minus), 7 - 2 * std::sqrt(10.0), 1e-12);
}

TEST(Eigen, ComplexRejected) {
  // rotation-like nonnegative matrix with complex eigenvalues does not exist,
  // but a negative discriminant can be forced through log_det
  ScaledMatrix2 m = ScaledMatrix2::from_entries(1, 1, 1, 1);
  m.log_det = std::log(1.0);  // claims det 1 with trace 2: disc 0, fine
  EXPECT_NO_THROW(eigen_2x2(m));
  m.log_det = std::log(2.0);  // disc = 4 - 8 < 0
  EXPECT_THROW(eigen_2x2(m), NumericalDomainError);
  m.log_det = std::log(1.0 + 1e-12);
  EXPECT_TRUE(eigen_2x2(m).clamped);
}

TEST(Spectral, Examples) {
  const auto r = spectral_bounds_check({1.0, 1.0});
  EXPECT_NEAR(std::exp(r.log_det_over_tr2), 16.0 / 289, 1e-14);
  EXPECT_TRUE(r.det_tr2_ok);
  EXPECT_LE(16.0 / 289, 16.0 / 81);
  RandomSource rng(30);
  const auto r30 = spectral_bounds_check(draw(rng, 30));
  EXPECT_LT(r30.ratio_vs_det_tr2_err, 0.01);
}

TEST(Spectral, RandomProductsSuite) {
  RandomSource rng(4242);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 1 + rng.below(200);
    const auto xs = draw(rng, n);
    const auto r = spectral_bounds_check(xs);
    ASSERT_TRUE(r.nonnegative);
    ASSERT_TRUE(r.det_tr2_ok) << n;
    ASSERT_TRUE(r.trace_bound_ok) << n;
    ASSERT_LT(r.det_identity_err, 1e-9);
    if (n >= 50) ASSERT_LE(std::exp(r.log_ratio / static_cast<double>(n)), 0.38854 * 1.05);
  }
}

TEST(Spectral, DetOverTraceSquaredExact) {
  RandomSource rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<Rational> xs;
    for (std::size_t i = 0; i < n; ++i) xs.push_back(Rational(8 + rng.below(9), 16));
    const auto m = product_exact(xs);
    const Rational tr = m[0] + m[3];
    const Rational det = m[0] * m[3] - m[1] * m[2];
    Rational bound = 1;
    for (std::size_t i = 0; i < n; ++i) bound *= Rational(4, 9);
    ASSERT_LE(det / (tr * tr), bound);
  }
}

TEST(TraceBound, Examples) {
  EXPECT_NEAR(std::exp(trace_lower_bound({1.0})), 5 * std::pow(2.0, -16.0 / 25), 1e-12);
  EXPECT_NEAR(std::exp(trace_lower_bound({1.0})), 3.209, 1e-3);
  EXPECT_NEAR(std::exp(trace_lower_bound({0.5, 1.0})), 20 * std::pow(2.0, -32.0 / 25), 1e-12);
  EXPECT_NEAR(std::exp(trace_lower_bound({0.5, 1.0})), 8.235, 1e-3);
  const std::vector<double> ones(100, 1.0);
  EXPECT_GE(product_log_scaled(ones).log_trace(), trace_lower_bound(ones));
  EXPECT_NEAR(quenched_gamma(), 0.38854236300641504, 1e-15);
}

TEST(Patterns, ClosedFormExamples) {
  EXPECT_EQ(e_pattern_trace(bits("0000")), 1);
  for (int k = 0; k <= 6; ++k) {
    EXPECT_EQ(e_pattern_trace(bits(std::string(k, '1') + "0")), 1 + k);
  }
  EXPECT_EQ(e_pattern_trace(bits("101")), 3);
  EXPECT_EQ(e_pattern_trace(bits("1111")), 2);
  EXPECT_EQ(alpha_blocks(bits("1101001")), 2);
}

TEST(Patterns, AllWordsAgree) {
  for (std::size_t n = 1; n <= 12; ++n) {
    std::vector<bool> a(n);
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      for (std::size_t i = 0; i < n; ++i) a[i] = (mask >> i) & 1;
      ASSERT_NO_THROW(e_pattern_trace(a));
    }
  }
}

TEST(Patterns, TraceExpansionExact) {
  RandomSource rng(6);
  for (std::size_t n = 1; n <= 12; ++n) {
    std::vector<Rational> xs;
    for (std::size_t i = 0; i < n; ++i) {
      xs.push_back(i % 5 == 4 ? Rational(0) : Rational(1 + rng.below(32), 64) + Rational(1, 2));
    }
    const auto t = trace_expansion(xs);
    ASSERT_EQ(t.trace_direct, t.trace_expanded) << n;
  }
}

TEST(Annealed, LambdaConst) {
  auto l = lambda_pm_const(2);
  EXPECT_DOUBLE_EQ(l.plus, 4);
  EXPECT_DOUBLE_EQ(l.minus, 1);
  l = lambda_pm_const(1.5);
  EXPECT_NEAR(l.plus, (4 + std::sqrt(7.0)) / 2, 1e-15);
  EXPECT_NEAR(l.minus, (4 - std::sqrt(7.0)) / 2, 1e-15);
  l = lambda_pm_const(0);
  EXPECT_DOUBLE_EQ(l.plus, 1);
  EXPECT_DOUBLE_EQ(l.minus, 0);
  EXPECT_THROW(lambda_pm_const(-1), std::invalid_argument);
}

TEST(Annealed, Bound) {
  auto b = annealed_bound(DiscreteMeasure::dirac(1.0));
  EXPECT_NEAR(b.gamma, 2, 1e-15);
  EXPECT_NEAR(b.log_ratio, std::log(4.0), 1e-14);
  b = annealed_bound(DiscreteMeasure::dirac(0.5));
  EXPECT_NEAR(b.gamma, 1.5, 1e-15);
  EXPECT_NEAR(b.log_ratio, 1.5907, 1e-4);
  EXPECT_NEAR(b.ratio, (4 + std::sqrt(7.0)) / (4 - std::sqrt(7.0)), 1e-12);
  EXPECT_THROW(annealed_bound(DiscreteMeasure::dirac(0.3)), std::invalid_argument);
}

TEST(Lyapunov, DiracOne) {
  const auto e = lyapunov_estimate(DiscreteMeasure::dirac(1.0), 200, 10, RandomSource(1));
  EXPECT_NEAR(e.L_plus, std::log(4.0), 1e-12);
  EXPECT_NEAR(e.Yn_mean, std::log(4.0), 1e-12);
  EXPECT_NEAR(e.L_minus, 0, 1e-12);
  EXPECT_EQ(e.Yn_std, 0);
}

TEST(Lyapunov, DiracHalf) {
  const auto e = lyapunov_estimate(DiscreteMeasure::dirac(0.5), 400, 4, RandomSource(1));
  EXPECT_NEAR(e.L_plus, eigen_2x2(m_of(0.5)).log_lambda_plus, 1e-3);
  EXPECT_NEAR(e.L_plus, std::log((4 + std::sqrt(7.0)) / 2), 1e-3);
}

TEST(Lyapunov, DeterminantIdentity) {
  const auto mu = DiscreteMeasure::from_atoms({{0.5, 0.3}, {0.7, 0.3}, {1.0, 0.4}});
  const auto e = lyapunov_estimate(mu, 1000, 1000, RandomSource(77));
  EXPECT_LT(e.det_check_err, 3 * e.identity_stderr);
  EXPECT_LE(e.Yn_mean, annealed_bound(mu).log_ratio + 3 * e.Yn_stderr);
}

TEST(Concentration, DeltaHasZeroSpread) {
  const auto rows = concentration_stats(DiscreteMeasure::dirac(0.75), {8, 16, 32}, 20, RandomSource(2));
  for (const auto& r : rows) EXPECT_EQ(r.Yn_std, 0);
  EXPECT_THROW(concentration_stats(DiscreteMeasure::dirac(0.75), {16, 8}, 5, RandomSource(2)),
               std::invalid_argument);
}

TEST(Concentration, StderrHalvesWithFourTimesSamples) {
  const auto mu = DiscreteMeasure::from_atoms({{0.5, 0.5}, {1.0, 0.5}});
  const auto a = lyapunov_estimate(mu, 64, 500, RandomSource(3));
  const auto b = lyapunov_estimate(mu, 64, 2000, RandomSource(4));
  EXPECT_NEAR(b.Yn_stderr / a.Yn_stderr, 0.5, 0.1);
}

TEST(Cluster, Matrices) {
  const auto f = full_tree(6);
  const auto single = cluster_matrix(f, {0}, 0);
  const double x = x_recursive(full_tree(5));
  const auto expect = product_log_scaled({x, x, 0.0});
  EXPECT_NEAR(single.log_trace(), expect.log_trace(), 1e-12);
  const NodeId mid = f.children(f.children(0)[0])[0];
  // whole tree: every factor is M(0)
  const auto small = full_tree(2);
  std::vector<NodeId> all(small.size());
  for (NodeId v = 0; v < static_cast<NodeId>(small.size()); ++v) all[v] = v;
  const auto whole = cluster_matrix(small, all, 0);
  const auto zeros = product_log_scaled(std::vector<double>(all.size() + 2, 0.0));
  EXPECT_NEAR(whole.log_trace(), zeros.log_trace(), 1e-12);
  // determinant identity
  const std::vector<NodeId> c{0, f.children(0)[0], f.children(0)[1]};
  const auto xs = slot_ratios(f, cluster_slots(f, c, 0));
  ASSERT_EQ(xs.size(), c.size() + 2);
  double expect_log_det = 0;
  for (double xi : xs) expect_log_det += 2 * std::log1p(xi);
  EXPECT_NEAR(cluster_matrix(f, c, 0).log_det, expect_log_det, 1e-9);
  EXPECT_THROW(cluster_matrix(f, {f.children(0)[0], f.children(0)[1]}, f.children(0)[0]), std::invalid_argument);
  EXPECT_EQ(slot_ratios(f, path_slots(f, 0, mid)).size(), 2u + 3);
}

TEST(Lyapunov, ZeroSpreadHasZeroStd) {
  // a constant sample with a large mean must not leak cancellation noise
  const auto e = lyapunov_estimate(DiscreteMeasure::dirac(1.0), 500, 20, RandomSource(7));
  EXPECT_LT(e.Yn_std, 1e-12);
}
