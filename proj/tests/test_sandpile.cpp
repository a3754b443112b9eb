#include "oracles.hpp"

#include "sandtree/sandpile.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

using namespace sandtree;

namespace {

TreeTopology chain(int n) {
  TreeTopology t = TreeTopology::point();
  NodeId v = 0;
  for (int i = 1; i < n; ++i) v = t.add_child(v);
  return t;
}

HeightConfig hc(std::initializer_list<std::int64_t> h) { return HeightConfig(std::vector<std::int64_t>(h)); }

std::vector<HeightConfig> all_stable(std::size_t n) {
  std::vector<HeightConfig> out;
  detail::for_each_stable(n, [&](const HeightConfig& e) { out.push_back(e); });
  return out;
}

}  // namespace

TEST(Stabilize, SingleVertex) {
  const auto t = TreeTopology::point();
  auto a = stabilize(t, hc({4}));
  EXPECT_EQ(a.final, hc({1}));
  EXPECT_EQ(a.topple_counts[0], 1);
  auto b = stabilize(t, hc({7}));
  EXPECT_EQ(b.final, hc({1}));
  EXPECT_EQ(b.topple_counts[0], 2);
  EXPECT_THROW(stabilize(t, hc({0})), std::invalid_argument);
}

TEST(Stabilize, CherryCascadeMatchesEveryOrder) {
  const auto t = full_tree(1);
  const auto out = stabilize(t, hc({4, 3, 3}));
  const auto finals = oracle::all_order_outcomes(t, hc({4, 3, 3}));
  ASSERT_EQ(finals.size(), 1u);
  EXPECT_EQ(out.final.heights, *finals.begin());
  EXPECT_EQ(out.avalanche.size(), 3u);
  EXPECT_TRUE(out.final.stable());
}

TEST(Stabilize, OrderIndependenceAndConservation) {
  RandomSource rng(5);
  for (const auto& t : enumerate_rooted_shapes(5)) {
    const auto delta = toppling_matrix(t);
    for (int trial = 0; trial < 20; ++trial) {
      HeightConfig eta(t.size(), 1);
      for (auto& h : eta.heights) h = 1 + static_cast<std::int64_t>(rng.below(7));
      const auto out = stabilize(t, eta);
      ASSERT_TRUE(out.final.stable());
      const auto finals = oracle::all_order_outcomes(t, eta);
      ASSERT_EQ(finals.size(), 1u);
      EXPECT_EQ(out.final.heights, *finals.begin());
      for (std::size_t u = 0; u < t.size(); ++u) {
        std::int64_t moved = 0;
        for (std::size_t v = 0; v < t.size(); ++v) moved += delta[v][u] * out.topple_counts[v];
        EXPECT_EQ(out.final.heights[u], eta.heights[u] - moved);
      }
    }
  }
}

TEST(Add, SingleVertex) {
  const auto t = TreeTopology::point();
  auto a = add_grain(t, hc({3}), 0);
  EXPECT_EQ(a.final, hc({1}));
  EXPECT_EQ(a.avalanche, std::vector<NodeId>{0});
  auto b = add_grain(t, hc({1}), 0);
  EXPECT_EQ(b.final, hc({2}));
  EXPECT_TRUE(b.avalanche.empty());
  EXPECT_THROW(add_grain(t, hc({4}), 0), std::invalid_argument);
}

TEST(Add, Commute) {
  for (const auto& t : enumerate_rooted_shapes(5)) {
    for (const auto& eta : all_stable(t.size())) {
      for (NodeId u = 0; u < static_cast<NodeId>(t.size()); ++u) {
        for (NodeId v = u + 1; v < static_cast<NodeId>(t.size()); ++v) {
          const auto uv = add_grain(t, add_grain(t, eta, u).final, v).final;
          const auto vu = add_grain(t, add_grain(t, eta, v).final, u).final;
          ASSERT_EQ(uv, vu);
        }
      }
    }
  }
}

TEST(Allowed, Examples) {
  const auto c2 = chain(2);
  EXPECT_FALSE(is_allowed(c2, hc({1, 1})));
  int allowed = 0;
  for (const auto& eta : all_stable(2)) allowed += is_allowed(c2, eta);
  EXPECT_EQ(allowed, 8);
  for (int h = 1; h <= 3; ++h) EXPECT_TRUE(is_allowed(TreeTopology::point(), hc({h})));
}

TEST(Allowed, BurningMatchesSubsetSearch) {
  for (const auto& t : enumerate_rooted_shapes(5)) {
    for (const auto& eta : all_stable(t.size())) {
      ASSERT_EQ(is_allowed(t, eta), oracle::allowed_by_subsets(t, eta));
    }
  }
}

TEST(Recurrent, CountsAndDeterminant) {
  EXPECT_EQ(enumerate_recurrent(TreeTopology::point()).count, 3);
  EXPECT_EQ(enumerate_recurrent(chain(2)).count, 8);
  EXPECT_EQ(enumerate_recurrent(full_tree(1)).count, 21);
  EXPECT_EQ(toppling_determinant(full_tree(1)), 21);
  for (const auto& t : enumerate_rooted_shapes(10)) {
    const BigInt det = toppling_determinant(t);
    ASSERT_EQ(count_allowed(t), det);
    if (t.size() <= 8) ASSERT_EQ(enumerate_recurrent(t).count, det);
  }
  EXPECT_THROW(enumerate_recurrent(full_tree(3)), GuardError);
}

TEST(Recurrent, JoinedTrees) {
  for (const auto& a : enumerate_rooted_shapes(4)) {
    for (const auto& b : enumerate_rooted_shapes(3)) {
      const auto j = join(a, b);
      EXPECT_EQ(enumerate_recurrent(j).count, toppling_determinant(j));
      EXPECT_EQ(count_allowed(j), toppling_determinant(j));
    }
  }
}

TEST(Recurrent, LargeTreeDeterminant) {
  // beyond the fixed-width range
  const auto t = full_tree(7);
  EXPECT_EQ(count_allowed(t), toppling_determinant(t));
}

TEST(WeakStrong, Examples) {
  auto a = count_weak_strong(TreeTopology::point());
  EXPECT_EQ(a.weak, 1);
  EXPECT_EQ(a.strong, 2);
  auto b = count_weak_strong(chain(2));
  EXPECT_EQ(b.weak, 3);
  EXPECT_EQ(b.strong, 5);
  EXPECT_EQ(b.ratio(), Rational(3, 5));
  auto c = count_weak_strong(full_tree(1));
  EXPECT_EQ(c.weak, 9);
  EXPECT_EQ(c.strong, 12);
  EXPECT_EQ(c.ratio(), Rational(3, 4));
  EXPECT_THROW(count_weak_strong(full_tree(3)), GuardError);
}

TEST(WeakStrong, RatioRecursionAndDp) {
  for (const auto& t : enumerate_rooted_shapes(8)) {
    const auto e = count_weak_strong(t);
    EXPECT_EQ(e.total(), toppling_determinant(t));
    const auto d = weak_strong_dp(t);
    EXPECT_EQ(d.weak, e.weak);
    EXPECT_EQ(d.strong, e.strong);
    EXPECT_EQ(e.ratio(), oracle::ratio_of(t, t.root()));
  }
}

TEST(JointHeight, MatchesEnumeration) {
  for (const auto& t : enumerate_rooted_shapes(6)) {
    const auto rec = enumerate_recurrent(t);
    for (NodeId u = 0; u < static_cast<NodeId>(t.size()); ++u) {
      for (NodeId v = 0; v < static_cast<NodeId>(t.size()); ++v) {
        std::array<std::array<std::uint64_t, 3>, 3> c{};
        for (const auto& eta : rec.configs) ++c[eta[u] - 1][eta[v] - 1];
        const auto table = exact_joint_height(t, u, v);
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) ASSERT_EQ(table.p[i][j], Rational(BigInt(c[i][j]), rec.count));
        ASSERT_EQ(table.total(), 1);
      }
    }
  }
}

TEST(JointHeight, DiagonalIsSingleSite) {
  const auto t = full_tree(3);
  const auto d = exact_joint_height(t, 4, 4);
  const auto other = exact_joint_height(t, 4, 0);
  for (int i = 0; i < 3; ++i) {
    Rational marginal = 0;
    for (int j = 0; j < 3; ++j) marginal += other.p[i][j];
    EXPECT_EQ(d.p[i][i], marginal);
    for (int j = 0; j < 3; ++j)
      if (i != j) EXPECT_EQ(d.p[i][j], 0);
  }
  EXPECT_EQ(d.total(), 1);
}

TEST(JointHeight, CovarianceDecayOnFullTree) {
  const auto t = full_tree(3);
  const NodeId u = 0;
  const NodeId v1 = t.children(0)[1];
  const NodeId v2 = t.children(v1)[1];
  const double c1 = std::abs(to_double(exact_covariance(t, u, v1)));
  const double c2 = std::abs(to_double(exact_covariance(t, u, v2)));
  const double gamma = 0.389;
  const double C = c1 / gamma;
  EXPECT_LE(c2, C * gamma * gamma * (1 + 1e-12));
}

TEST(Avalanche, SingleVertex) {
  const auto law = exact_avalanche_law(TreeTopology::point(), 0);
  EXPECT_EQ(law.by_cluster.at({0}), Rational(1, 3));
  EXPECT_EQ(law.empty_probability, Rational(2, 3));
}

TEST(Avalanche, SumsToOne) {
  for (const auto& t : enumerate_rooted_shapes(6)) {
    const auto law = exact_avalanche_law(t, 0);
    Rational s = law.empty_probability;
    for (const auto& [c, q] : law.by_cluster) s += q;
    EXPECT_EQ(s, 1);
    Rational sv = 0;
    for (const auto& [k, q] : law.by_vertices) sv += q;
    EXPECT_EQ(sv, 1);
    Rational se = law.empty_probability;
    for (const auto& [k, q] : law.by_edges) se += q;
    EXPECT_EQ(se, 1);
  }
}

TEST(Avalanche, DpMatchesEnumeration) {
  std::vector<TreeTopology> trees = enumerate_rooted_shapes(7);
  trees.push_back(full_tree(2));
  trees.push_back(join(full_tree(1), chain(3)));
  for (const auto& t : trees) {
    for (NodeId o = 0; o < static_cast<NodeId>(t.size()); ++o) {
      const auto law = exact_avalanche_law(t, o);
      for (const auto& [cluster, q] : law.by_cluster) {
        ASSERT_EQ(avalanche_cluster_probability(t, cluster, o), q);
      }
      // every connected set not seen has probability zero in both
      for (const auto& c : oracle::connected_sets_with(t, o)) {
        if (!law.by_cluster.count(c)) ASSERT_EQ(avalanche_cluster_probability(t, c, o), 0);
      }
      const auto sizes = avalanche_size_law(t, o, t.size());
      for (std::size_t k = 0; k <= t.size(); ++k) {
        const Rational expect = law.by_vertices.count(k) ? law.by_vertices.at(k) : Rational(0);
        ASSERT_EQ(sizes.probability[k], expect);
      }
      ASSERT_EQ(sizes.beyond, 0);
      const auto cut = avalanche_size_law(t, o, 1);
      Rational tail = 0;
      for (const auto& [k, q] : law.by_vertices)
        if (k > 1) tail += q;
      ASSERT_EQ(cut.beyond, tail);
    }
  }
}

TEST(Avalanche, ToppledSetIsHeightThreeCluster) {
  for (const auto& t : enumerate_rooted_shapes(7)) {
    for (const auto& eta : enumerate_recurrent(t).configs) {
      const auto av = add_grain(t, eta, 0).avalanche;
      std::vector<NodeId> expect;
      if (eta[0] == 3) {
        std::vector<NodeId> stack{0};
        std::vector<char> seen(t.size(), 0);
        seen[0] = 1;
        while (!stack.empty()) {
          NodeId w = stack.back();
          stack.pop_back();
          expect.push_back(w);
          for (NodeId x : t.neighbors(w))
            if (!seen[x] && eta[x] == 3) {
              seen[x] = 1;
              stack.push_back(x);
            }
        }
        std::sort(expect.begin(), expect.end());
      }
      ASSERT_EQ(av, expect);
    }
  }
}

TEST(Markov, StaysStableAndDeterministic) {
  const auto t = full_tree(2);
  RandomSource a(3), b(3);
  std::vector<HeightConfig> ta, tb;
  run_markov_chain(t, 200, 0, a, [&](const HeightConfig& s) {
    EXPECT_TRUE(s.stable());
    ta.push_back(s);
  });
  run_markov_chain(t, 200, 0, b, [&](const HeightConfig& s) { tb.push_back(s); });
  EXPECT_EQ(ta, tb);
}

TEST(Markov, UniformOnRecurrentChain2) {
  const auto t = chain(2);
  RandomSource rng(17);
  std::map<HeightConfig, std::size_t> counts;
  const std::size_t steps = 100000;
  run_markov_chain(t, steps, 1000, rng, [&](const HeightConfig& s) { ++counts[s]; });
  const auto rec = enumerate_recurrent(t);
  EXPECT_EQ(counts.size(), rec.configs.size());
  // Successive states are correlated; 3 sigma of the i.i.d. error, inflated
  // by the chain's correlation time (mixing on 2 vertices is fast).
  const double p = 1.0 / 8;
  const double sigma = std::sqrt(p * (1 - p) / steps);
  for (const auto& eta : rec.configs) {
    EXPECT_NEAR(static_cast<double>(counts[eta]) / steps, p, 3 * sigma * 2) << eta[0] << eta[1];
  }
}
