#include "sandtree/experiments.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace sandtree;

TEST(RootClusters, CountsOnFullTrees) {
  // f(d) = (1 + f(d-1))^2 root clusters in full(d)
  std::uint64_t f = 1;
  for (int d = 1; d <= 4; ++d) {
    f = (1 + f) * (1 + f);
    std::size_t count = 0;
    EXPECT_TRUE(for_each_root_cluster(full_tree(d), 0, 1000, 1000000, [&](const std::vector<NodeId>&) { ++count; }));
    EXPECT_EQ(count, f) << d;
  }
  EXPECT_EQ(f, 458329u);
}

TEST(RootClusters, MatchEnumerationBySize) {
  RandomSource rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const TreeTopology t = sample_gw_binary(0.7, 4, rng);
    const NodeId origin = static_cast<NodeId>(rng.below(t.size()));
    std::map<std::size_t, std::set<std::vector<NodeId>>> mine;
    for_each_root_cluster(t, origin, 6, 1000000, [&](const std::vector<NodeId>& c) {
      auto s = c;
      std::sort(s.begin(), s.end());
      EXPECT_TRUE(mine[s.size()].insert(s).second);
    });
    for (std::size_t k = 1; k <= 6; ++k) {
      const auto ref = enumerate_clusters(t, origin, k, ClusterUnit::vertices);
      EXPECT_EQ(mine[k], std::set<std::vector<NodeId>>(ref.begin(), ref.end()));
    }
  }
}

TEST(RootClusters, BudgetTruncates) {
  std::size_t count = 0;
  EXPECT_FALSE(for_each_root_cluster(full_tree(3), 0, 100, 10, [&](const std::vector<NodeId>&) { ++count; }));
  EXPECT_EQ(count, 10u);
}

TEST(Report, TablesAndFormatting) {
  EXPECT_EQ(fmt17(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(fmt17(1.0 / 3.0)), 1.0 / 3.0);
  CsvTable t("x", {"a", "b"});
  t.add({1, Rational(2, 3)});
  EXPECT_THROW(t.add({1}), std::invalid_argument);
  EXPECT_EQ(t.csv(), "a,b\n1,2/3\n");
  ExperimentReport r;
  r.experiment = "demo";
  r.table("x", {"a"}).add({2.5});
  r.conclude("claim", "ref", true, 1.0, 0.5);
  const auto j = nlohmann::json::parse(r.to_json_text());
  EXPECT_EQ(j["tables"][0]["csv"], "a\n2.5\n");
  EXPECT_EQ(j["conclusions"][0]["pass"], true);
  EXPECT_EQ(j["version"], kVersion);
  EXPECT_NE(r.to_csv_text().find("# table: conclusions"), std::string::npos);
}

TEST(Stats, LinearFitExact) {
  const LinearFit f = fit_line({1, 2, 3, 4}, {3, 5, 7, 9});
  EXPECT_NEAR(f.slope, 2, 1e-12);
  EXPECT_NEAR(f.intercept, 1, 1e-12);
  EXPECT_NEAR(f.r2, 1, 1e-12);
  EXPECT_THROW(fit_line({1}, {1}), std::invalid_argument);
  const MeanStd m = mean_std({1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.std, std::sqrt(5.0 / 3.0), 1e-12);
}

TEST(Experiments, AvalancheRegressionSmall) {
  const auto reg = avalanche_cluster_regression(full_tree(3), 0, 1000000);
  EXPECT_TRUE(reg.complete);
  EXPECT_EQ(reg.clusters, 676u);
  EXPECT_NEAR(reg.fit.slope, 1, 0.15);
  // mu * lambda_+ stays within fixed bounds
  EXPECT_LT(reg.max_log_product - reg.min_log_product, 1.0);
}

TEST(Experiments, AnnealedLawSumsToOne) {
  // p = 0: a single vertex always; adding a grain topples only when height 3
  const auto law = annealed_size_law(0.0, 3, 10, 5, RandomSource(1));
  EXPECT_NEAR(law.empty_mean, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(law.mean[0], 1.0 / 3.0, 1e-15);
  EXPECT_EQ(law.mean[1], 0);
}

TEST(Experiments, ReportsAreDeterministic) {
  AvalancheParams a;
  a.tree_budget = 50;
  a.full_depth = 2;
  const auto r1 = run_avalanche_experiment(a).to_json_text();
  const auto r2 = run_avalanche_experiment(avalanche_params_from_json(nlohmann::json::parse(r1)["params"]));
  EXPECT_EQ(r1, r2.to_json_text());
  CovarianceParams c;
  c.n_max = 3;
  c.tree_budget = 3;
  c.shape_max = 4;
  c.spine_samples = 3;
  c.support_cap = 64;
  const auto c1 = run_covariance_experiment(c);
  EXPECT_EQ(c1.to_json_text(),
            run_covariance_experiment(covariance_params_from_json(c1.to_json()["params"])).to_json_text());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(c1.conclusions[i].pass) << c1.conclusions[i].claim;
}
