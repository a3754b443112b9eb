#pragma once

// Experiment drivers: covariance decay and avalanche sizes. Each returns an
// ExperimentReport whose params block is enough to regenerate it.

#include "sandtree/animals.hpp"
#include "sandtree/ratio.hpp"
#include "sandtree/report.hpp"
#include "sandtree/sandpile.hpp"
#include "sandtree/stats.hpp"
#include "sandtree/transfer.hpp"
#include "sandtree/tree.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <vector>

namespace sandtree {

// ---------------------------------------------------------------------------
// Root clusters

/// Calls visit(cluster) for every connected vertex set containing `origin`
/// with at most max_vertices vertices, stopping after `budget` sets.
/// Returns false when the budget cut the enumeration short.
inline bool for_each_root_cluster(const TreeTopology& t, NodeId origin, std::size_t max_vertices,
                                  std::size_t budget, const std::function<void(const std::vector<NodeId>&)>& visit) {
  const Orientation o = orient(t, origin);
  std::vector<NodeId> cluster{origin};
  std::vector<NodeId> frontier(o.down[origin].begin(), o.down[origin].end());
  std::size_t seen = 0;
  bool complete = true;
  // frontier[i..] are candidates; each is either skipped for good or taken,
  // in which case its children join the frontier.
  std::function<void(std::size_t)> grow = [&](std::size_t i) {
    if (!complete) return;
    if (i == frontier.size() || cluster.size() == max_vertices) {
      if (seen == budget) {
        complete = false;
        return;
      }
      ++seen;
      visit(cluster);
      return;
    }
    grow(i + 1);
    const NodeId v = frontier[i];
    cluster.push_back(v);
    const std::size_t mark = frontier.size();
    frontier.insert(frontier.end(), o.down[v].begin(), o.down[v].end());
    grow(i + 1);
    frontier.resize(mark);
    cluster.pop_back();
  };
  grow(0);
  return complete;
}

// ---------------------------------------------------------------------------
// Covariance

struct CovarianceParams {
  double p = 0.5;
  int n_max = 8;                  // longest distance considered
  std::size_t tree_budget = 100;  // sampled GW trees for the uniform bound
  std::size_t shape_max = 8;      // all rooted shapes up to this many vertices
  int depth_margin = 3;           // spine trees: generations below the spine
  std::size_t spine_samples = 100;
  std::size_t support_cap = 512;  // fixed-point measure for the annealed constant
  std::uint64_t seed = 1;
  std::size_t guard = kShapeGuard;
};

inline nlohmann::ordered_json to_json(const CovarianceParams& c) {
  return {{"p", c.p},
          {"n_max", c.n_max},
          {"tree_budget", c.tree_budget},
          {"shape_max", c.shape_max},
          {"depth_margin", c.depth_margin},
          {"spine_samples", c.spine_samples},
          {"support_cap", c.support_cap},
          {"seed", c.seed},
          {"guard", c.guard}};
}

inline CovarianceParams covariance_params_from_json(const nlohmann::json& j) {
  CovarianceParams c;
  c.p = j.value("p", c.p);
  c.n_max = j.value("n_max", c.n_max);
  c.tree_budget = j.value("tree_budget", c.tree_budget);
  c.shape_max = j.value("shape_max", c.shape_max);
  c.depth_margin = j.value("depth_margin", c.depth_margin);
  c.spine_samples = j.value("spine_samples", c.spine_samples);
  c.support_cap = j.value("support_cap", c.support_cap);
  c.seed = j.value("seed", c.seed);
  c.guard = j.value("guard", c.guard);
  return c;
}

namespace detail {

inline NodeId leftmost_at_depth(const TreeTopology& t, int depth) {
  NodeId v = t.root();
  for (int i = 0; i < depth; ++i) v = t.children(v).at(0);
  return v;
}

}  // namespace detail

inline ExperimentReport run_covariance_experiment(const CovarianceParams& params) {
  detail::check_probability(params.p);
  if (params.n_max < 2) throw std::invalid_argument("n_max must be at least 2");
  ExperimentReport rep;
  rep.experiment = "covariance";
  rep.params = to_json(params);
  const RandomSource rng(params.seed);
  const double gamma = quenched_gamma();

  // (a) descending path from the root of full(n_max)
  {
    const TreeTopology full = full_tree(params.n_max);
    auto& tab = rep.table("full_tree_decay", {"n", "cov", "abs_cov", "log_abs_cov", "ratio_to_previous"});
    std::vector<double> ns, logs;
    double prev = 0;
    for (int n = 1; n <= params.n_max; ++n) {
      const Rational cov = exact_covariance(full, full.root(), detail::leftmost_at_depth(full, n));
      const double a = std::abs(to_double(cov));
      tab.add({n, cov, a, std::log(a), n > 1 ? CsvTable::Cell(a / prev) : CsvTable::Cell("")});
      ns.push_back(n);
      logs.push_back(std::log(a));
      prev = a;
    }
    const LinearFit fit = fit_line(ns, logs);
    rep.table("full_tree_fit", {"slope", "intercept", "r2", "minus_log4"})
        .add({fit.slope, fit.intercept, fit.r2, -std::log(4.0)});
    rep.conclude("log|Cov| slope along a path in a full tree <= -log 4 + 0.2", "largest eigenvalue 4^n on the full tree",
                 fit.slope <= -std::log(4.0) + 0.2, fit.slope, -std::log(4.0) + 0.2);
  }

  // (b) uniform bound over small shapes and sampled trees
  {
    std::size_t shape_max = params.shape_max;
    if (shape_max > params.guard) {
      rep.notes.push_back("shape enumeration truncated at " + std::to_string(params.guard) + " vertices (requested " +
                          std::to_string(shape_max) + ")");
      shape_max = params.guard;
    }
    struct PairCov {
      int n;
      double abs_cov;
      double lambda_ratio;  // lambda_-/lambda_+ of the path matrix
    };
    std::vector<PairCov> pairs;
    bool variances_positive = true;
    auto scan = [&](const TreeTopology& t, bool all_pairs) {
      const std::size_t N = t.size();
      for (NodeId u = 0; u < static_cast<NodeId>(N); ++u) {
        if (!all_pairs && u != t.root()) continue;
        for (NodeId v = u; v < static_cast<NodeId>(N); ++v) {
          const int n = distance(t, u, v);
          if (n > params.n_max) continue;
          const double c = to_double(exact_covariance(t, u, v));
          if (n == 0) {
            if (!(c > 0)) variances_positive = false;
            continue;
          }
          const EigenPair e = eigen_2x2(path_matrix(t, u, v));
          pairs.push_back({n, std::abs(c), std::exp(e.log_lambda_minus - e.log_lambda_plus)});
        }
      }
    };
    std::size_t shapes = 0;
    for (const auto& t : enumerate_rooted_shapes(shape_max, params.guard)) {
      scan(t, true);
      ++shapes;
    }
    const RandomSource trees = rng.substream(1);
    for (std::size_t i = 0; i < params.tree_budget; ++i) {
      RandomSource sub = trees.substream(i);
      scan(sample_gw_binary(params.p, params.n_max, sub), false);
    }
    double c1 = 0;
    for (const auto& q : pairs) {
      if (q.n == 1) c1 = std::max(c1, q.abs_cov / gamma);
    }
    auto& tab = rep.table("uniform_bound", {"n", "pairs", "max_abs_cov", "bound_C_gamma_n", "min_cov_over_lambda_ratio",
                                            "max_cov_over_lambda_ratio"});
    double worst = 0;
    for (int n = 1; n <= params.n_max; ++n) {
      std::size_t count = 0;
      double mx = 0, lo = std::numeric_limits<double>::infinity(), hi = 0;
      for (const auto& q : pairs) {
        if (q.n != n) continue;
        ++count;
        mx = std::max(mx, q.abs_cov);
        lo = std::min(lo, q.abs_cov / q.lambda_ratio);
        hi = std::max(hi, q.abs_cov / q.lambda_ratio);
      }
      if (count == 0) continue;
      const double bound = c1 * std::pow(gamma, n);
      worst = std::max(worst, mx / bound);
      tab.add({n, count, mx, bound, lo, hi});
    }
    rep.table("uniform_bound_setup", {"shapes", "sampled_trees", "gamma", "C_calibrated_at_n1"})
        .add({shapes, params.tree_budget, gamma, c1});
    rep.conclude("|Cov| <= C gamma^n for all pairs, C calibrated at n = 1", "uniform covariance bound", worst <= 1.0,
                 worst, 1.0);
    rep.conclude("variance at u = v is positive", "covariance at distance 0", variances_positive,
                 variances_positive ? 1.0 : 0.0, 0.0);
  }

  // (c) annealed mean over spine-conditioned trees
  {
    const FixedPointResult mu = fixed_point_measure(params.p, params.support_cap);
    const AnnealedBound ab = annealed_bound(mu.measure);
    auto& tab = rep.table("annealed_spine", {"n", "samples", "mean_abs_cov", "stderr", "rate"});
    std::vector<double> ns, rates;
    const RandomSource spines = rng.substream(2);
    for (int n = 1; n <= params.n_max; ++n) {
      std::vector<double> covs;
      covs.reserve(params.spine_samples);
      for (std::size_t i = 0; i < params.spine_samples; ++i) {
        RandomSource sub = spines.substream(static_cast<std::uint64_t>(n) * 1000003u + i);
        const SpineTree s = build_spine_conditioned(params.p, n, params.depth_margin, sub);
        covs.push_back(std::abs(to_double(exact_covariance(s.tree, s.origin, s.endpoint))));
      }
      const MeanStd m = mean_std(covs);
      tab.add({n, params.spine_samples, m.mean, m.stderr_of_mean, -std::log(m.mean) / n});
      // the claim is about the limit: fit the upper half of the range only
      if (2 * n >= params.n_max) {
        ns.push_back(n);
        rates.push_back(-std::log(m.mean));
      }
    }
    const LinearFit fit = fit_line(ns, rates);
    rep.table("annealed_constant", {"gamma_annealed", "log_Lambda_ratio", "Lambda_ratio", "fitted_rate", "r2"})
        .add({ab.gamma, ab.log_ratio, ab.ratio, fit.slope, fit.r2});
    rep.conclude("annealed decay rate of E|Cov| <= log(Lambda+/Lambda-)", "annealed covariance bound",
                 fit.slope <= ab.log_ratio, fit.slope, ab.log_ratio);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Avalanches

struct AvalancheParams {
  double p = 0.4;
  int size_min = 2;  // fit window, in edges
  int size_max = 8;
  std::size_t tree_budget = 20000;
  int max_gen = 40;     // depth cutoff of the sampled trees
  int full_depth = 4;   // regression tree full(full_depth)
  std::size_t cluster_budget = 500000;
  std::uint64_t seed = 1;
};

inline nlohmann::ordered_json to_json(const AvalancheParams& a) {
  return {{"p", a.p},
          {"size_min", a.size_min},
          {"size_max", a.size_max},
          {"tree_budget", a.tree_budget},
          {"max_gen", a.max_gen},
          {"full_depth", a.full_depth},
          {"cluster_budget", a.cluster_budget},
          {"seed", a.seed}};
}

inline AvalancheParams avalanche_params_from_json(const nlohmann::json& j) {
  AvalancheParams a;
  a.p = j.value("p", a.p);
  a.size_min = j.value("size_min", a.size_min);
  a.size_max = j.value("size_max", a.size_max);
  a.tree_budget = j.value("tree_budget", a.tree_budget);
  a.max_gen = j.value("max_gen", a.max_gen);
  a.full_depth = j.value("full_depth", a.full_depth);
  a.cluster_budget = j.value("cluster_budget", a.cluster_budget);
  a.seed = j.value("seed", a.seed);
  return a;
}

struct ClusterRegression {
  std::size_t clusters = 0;
  bool complete = true;
  LinearFit fit;
  double min_log_product = 0;  // log(mu * lambda_+): the two-sided constants
  double max_log_product = 0;
  std::map<std::size_t, std::pair<std::size_t, std::pair<double, double>>> by_size;  // sums of (y, x)
};

/// log mu(Av = C) against -log lambda_+(M(C)) over the root clusters of t.
inline ClusterRegression avalanche_cluster_regression(const TreeTopology& t, NodeId origin, std::size_t budget) {
  const Orientation o = orient(t, t.root());
  const BigInt total = count_allowed(t, o, std::vector<HeightMask>(t.size(), kAnyHeight));
  // ratio of the subtree at `nb` hanging away from `owner`, per directed edge
  std::map<std::pair<NodeId, NodeId>, double> hanging;
  for (NodeId v = 0; v < static_cast<NodeId>(t.size()); ++v) {
    for (NodeId s : t.neighbors(v)) hanging[{v, s}] = ratio_hanging(t, s, v);
  }
  ClusterRegression out;
  std::vector<double> xs, ys;
  out.min_log_product = std::numeric_limits<double>::infinity();
  out.max_log_product = -std::numeric_limits<double>::infinity();
  out.complete = for_each_root_cluster(t, origin, t.size(), budget, [&](const std::vector<NodeId>& c) {
    std::vector<double> ratios;
    for (const Slot& s : cluster_slots(t, c, origin)) ratios.push_back(s.absent() ? 0.0 : hanging.at({s.owner, s.neighbor}));
    const double log_lambda = eigen_2x2(product_log_scaled(ratios)).log_lambda_plus;
    const double log_mu = log_rational(avalanche_cluster_probability(t, o, c, origin, total));
    xs.push_back(-log_lambda);
    ys.push_back(log_mu);
    out.min_log_product = std::min(out.min_log_product, log_mu + log_lambda);
    out.max_log_product = std::max(out.max_log_product, log_mu + log_lambda);
    auto& slot = out.by_size[c.size()];
    ++slot.first;
    slot.second.first += log_mu;
    slot.second.second += -log_lambda;
  });
  out.clusters = xs.size();
  out.fit = fit_line(xs, ys);
  return out;
}

struct AnnealedSizeLaw {
  std::vector<double> mean;    // index = avalanche size in edges; entry 0 is a single toppling
  std::vector<double> stderr_of_mean;
  double empty_mean = 0;       // no toppling at all
  std::size_t trees = 0;
  std::size_t reached_cutoff = 0;
};

/// Tree-averaged exact avalanche size law at the root of GW(p) trees.
inline AnnealedSizeLaw annealed_size_law(double p, int size_max, std::size_t trees, int max_gen,
                                         const RandomSource& rng) {
  AnnealedSizeLaw out;
  out.trees = trees;
  const std::size_t slots = static_cast<std::size_t>(size_max) + 1;
  std::vector<std::vector<double>> samples(slots);
  double empty = 0;
  for (std::size_t i = 0; i < trees; ++i) {
    RandomSource sub = rng.substream(i);
    const TreeTopology t = sample_gw_binary(p, max_gen, sub);
    if (height(t) == max_gen) ++out.reached_cutoff;
    const AvalancheSizeLaw law = avalanche_size_law(t, t.root(), slots);
    empty += to_double(law.probability[0]);
    for (std::size_t e = 0; e < slots; ++e) samples[e].push_back(to_double(law.probability[e + 1]));
  }
  out.empty_mean = empty / static_cast<double>(trees);
  for (const auto& s : samples) {
    const MeanStd m = mean_std(s);
    out.mean.push_back(m.mean);
    out.stderr_of_mean.push_back(m.stderr_of_mean);
  }
  return out;
}

inline ExperimentReport run_avalanche_experiment(const AvalancheParams& params) {
  detail::check_probability(params.p);
  if (params.size_min < 0 || params.size_max < params.size_min + 1) throw std::invalid_argument("bad size window");
  if (params.full_depth < 0) throw std::invalid_argument("full_depth must be nonnegative");
  ExperimentReport rep;
  rep.experiment = "avalanche";
  rep.params = to_json(params);
  const RandomSource rng(params.seed);

  // (a) exact law and cluster regression on full(full_depth)
  {
    const TreeTopology full = full_tree(params.full_depth);
    const AvalancheSizeLaw law = avalanche_size_law(full, full.root(), full.size());
    auto& tab = rep.table("full_tree_size_law", {"vertices", "edges", "probability", "probability_float"});
    Rational sum = law.beyond;
    for (std::size_t k = 0; k < law.probability.size(); ++k) {
      sum += law.probability[k];
      tab.add({k, k == 0 ? std::string("none") : std::to_string(k - 1), law.probability[k],
               to_double(law.probability[k])});
    }
    rep.conclude("P(no toppling) + sum of size probabilities = 1 exactly", "avalanche law normalization", sum == 1,
                 to_double(sum), 0.0);

    const ClusterRegression reg = avalanche_cluster_regression(full, full.root(), params.cluster_budget);
    if (!reg.complete) {
      rep.notes.push_back("cluster regression truncated after " + std::to_string(reg.clusters) + " clusters");
    }
    auto& by = rep.table("cluster_regression_by_size", {"vertices", "clusters", "mean_log_mu", "mean_neg_log_lambda"});
    for (const auto& [size, acc] : reg.by_size) {
      const double c = static_cast<double>(acc.first);
      by.add({size, acc.first, acc.second.first / c, acc.second.second / c});
    }
    rep.table("cluster_regression", {"clusters", "slope", "intercept", "r2", "min_log_mu_lambda", "max_log_mu_lambda"})
        .add({reg.clusters, reg.fit.slope, reg.fit.intercept, reg.fit.r2, reg.min_log_product, reg.max_log_product});
    rep.conclude("slope of log mu(Av = C) on -log lambda_+(M(C)) is 1 +- 0.15", "avalanche probability vs eigenvalue",
                 std::abs(reg.fit.slope - 1) <= 0.15, reg.fit.slope, 0.15);
  }

  // (b) annealed size law
  {
    const AnnealedSizeLaw law = annealed_size_law(params.p, params.size_max, params.tree_budget, params.max_gen,
                                                  rng.substream(1));
    if (law.reached_cutoff > 0) {
      rep.notes.push_back(std::to_string(law.reached_cutoff) + " sampled trees reached the depth cutoff");
    }
    const double rate = std::pow(2.0, 16.0 / 25.0) * (params.p + std::sqrt(params.p)) / 2;
    auto& tab = rep.table("annealed_size_law", {"edges", "vertices", "mean_probability", "stderr", "bound_shape",
                                                "ratio_to_bound_shape"});
    std::vector<double> ns, logs;
    double C = 0;
    for (int n = 0; n <= params.size_max; ++n) {
      const double m = law.mean[static_cast<std::size_t>(n)];
      const double shape = std::pow(rate, n);
      tab.add({n, n + 1, m, law.stderr_of_mean[static_cast<std::size_t>(n)], shape, m / shape});
      if (n >= 1) C = std::max(C, m / shape);
      if (n >= params.size_min && m > 0) {
        ns.push_back(n);
        logs.push_back(std::log(m));
      }
    }
    const LinearFit fit = ns.size() >= 2 ? fit_line(ns, logs) : LinearFit{};
    rep.table("annealed_fit", {"trees", "empty_probability", "slope", "r2", "bound_rate", "C_calibrated"})
        .add({law.trees, law.empty_mean, fit.slope, fit.r2, rate, C});
    rep.conclude("annealed size law decays: log-linear slope < 0", "annealed avalanche decay", fit.slope < 0, fit.slope,
                 0.0);
    rep.conclude("annealed size law is log-linear: R^2 > 0.95", "annealed avalanche decay", fit.r2 > 0.95, fit.r2,
                 0.95);
  }

  // (c) thresholds
  {
    const Thresholds th = threshold_solve();
    rep.table("thresholds", {"p_star", "p_binomial_star", "residual"}).add({th.p_star, th.p_binomial_star, th.residual});
    rep.conclude("p_star = 0.54511 +- 1e-4", "branching-tree threshold", std::abs(th.p_star - 0.54511) <= 1e-4,
                 th.p_star, 1e-4);
    rep.conclude("binomial threshold 2^(-16/25) = 0.641713 +- 1e-6", "binomial-tree threshold",
                 std::abs(th.p_binomial_star - 0.641713) <= 1e-6, th.p_binomial_star, 1e-6);
  }
  return rep;
}

}  // namespace sandtree
