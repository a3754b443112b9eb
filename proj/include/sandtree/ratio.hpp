#pragma once

#include "sandtree/errors.hpp"
#include "sandtree/exact.hpp"
#include "sandtree/rng.hpp"
#include "sandtree/tree.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace sandtree {

// f(u, v) = (1+u)(1+v)/(2+u+v): characteristic ratio of a vertex whose
// subtrees have ratios u and v (0 for an absent subtree).
template <class T>
T f_combine(const T& u, const T& v) {
  if (!(u >= T(0) && u <= T(1) && v >= T(0) && v <= T(1))) {
    throw std::invalid_argument("f_combine arguments must lie in [0, 1]");
  }
  return (1 + u) * (1 + v) / (2 + (u + v));  // bracketed so f(u,v) == f(v,u) in floats
}

inline double f_combine(double u, double v) { return f_combine<double>(u, v); }

namespace detail {

// Vertices of the component of `top` away from `from`, parents before
// children.
inline std::vector<std::pair<NodeId, NodeId>> preorder_away(const TreeTopology& t, NodeId top, NodeId from) {
  std::vector<std::pair<NodeId, NodeId>> order;  // (vertex, predecessor)
  std::vector<std::pair<NodeId, NodeId>> stack{{top, from}};
  while (!stack.empty()) {
    auto [v, pred] = stack.back();
    stack.pop_back();
    order.emplace_back(v, pred);
    const auto s = t.slots(v);
    for (int i = 2; i >= 0; --i) {
      if (s[i] != kNoNode && s[i] != pred) stack.emplace_back(s[i], v);
    }
  }
  return order;
}

template <class T, class Check>
T ratio_away(const TreeTopology& t, NodeId top, NodeId from, Check&& check) {
  if (top == kNoNode) return T(0);
  const auto order = preorder_away(t, top, from);
  std::vector<T> x(t.size(), T(0));
  // two child slots per vertex, filled while walking back up
  std::vector<std::array<T, 2>> kid(t.size(), {T(0), T(0)});
  std::vector<int> filled(t.size(), 0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto [v, pred] = *it;
    x[v] = f_combine<T>(kid[v][0], kid[v][1]);
    check(x[v]);
    if (pred != kNoNode && v != top) kid[pred][filled[pred]++] = x[v];
  }
  return x[top];
}

}  // namespace detail

/// Characteristic ratio of the subtree hanging at `top` when the edge to
/// `from` is removed (from == kNoNode: the tree below `top` in its own
/// orientation). kNoNode as top is the empty tree, ratio 0.
inline double ratio_hanging(const TreeTopology& t, NodeId top, NodeId from) {
  return detail::ratio_away<double>(t, top, from, [](const double&) {});
}

/// x(T) in floating point. Empty tree: 0. A rootless tree combines its two
/// halves, f(x(A), x(B)).
inline double x_recursive(const TreeTopology& t) {
  if (t.empty()) return 0.0;
  if (t.rooted()) return ratio_hanging(t, t.root(), kNoNode);
  const NodeId b = *t.join_partner();
  return f_combine(ratio_hanging(t, t.root(), b), ratio_hanging(t, b, t.root()));
}

inline constexpr std::size_t kExactRatioBits = 4096;

/// x(T) in exact rationals, or nullopt once a numerator or denominator
/// exceeds `max_bits` (deep trees; fall back to x_recursive).
inline std::optional<Rational> x_exact(const TreeTopology& t, std::size_t max_bits = kExactRatioBits) {
  if (t.empty()) return Rational(0);
  struct TooLarge {};
  const auto check = [max_bits](const Rational& q) {
    using boost::multiprecision::denominator;
    if (boost::multiprecision::msb(denominator(q)) + 1 > max_bits) throw TooLarge{};
  };
  try {
    if (t.rooted()) return detail::ratio_away<Rational>(t, t.root(), kNoNode, check);
    const NodeId b = *t.join_partner();
    const Rational xa = detail::ratio_away<Rational>(t, t.root(), b, check);
    const Rational xb = detail::ratio_away<Rational>(t, b, t.root(), check);
    return f_combine<Rational>(xa, xb);
  } catch (const TooLarge&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Deterministic families in closed form

// Limit of single_branch(n): the positive root of x = f(1/2, x).
inline double branch_limit() { return (-1.0 + std::sqrt(7.0)) / 2.0; }

// Limit of backbone(T, n) for an attachment with ratio xT.
inline double backbone_ratio(double xT) {
  if (!(xT >= 0.5 && xT <= 1.0)) throw std::invalid_argument("attachment ratio must lie in [1/2, 1]");
  return 0.5 * (-1.0 + std::sqrt(5.0 + 4.0 * xT));
}

// Infinite single branch with the leaf at level n replaced by a tree of ratio
// xT: phi^n(f(xT, x_inf)) with phi(x) = f(1/2, x).
inline double perturbed_ratio(double xT, int n) {
  if (!(xT >= 0.0 && xT <= 1.0)) throw std::invalid_argument("attachment ratio must lie in [0, 1]");
  if (n < 0) throw std::invalid_argument("level must be nonnegative");
  double x = f_combine(xT, branch_limit());
  for (int i = 0; i < n; ++i) x = f_combine(0.5, x);
  return x;
}

struct BranchLimit {};
struct BackboneLimit {
  double xT = 0.5;
};
struct PerturbedLimit {
  double xT = 0.5;
  int n = 0;
};
using ClosedFamily = std::variant<BranchLimit, BackboneLimit, PerturbedLimit>;

inline double x_family_closed(const ClosedFamily& family) {
  return std::visit(
      [](const auto& f) -> double {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, BranchLimit>) {
          return branch_limit();
        } else if constexpr (std::is_same_v<F, BackboneLimit>) {
          return backbone_ratio(f.xT);
        } else {
          return perturbed_ratio(f.xT, f.n);
        }
      },
      family);
}

// ---------------------------------------------------------------------------
// Finitely supported measures on [0, 1]

class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;

  static DiscreteMeasure dirac(double x) { return from_atoms({{x, 1.0}}); }

  /// Sorts, merges coincident atoms and drops zero weights. Weights must be
  /// nonnegative and sum to 1 within 1e-9 (they are renormalized).
  static DiscreteMeasure from_atoms(std::vector<std::pair<double, double>> atoms) {
    double total = 0;
    for (const auto& [x, w] : atoms) {
      if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("measure support must lie in [0, 1]");
      if (!(w >= 0.0)) throw std::invalid_argument("measure weights must be nonnegative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("measure weights must sum to 1");
    std::sort(atoms.begin(), atoms.end());
    DiscreteMeasure m;
    for (const auto& [x, w] : atoms) {
      if (w == 0.0) continue;
      if (!m.support_.empty() && x - m.support_.back() <= 1e-15) {
        m.weights_.back() += w;
      } else {
        m.support_.push_back(x);
        m.weights_.push_back(w);
      }
    }
    for (auto& w : m.weights_) w /= total;
    return m;
  }

  const std::vector<double>& support() const noexcept { return support_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  std::size_t size() const noexcept { return support_.size(); }

  template <class Fn>
  double expectation(Fn&& fn) const {
    double s = 0;
    for (std::size_t i = 0; i < size(); ++i) s += weights_[i] * fn(support_[i]);
    return s;
  }
  double mean() const {
    return expectation([](double x) { return x; });
  }
  double mass_at_least(double x) const {
    double s = 0;
    for (std::size_t i = 0; i < size(); ++i)
      if (support_[i] >= x) s += weights_[i];
    return s;
  }

  // Inverse-CDF sampling.
  double sample(RandomSource& rng) const {
    double u = rng.uniform();
    for (std::size_t i = 0; i < size(); ++i) {
      if (u < weights_[i]) return support_[i];
      u -= weights_[i];
    }
    return support_.back();
  }

  // "support,weight" lines, 17 significant digits.
  std::string to_csv() const {
    std::ostringstream os;
    os << std::setprecision(17) << "support,weight\n";
    for (std::size_t i = 0; i < size(); ++i) os << support_[i] << ',' << weights_[i] << '\n';
    return os.str();
  }

  static DiscreteMeasure from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::vector<std::pair<double, double>> atoms;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#' || line.rfind("support", 0) == 0) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw ParseError("expected 'support,weight'", "line " + std::to_string(lineno));
      try {
        atoms.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
      } catch (const std::exception&) {
        throw ParseError("bad number", "line " + std::to_string(lineno));
      }
    }
    if (atoms.empty()) throw ParseError("empty measure", "line " + std::to_string(lineno));
    return from_atoms(std::move(atoms));
  }

 private:
  std::vector<double> support_;
  std::vector<double> weights_;
};

/// Exact W1 between measures on the line: integral of |F_mu - F_nu|.
inline double wasserstein1(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  const auto& xs = mu.support();
  const auto& ys = nu.support();
  std::size_t i = 0, j = 0;
  double fm = 0, fn = 0, last = 0, w = 0;
  bool started = false;
  while (i < xs.size() || j < ys.size()) {
    const double x = (j == ys.size() || (i < xs.size() && xs[i] <= ys[j])) ? xs[i] : ys[j];
    if (started) w += std::abs(fm - fn) * (x - last);
    while (i < xs.size() && xs[i] == x) fm += mu.weights()[i++];
    while (j < ys.size() && ys[j] == x) fn += nu.weights()[j++];
    last = x;
    started = true;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Operators on measures

struct MeasureStep {
  DiscreteMeasure measure;
  // Upper bound on W1 between the exact image and the stored one.
  double compression_error = 0;
};

namespace detail {

struct WeightedAtoms {
  std::vector<std::pair<double, double>> atoms;

  void add(double x, double w) {
    if (w > 0) atoms.emplace_back(x, w);
  }
};

// Exact when the image has at most `cap` atoms. Otherwise atoms go into
// 16*cap fine buckets on [1/2, 1] and neighboring buckets are pooled into
// bins closed at mass 2/cap or width 1/cap (so at most about cap bins), each
// replaced by its conditional mean. Moving an atom within its bin costs at
// most the bin's width, so the reported error sum(mass * width) bounds W1.
template <class Emit>
MeasureStep compress(std::size_t exact_count, std::size_t cap, Emit&& emit) {
  if (cap < 1) throw std::invalid_argument("support cap must be positive");
  if (exact_count <= cap) {
    WeightedAtoms out;
    emit([&](double x, double w) { out.add(x, w); });
    return {DiscreteMeasure::from_atoms(std::move(out.atoms)), 0.0};
  }
  const std::size_t K = 16 * cap;
  struct Bucket {
    double mass = 0, moment = 0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
  };
  std::vector<Bucket> buckets(K);
  double total = 0;
  emit([&](double x, double w) {
    if (w <= 0) return;
    const double pos = std::clamp((x - 0.5) * 2.0, 0.0, 1.0);
    auto k = static_cast<std::size_t>(pos * static_cast<double>(K));
    if (k >= K) k = K - 1;
    Bucket& b = buckets[k];
    b.mass += w;
    b.moment += w * x;
    b.lo = std::min(b.lo, x);
    b.hi = std::max(b.hi, x);
    total += w;
  });
  const double target = 2.0 * total / static_cast<double>(cap);
  const double max_width = 1.0 / static_cast<double>(cap);
  std::vector<std::pair<double, double>> atoms;
  double error = 0;
  Bucket bin;
  auto flush = [&] {
    if (bin.mass <= 0) return;
    atoms.emplace_back(std::clamp(bin.moment / bin.mass, 0.0, 1.0), bin.mass);
    error += bin.mass * (bin.hi - bin.lo);
    bin = Bucket{};
  };
  for (const Bucket& b : buckets) {
    if (b.mass <= 0) continue;
    bin.mass += b.mass;
    bin.moment += b.moment;
    bin.lo = std::min(bin.lo, b.lo);
    bin.hi = std::max(bin.hi, b.hi);
    if (bin.mass >= target || bin.hi - bin.lo >= max_width) flush();
  }
  flush();
  return {DiscreteMeasure::from_atoms(std::move(atoms)), error};
}

}  // namespace detail

inline constexpr std::size_t kDefaultSupportCap = 2048;

/// One step of the two-generation operator
///   F(mu) = (1-p) d_{1/2} + p(1-p)^2 d_{3/4} + 2p^2(1-p) f(., 1/2)#mu + p^3 f#(mu x mu).
inline MeasureStep apply_F_step(const DiscreteMeasure& mu, double p, std::size_t cap = kDefaultSupportCap) {
  detail::check_probability(p);
  const double q = 1.0 - p;
  const auto& xs = mu.support();
  const auto& ws = mu.weights();
  const std::size_t n = mu.size();
  const std::size_t count = 2 + (p > 0 ? n + n * n : 0);
  return detail::compress(count, cap, [&](auto&& add) {
    add(0.5, q);
    add(0.75, p * q * q);
    if (p == 0) return;
    const double mixed = 2 * p * p * q;
    for (std::size_t i = 0; i < n; ++i) add(f_combine(xs[i], 0.5), mixed * ws[i]);
    const double p3 = p * p * p;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) add(f_combine(xs[i], xs[j]), p3 * ws[i] * ws[j]);
    }
  });
}

inline DiscreteMeasure apply_F(const DiscreteMeasure& mu, double p, std::size_t cap = kDefaultSupportCap) {
  return apply_F_step(mu, p, cap).measure;
}

/// One generation of the branching recursion: G(mu) = (1-p) d_{1/2} + p f#(mu x mu).
inline MeasureStep apply_branching_step(const DiscreteMeasure& mu, double p, std::size_t cap = kDefaultSupportCap) {
  detail::check_probability(p);
  const auto& xs = mu.support();
  const auto& ws = mu.weights();
  const std::size_t n = mu.size();
  return detail::compress(1 + (p > 0 ? n * n : 0), cap, [&](auto&& add) {
    add(0.5, 1.0 - p);
    if (p == 0) return;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) add(f_combine(xs[i], xs[j]), p * ws[i] * ws[j]);
    }
  });
}

/// Lipschitz bound of F in W1 on measures over [1/2, 1]: the x -> f(x, 1/2)
/// term contracts by 1/4 and the tensor term by at most 8/9.
inline double contraction_factor(double p) {
  return p * p * (1 - p) / 2 + 8.0 * p * p * p / 9.0;
}

struct FixedPointResult {
  DiscreteMeasure measure;
  std::size_t iterations = 0;
  double final_w1 = 0;  // W1 between the last two iterates
  double max_step_compression = 0;
  // W1 distance to the true fixed point attributable to compression:
  // max per-step error / (1 - contraction).
  double compression_budget = 0;
  // Bound on W1(measure, mu*) from the last step and the compression error.
  double distance_bound = 0;
  double contraction = 0;
  // Stopped at the compression noise floor rather than at `tol`.
  bool compression_limited = false;
};

namespace detail {

template <class Step>
FixedPointResult iterate_to_fixed_point(Step&& step_fn, double contraction, double tol, std::size_t max_iter) {
  if (!(tol > 0)) throw std::invalid_argument("tolerance must be positive");
  FixedPointResult r;
  r.contraction = contraction;
  DiscreteMeasure mu = DiscreteMeasure::dirac(0.5);
  for (std::size_t k = 1; k <= max_iter; ++k) {
    MeasureStep step = step_fn(mu);
    r.max_step_compression = std::max(r.max_step_compression, step.compression_error);
    r.final_w1 = wasserstein1(step.measure, mu);
    r.iterations = k;
    const double last_error = step.compression_error;
    mu = std::move(step.measure);
    const double floor = 2.0 * r.max_step_compression / (1.0 - contraction);
    const bool done = r.final_w1 < tol;
    const bool floored = !done && r.max_step_compression > 0 && r.final_w1 <= floor &&
                         std::pow(contraction, static_cast<double>(k)) < tol;
    if (done || floored) {
      r.compression_limited = floored;
      r.measure = std::move(mu);
      r.compression_budget = r.max_step_compression / (1.0 - contraction);
      // W1(mu_{k-1}, F mu_{k-1}) <= final_w1 + last step's error; contraction
      // turns that into a distance to the fixed point, plus one step to mu_k.
      r.distance_bound = r.final_w1 + (r.final_w1 + last_error) / (1.0 - contraction);
      return r;
    }
  }
  throw ConvergenceError("fixed point iteration did not reach tolerance", max_iter, r.final_w1);
}

}  // namespace detail

/// Iterates F from d_{1/2}. Stops when successive iterates are within `tol`
/// in W1, or, once compression is active, when they are within the noise
/// floor 2e/(1-c) that compression alone can sustain and c^k < tol (the
/// uncompressed iteration would have converged by then).
inline FixedPointResult fixed_point_measure(double p, std::size_t support_cap = kDefaultSupportCap,
                                            double tol = 1e-10, std::size_t max_iter = 500) {
  detail::check_probability(p);
  return detail::iterate_to_fixed_point([&](const DiscreteMeasure& mu) { return apply_F_step(mu, p, support_cap); },
                                        std::min(contraction_factor(p), 8.0 / 9.0), tol, max_iter);
}

/// Same iteration for the one-generation branching operator G. On [1/2, 1]
/// each partial derivative of f is at most 16/49, so G contracts by 32p/49.
inline FixedPointResult branching_fixed_point(double p, std::size_t support_cap = kDefaultSupportCap,
                                              double tol = 1e-10, std::size_t max_iter = 500) {
  detail::check_probability(p);
  return detail::iterate_to_fixed_point(
      [&](const DiscreteMeasure& mu) { return apply_branching_step(mu, p, support_cap); }, 32.0 * p / 49.0, tol,
      max_iter);
}

// ---------------------------------------------------------------------------
// Sampling

/// x of a GW(p) tree with `max_gen` generations, drawn without building the
/// tree. Consumes the generator exactly like sample_gw_binary, so both agree
/// for equal seeds.
inline double sample_ratio_gw(double p, int max_gen, RandomSource& rng) {
  detail::check_probability(p);
  detail::check_generations(max_gen);
  std::function<double(int)> go = [&](int left) -> double {
    if (left == 0 || !rng.bernoulli(p)) return 0.5;
    const double a = go(left - 1);
    const double b = go(left - 1);
    return f_combine(a, b);
  };
  return go(max_gen);
}

/// Empirical law of x over `samples` GW(p, max_gen) trees; sample i uses
/// rng.substream(i).
inline DiscreteMeasure sample_ratio_direct(double p, int max_gen, std::size_t samples, const RandomSource& rng) {
  if (samples < 1) throw std::invalid_argument("need at least one sample");
  std::vector<std::pair<double, double>> atoms;
  atoms.reserve(samples);
  const double w = 1.0 / static_cast<double>(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    RandomSource sub = rng.substream(i);
    atoms.emplace_back(sample_ratio_gw(p, max_gen, sub), w);
  }
  return DiscreteMeasure::from_atoms(std::move(atoms));
}

}  // namespace sandtree
