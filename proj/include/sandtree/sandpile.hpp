#pragma once

#include "sandtree/errors.hpp"
#include "sandtree/exact.hpp"
#include "sandtree/rng.hpp"
#include "sandtree/tree.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace sandtree {

/// Integer heights indexed by node id. Stable iff every height is 1, 2 or 3.
struct HeightConfig {
  std::vector<std::int64_t> heights;

  HeightConfig() = default;
  explicit HeightConfig(std::vector<std::int64_t> h) : heights(std::move(h)) {}
  HeightConfig(std::size_t n, std::int64_t h) : heights(n, h) {}

  std::size_t size() const noexcept { return heights.size(); }
  std::int64_t operator[](NodeId v) const { return heights.at(static_cast<std::size_t>(v)); }
  std::int64_t& operator[](NodeId v) { return heights.at(static_cast<std::size_t>(v)); }

  bool stable() const noexcept {
    for (auto h : heights) {
      if (h < 1 || h > 3) return false;
    }
    return true;
  }

  friend bool operator==(const HeightConfig&, const HeightConfig&) = default;
  friend auto operator<=>(const HeightConfig&, const HeightConfig&) = default;
};

inline constexpr std::size_t kEnumerationGuard = 12;

namespace detail {

inline void check_config(const TreeTopology& t, const HeightConfig& eta) {
  if (eta.size() != t.size()) throw std::invalid_argument("height configuration does not match tree size");
  for (auto h : eta.heights) {
    if (h < 1) throw std::invalid_argument("heights must be positive");
  }
}

inline void check_guard(const TreeTopology& t, std::size_t guard) {
  if (t.size() > guard) throw GuardError("configuration enumeration over 3^|T| states", t.size(), guard);
}

// Calls fn(config) for all 3^n stable configurations, odometer order
// (node 0 varies fastest).
template <class Fn>
void for_each_stable(std::size_t n, Fn&& fn) {
  HeightConfig eta(n, 1);
  while (true) {
    fn(static_cast<const HeightConfig&>(eta));
    std::size_t i = 0;
    while (i < n && eta.heights[i] == 3) eta.heights[i++] = 1;
    if (i == n) return;
    ++eta.heights[i];
  }
}

}  // namespace detail

// Dense toppling matrix: 3 on the diagonal, -1 between neighbors.
inline std::vector<std::vector<int>> toppling_matrix(const TreeTopology& t) {
  std::vector<std::vector<int>> delta(t.size(), std::vector<int>(t.size(), 0));
  for (NodeId u = 0; u < static_cast<NodeId>(t.size()); ++u) {
    delta[u][u] = 3;
    for (NodeId v : t.neighbors(u)) delta[u][v] = -1;
  }
  return delta;
}

// Fraction-free (Bareiss) determinant of the toppling matrix.
inline BigInt toppling_determinant(const TreeTopology& t) {
  const std::size_t n = t.size();
  if (n == 0) return 1;
  std::vector<std::vector<BigInt>> a(n, std::vector<BigInt>(n));
  const auto delta = toppling_matrix(t);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[i][j] = delta[i][j];
  }
  BigInt prev = 1;
  int sign = 1;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (a[k][k] == 0) {
      std::size_t swap = k + 1;
      while (swap < n && a[swap][k] == 0) ++swap;
      if (swap == n) return 0;
      std::swap(a[k], a[swap]);
      sign = -sign;
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      for (std::size_t j = k + 1; j < n; ++j) {
        a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
      }
    }
    prev = a[k][k];
  }
  return sign * a[n - 1][n - 1];
}

struct StabilizationOutcome {
  HeightConfig final;
  std::vector<std::int64_t> topple_counts;
  std::vector<NodeId> avalanche;  // toppled vertices, ascending
};

/// Legal topplings until stable, driven by a FIFO queue of unstable
/// vertices. Terminates on every finite tree since leaves dissipate grains.
inline StabilizationOutcome stabilize(const TreeTopology& t, HeightConfig eta) {
  detail::check_config(t, eta);
  StabilizationOutcome out;
  out.topple_counts.assign(t.size(), 0);
  std::deque<NodeId> queue;
  std::vector<char> queued(t.size(), 0);
  for (NodeId v = 0; v < static_cast<NodeId>(t.size()); ++v) {
    if (eta[v] > 3) {
      queue.push_back(v);
      queued[v] = 1;
    }
  }
  while (!queue.empty()) {
    const NodeId v = queue.front();
    queue.pop_front();
    queued[v] = 0;
    // Topple as often as currently legal in one go; the result is the same
    // as repeated single topplings.
    const std::int64_t k = (eta[v] - 1) / 3;
    if (k <= 0) continue;
    eta[v] -= 3 * k;
    out.topple_counts[v] += k;
    for (NodeId w : t.neighbors(v)) {
      eta[w] += k;
      if (eta[w] > 3 && !queued[w]) {
        queue.push_back(w);
        queued[w] = 1;
      }
    }
  }
  out.final = std::move(eta);
  for (NodeId v = 0; v < static_cast<NodeId>(t.size()); ++v) {
    if (out.topple_counts[v] > 0) out.avalanche.push_back(v);
  }
  return out;
}

/// Addition operator: one grain at `u`, then stabilization.
inline StabilizationOutcome add_grain(const TreeTopology& t, const HeightConfig& eta, NodeId u) {
  detail::check_config(t, eta);
  if (!eta.stable()) throw std::invalid_argument("addition operator needs a stable configuration");
  if (!t.contains(u)) throw std::invalid_argument("vertex not in tree");
  HeightConfig next = eta;
  ++next[u];
  return stabilize(t, std::move(next));
}

/// Burning test: repeatedly remove vertices whose height exceeds their number
/// of remaining neighbors; allowed iff everything burns. With
/// `phantom_parent_of` set, that vertex has one extra neighbor of height 1
/// which can only burn after it (the weak/strong test).
inline bool is_allowed(const TreeTopology& t, const HeightConfig& eta, NodeId phantom_parent_of = kNoNode) {
  detail::check_config(t, eta);
  const std::size_t n = t.size();
  std::vector<int> remaining(n);
  std::vector<char> burnt(n, 0);
  std::vector<NodeId> work;
  for (NodeId v = 0; v < static_cast<NodeId>(n); ++v) {
    remaining[v] = t.degree(v) + (v == phantom_parent_of ? 1 : 0);
    if (eta[v] > remaining[v]) work.push_back(v);
  }
  std::size_t count = 0;
  while (!work.empty()) {
    const NodeId v = work.back();
    work.pop_back();
    if (burnt[v]) continue;
    burnt[v] = 1;
    ++count;
    for (NodeId w : t.neighbors(v)) {
      if (!burnt[w] && eta[w] > --remaining[w]) work.push_back(w);
    }
  }
  return count == n;
}

struct WeakStrong {
  BigInt weak;
  BigInt strong;

  // Characteristic ratio weak/strong.
  Rational ratio() const { return Rational(weak, strong); }
  BigInt total() const { return weak + strong; }
};

/// Classifies the allowed configurations of a rooted tree by exhaustive
/// enumeration: strongly allowed iff still allowed after attaching a parent
/// of height 1 to the root.
inline WeakStrong count_weak_strong(const TreeTopology& t, std::size_t guard = kEnumerationGuard) {
  if (t.empty()) throw std::invalid_argument("weak/strong counts need a nonempty tree");
  if (!t.rooted()) throw std::invalid_argument("weak/strong counts need a rooted tree");
  detail::check_guard(t, guard);
  std::uint64_t weak = 0;
  std::uint64_t strong = 0;
  detail::for_each_stable(t.size(), [&](const HeightConfig& eta) {
    if (!is_allowed(t, eta)) return;
    if (is_allowed(t, eta, t.root())) {
      ++strong;
    } else {
      ++weak;
    }
  });
  return {BigInt(weak), BigInt(strong)};
}

struct RecurrentSet {
  BigInt count;
  std::vector<HeightConfig> configs;  // odometer order
};

inline RecurrentSet enumerate_recurrent(const TreeTopology& t, std::size_t guard = kEnumerationGuard) {
  detail::check_guard(t, guard);
  RecurrentSet out;
  detail::for_each_stable(t.size(), [&](const HeightConfig& eta) {
    if (is_allowed(t, eta)) out.configs.push_back(eta);
  });
  out.count = out.configs.size();
  return out;
}

// ---------------------------------------------------------------------------
// Exact counting by dynamic programming over the tree.
//
// Seen from its parent, a subtree's configuration is strong (burns with the
// parent unburnt), weak (burns only once the parent has burnt) or forbidden.
// A vertex of height h with w weak children is strong iff h > 1 + w and weak
// iff w < h <= 1 + w; the top vertex burns iff h > w. Forbidden children
// forbid the whole configuration, so only strong/weak counts are carried.

using HeightMask = std::uint8_t;  // bit h-1 set <=> height h permitted
inline constexpr HeightMask kAnyHeight = 0b111;

constexpr HeightMask height_bit(int h) { return static_cast<HeightMask>(1u << (h - 1)); }

/// The tree seen from `top`: children point away from it, `postorder` lists
/// every vertex after all of its children.
struct Orientation {
  NodeId top = kNoNode;
  std::vector<std::vector<NodeId>> down;
  std::vector<NodeId> postorder;
};

inline Orientation orient(const TreeTopology& t, NodeId top) {
  if (!t.contains(top)) throw std::invalid_argument("orientation vertex not in tree");
  Orientation o;
  o.top = top;
  o.down.assign(t.size(), {});
  std::vector<NodeId> pre{top};
  std::vector<NodeId> stack{top};
  std::vector<NodeId> pred(t.size(), kNoNode);
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    for (NodeId s : t.slots(v)) {
      if (s != kNoNode && s != pred[v]) {
        pred[s] = v;
        o.down[v].push_back(s);
        stack.push_back(s);
        pre.push_back(s);
      }
    }
  }
  o.postorder.assign(pre.rbegin(), pre.rend());
  return o;
}

namespace detail {

template <class Count>
struct StrongWeak {
  Count strong{};
  Count weak{};
};

// dist[w] = number of child assignments with w weak children.
template <class Count>
StrongWeak<Count> classify(const std::vector<Count>& dist, HeightMask mask) {
  StrongWeak<Count> r{Count(0), Count(0)};
  for (int h = 1; h <= 3; ++h) {
    if (!(mask & height_bit(h))) continue;
    for (std::size_t w = 0; w < dist.size(); ++w) {
      if (dist[w] == Count(0)) continue;
      const int iw = static_cast<int>(w);
      if (h > 1 + iw) {
        r.strong += dist[w];
      } else if (h > iw) {
        r.weak += dist[w];
      }
    }
  }
  return r;
}

template <class Count>
Count top_count(const std::vector<Count>& dist, HeightMask mask) {
  Count total(0);
  for (int h = 1; h <= 3; ++h) {
    if (!(mask & height_bit(h))) continue;
    for (std::size_t w = 0; w < dist.size() && static_cast<int>(w) < h; ++w) total += dist[w];
  }
  return total;
}

template <class Count>
std::vector<Count> child_distribution(const std::vector<NodeId>& kids, const std::vector<StrongWeak<Count>>& sw) {
  std::vector<Count> dist{Count(1)};
  for (NodeId c : kids) {
    std::vector<Count> next(dist.size() + 1, Count(0));
    for (std::size_t w = 0; w < dist.size(); ++w) {
      next[w] += dist[w] * sw[c].strong;
      next[w + 1] += dist[w] * sw[c].weak;
    }
    dist = std::move(next);
  }
  return dist;
}

template <class Count>
std::vector<StrongWeak<Count>> strong_weak_all(const Orientation& o, const std::vector<HeightMask>& masks) {
  std::vector<StrongWeak<Count>> sw(o.down.size());
  for (NodeId v : o.postorder) sw[v] = classify(child_distribution(o.down[v], sw), masks[v]);
  return sw;
}

template <class Count>
Count count_allowed_as(const Orientation& o, const std::vector<HeightMask>& masks) {
  const auto sw = strong_weak_all<Count>(o, masks);
  return top_count(child_distribution(o.down[o.top], sw), masks[o.top]);
}

inline BigInt to_big(unsigned __int128 x) {
  BigInt hi = static_cast<std::uint64_t>(x >> 64);
  return (hi << 64) + static_cast<std::uint64_t>(x);
}

}  // namespace detail

/// Number of allowed (recurrent) configurations whose height at each vertex v
/// is permitted by masks[v].
inline BigInt count_allowed(const TreeTopology& t, const Orientation& o, const std::vector<HeightMask>& masks) {
  if (masks.size() != t.size()) throw std::invalid_argument("one height mask per vertex required");
  if (t.empty()) return 1;
  // 3^80 < 2^127: small trees take the fixed-width path.
  if (t.size() <= 80) return detail::to_big(detail::count_allowed_as<unsigned __int128>(o, masks));
  return detail::count_allowed_as<BigInt>(o, masks);
}

inline BigInt count_allowed(const TreeTopology& t, const std::vector<HeightMask>& masks) {
  if (t.empty()) return 1;
  return count_allowed(t, orient(t, t.root()), masks);
}

inline BigInt count_allowed(const TreeTopology& t) {
  return count_allowed(t, std::vector<HeightMask>(t.size(), kAnyHeight));
}

/// Weak/strong counts of a rooted tree computed by the tree recursion
/// rather than by enumeration.
inline WeakStrong weak_strong_dp(const TreeTopology& t) {
  if (t.empty() || !t.rooted()) throw std::invalid_argument("weak/strong counts need a nonempty rooted tree");
  const Orientation o = orient(t, t.root());
  const auto sw = detail::strong_weak_all<BigInt>(o, std::vector<HeightMask>(t.size(), kAnyHeight));
  return {sw[t.root()].weak, sw[t.root()].strong};
}

/// table[i-1][j-1] = mu_T(eta_u = i, eta_v = j) under the uniform measure on
/// recurrent configurations.
struct JointHeightTable {
  std::array<std::array<Rational, 3>, 3> p;

  Rational mean_u() const {
    Rational m = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m += (i + 1) * p[i][j];
    return m;
  }
  Rational mean_v() const {
    Rational m = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m += (j + 1) * p[i][j];
    return m;
  }
  Rational covariance() const {
    Rational uv = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) uv += (i + 1) * (j + 1) * p[i][j];
    return uv - mean_u() * mean_v();
  }
  Rational total() const {
    Rational s = 0;
    for (const auto& row : p)
      for (const auto& q : row) s += q;
    return s;
  }
};

inline JointHeightTable exact_joint_height(const TreeTopology& t, NodeId u, NodeId v) {
  if (!t.contains(u) || !t.contains(v)) throw std::invalid_argument("vertex not in tree");
  const Orientation o = orient(t, t.root());
  std::vector<HeightMask> masks(t.size(), kAnyHeight);
  const BigInt total = count_allowed(t, o, masks);
  JointHeightTable table;
  for (int i = 1; i <= 3; ++i) {
    for (int j = 1; j <= 3; ++j) {
      if (u == v && i != j) {
        table.p[i - 1][j - 1] = 0;
        continue;
      }
      masks[u] = height_bit(i);
      masks[v] = height_bit(j);
      table.p[i - 1][j - 1] = Rational(count_allowed(t, o, masks), total);
      masks[u] = masks[v] = kAnyHeight;
    }
  }
  return table;
}

inline Rational exact_covariance(const TreeTopology& t, NodeId u, NodeId v) {
  return exact_joint_height(t, u, v).covariance();
}

// ---------------------------------------------------------------------------
// Avalanches

/// Exact avalanche law at `origin` by enumerating recurrent configurations
/// and stabilizing each after one added grain.
struct AvalancheLaw {
  BigInt recurrent_count;
  std::map<std::vector<NodeId>, Rational> by_cluster;  // nonempty avalanches
  std::map<std::size_t, Rational> by_vertices;         // includes size 0
  std::map<std::size_t, Rational> by_edges;            // nonempty only: |C| - 1
  Rational empty_probability;
};

inline AvalancheLaw exact_avalanche_law(const TreeTopology& t, NodeId origin, std::size_t guard = kEnumerationGuard) {
  if (!t.contains(origin)) throw std::invalid_argument("origin not in tree");
  detail::check_guard(t, guard);
  std::map<std::vector<NodeId>, std::uint64_t> counts;
  std::uint64_t total = 0;
  detail::for_each_stable(t.size(), [&](const HeightConfig& eta) {
    if (!is_allowed(t, eta)) return;
    ++total;
    ++counts[add_grain(t, eta, origin).avalanche];
  });
  AvalancheLaw law;
  law.recurrent_count = total;
  law.empty_probability = 0;
  for (const auto& [cluster, c] : counts) {
    const Rational q = Rational(BigInt(c), BigInt(total));
    law.by_vertices[cluster.size()] += q;
    if (cluster.empty()) {
      law.empty_probability = q;
    } else {
      law.by_cluster[cluster] = q;
      law.by_edges[cluster.size() - 1] += q;
    }
  }
  return law;
}

/// mu_T(Av(origin) = cluster) without enumeration. On recurrent
/// configurations of a tree the toppled set is exactly the connected
/// component of height-3 vertices containing the origin, so the event is
/// "height 3 on the cluster, height 1 or 2 on its outer boundary".
inline Rational avalanche_cluster_probability(const TreeTopology& t, const Orientation& o,
                                              const std::vector<NodeId>& cluster, NodeId origin,
                                              const BigInt& recurrent_count) {
  std::vector<HeightMask> masks(t.size(), kAnyHeight);
  for (const Slot& s : cluster_slots(t, cluster, origin)) {
    if (!s.absent()) masks[s.neighbor] = height_bit(1) | height_bit(2);
  }
  for (NodeId v : cluster) masks[v] = height_bit(3);
  return Rational(count_allowed(t, o, masks), recurrent_count);
}

inline Rational avalanche_cluster_probability(const TreeTopology& t, const std::vector<NodeId>& cluster,
                                              NodeId origin) {
  const Orientation o = orient(t, t.root());
  return avalanche_cluster_probability(t, o, cluster, origin, count_allowed(t, o, std::vector<HeightMask>(t.size(), kAnyHeight)));
}

/// Distribution of |Av(origin)| in vertices, exact, from a generating-
/// function version of the counting recursion. probability[k] is the
/// probability of exactly k toppled vertices (k = 0 is the empty avalanche)
/// for k <= max_size; `beyond` collects larger avalanches.
struct AvalancheSizeLaw {
  BigInt recurrent_count;
  std::vector<Rational> probability;
  Rational beyond;
};

inline AvalancheSizeLaw avalanche_size_law(const TreeTopology& t, NodeId origin, std::size_t max_size) {
  if (!t.contains(origin)) throw std::invalid_argument("origin not in tree");
  using Poly = std::vector<BigInt>;  // coefficient k <-> k toppled vertices
  const std::size_t deg = max_size + 1;
  auto add = [](Poly& a, const Poly& b) {
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
  };
  auto mul = [deg](const Poly& a, const Poly& b) {
    Poly r(deg, 0);
    for (std::size_t i = 0; i < deg; ++i) {
      if (a[i] == 0) continue;
      for (std::size_t j = 0; i + j < deg; ++j) r[i + j] += a[i] * b[j];
    }
    return r;
  };
  auto constant = [deg](const BigInt& c) {
    Poly r(deg, 0);
    r[0] = c;
    return r;
  };

  const Orientation o = orient(t, origin);
  const std::size_t n = t.size();
  // free: vertex unconstrained, not in the cluster; boundary: heights 1-2,
  // parent in cluster; inside: height 3, in cluster.
  std::vector<detail::StrongWeak<BigInt>> free_sw(n), boundary_sw(n);
  std::vector<Poly> in_strong(n), in_weak(n);
  for (NodeId v : o.postorder) {
    const auto& kids = o.down[v];
    const auto dist_free = detail::child_distribution(kids, free_sw);
    free_sw[v] = detail::classify(dist_free, kAnyHeight);
    boundary_sw[v] = detail::classify(dist_free, height_bit(1) | height_bit(2));
    // Children of a cluster vertex are either inside or on the boundary.
    std::vector<Poly> dist{constant(1)};
    for (NodeId c : kids) {
      Poly s = in_strong[c];
      s[0] += boundary_sw[c].strong;
      Poly w = in_weak[c];
      w[0] += boundary_sw[c].weak;
      std::vector<Poly> next(dist.size() + 1, Poly(deg, 0));
      for (std::size_t k = 0; k < dist.size(); ++k) {
        add(next[k], mul(dist[k], s));
        add(next[k + 1], mul(dist[k], w));
      }
      dist = std::move(next);
    }
    // Height 3: strong iff w <= 1, weak iff w == 2; shift by one vertex.
    Poly strong(deg, 0), weak(deg, 0);
    for (std::size_t w = 0; w < dist.size(); ++w) {
      if (w <= 1) add(strong, dist[w]);
      else if (w == 2) add(weak, dist[w]);
    }
    in_strong[v] = Poly(deg, 0);
    in_weak[v] = Poly(deg, 0);
    for (std::size_t k = 0; k + 1 < deg; ++k) {
      in_strong[v][k + 1] = strong[k];
      in_weak[v][k + 1] = weak[k];
    }
    if (v == origin) {
      // Top vertex: burns iff h > w. Height 3 gives a nonempty avalanche.
      Poly top(deg, 0);
      for (std::size_t w = 0; w < dist.size() && w < 3; ++w) add(top, dist[w]);
      AvalancheSizeLaw law;
      law.recurrent_count = count_allowed(t, o, std::vector<HeightMask>(n, kAnyHeight));
      law.probability.assign(deg, Rational(0));
      const BigInt empty = detail::top_count(dist_free, height_bit(1) | height_bit(2));
      law.probability[0] = Rational(empty, law.recurrent_count);
      Rational covered = law.probability[0];
      for (std::size_t k = 1; k < deg; ++k) {
        law.probability[k] = Rational(top[k - 1], law.recurrent_count);
        covered += law.probability[k];
      }
      law.probability.resize(max_size + 1);
      law.beyond = 1 - covered;
      // Avalanches larger than max_size fell off the truncated polynomial;
      // recover them from the total.
      return law;
    }
  }
  throw std::logic_error("origin missing from orientation");
}

// ---------------------------------------------------------------------------
// Markov dynamics

/// Runs the addition chain from the maximal configuration (all heights 3,
/// always recurrent): `burn_in` additions at uniform vertices, then `steps`
/// more, calling visit(state) after each post-burn-in step. Approximate
/// sampling only.
template <class Visitor>
HeightConfig run_markov_chain(const TreeTopology& t, std::size_t steps, std::size_t burn_in, RandomSource& rng,
                              Visitor&& visit) {
  if (t.empty()) throw std::invalid_argument("Markov chain needs a nonempty tree");
  HeightConfig state(t.size(), 3);
  for (std::size_t i = 0; i < burn_in + steps; ++i) {
    const auto v = static_cast<NodeId>(rng.below(t.size()));
    state = add_grain(t, state, v).final;
    if (i >= burn_in) visit(static_cast<const HeightConfig&>(state));
  }
  return state;
}

inline HeightConfig markov_chain_sample(const TreeTopology& t, std::size_t steps, std::size_t burn_in,
                                        RandomSource& rng) {
  return run_markov_chain(t, steps, burn_in, rng, [](const HeightConfig&) {});
}

}  // namespace sandtree
