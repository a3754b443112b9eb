#pragma once

// Slow, independent reference implementations used only by the tests.

#include "sandtree/sandpile.hpp"
#include "sandtree/tree.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <string>
#include <vector>

namespace oracle {

using namespace sandtree;

// All rooted binary trees with n vertices where left and right are distinct,
// as nested strings "(L,R)" with "-" for an absent child.
inline std::vector<std::string> ordered_shapes(int n) {
  if (n == 0) return {"-"};
  std::vector<std::string> out;
  for (int left = 0; left < n; ++left) {
    for (const auto& l : ordered_shapes(left)) {
      for (const auto& r : ordered_shapes(n - 1 - left)) out.push_back("(" + l + "," + r + ")");
    }
  }
  return out;
}

// Left/right-insensitive normal form of an ordered shape string.
inline std::string unordered_form(const std::string& s, std::size_t& pos) {
  if (s[pos] == '-') {
    ++pos;
    return "";
  }
  ++pos;  // '('
  std::string l = unordered_form(s, pos);
  ++pos;  // ','
  std::string r = unordered_form(s, pos);
  ++pos;  // ')'
  std::vector<std::string> kids;
  if (!l.empty()) kids.push_back(l);
  if (!r.empty()) kids.push_back(r);
  std::sort(kids.begin(), kids.end());
  std::string out = "[";
  for (auto& k : kids) out += k;
  return out + "]";
}

inline std::size_t count_unordered_shapes(int max_vertices) {
  std::set<std::string> seen;
  for (int n = 1; n <= max_vertices; ++n) {
    for (const auto& s : ordered_shapes(n)) {
      std::size_t pos = 0;
      seen.insert(unordered_form(s, pos));
    }
  }
  return seen.size();
}

// FSC search over every nonempty subset S: forbidden iff each u in S has
// height <= number of neighbors of u inside S.
inline bool allowed_by_subsets(const TreeTopology& t, const HeightConfig& eta) {
  const std::size_t n = t.size();
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    bool forbidden = true;
    for (NodeId u = 0; u < static_cast<NodeId>(n) && forbidden; ++u) {
      if (!(mask >> u & 1)) continue;
      int inside = 0;
      for (NodeId w : t.neighbors(u)) inside += (mask >> w) & 1;
      if (eta[u] > inside) forbidden = false;
    }
    if (forbidden) return false;
  }
  return true;
}

// Explores every legal toppling order (single topplings) and collects the
// set of reachable stable outcomes.
inline std::set<std::vector<std::int64_t>> all_order_outcomes(const TreeTopology& t, const HeightConfig& eta) {
  std::set<std::vector<std::int64_t>> finals;
  std::set<std::vector<std::int64_t>> visited;
  std::function<void(std::vector<std::int64_t>)> go = [&](std::vector<std::int64_t> h) {
    if (!visited.insert(h).second) return;
    bool any = false;
    for (NodeId v = 0; v < static_cast<NodeId>(h.size()); ++v) {
      if (h[v] <= 3) continue;
      any = true;
      auto next = h;
      next[v] -= 3;
      for (NodeId w : t.neighbors(v)) ++next[w];
      go(next);
    }
    if (!any) finals.insert(h);
  };
  go(eta.heights);
  return finals;
}

// Connected vertex sets containing `origin` by brute force over subsets.
inline std::vector<std::vector<NodeId>> connected_sets_with(const TreeTopology& t, NodeId origin) {
  std::vector<std::vector<NodeId>> out;
  const std::size_t n = t.size();
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    if (!(mask >> origin & 1)) continue;
    std::vector<NodeId> set;
    for (NodeId v = 0; v < static_cast<NodeId>(n); ++v)
      if (mask >> v & 1) set.push_back(v);
    // connected iff |edges inside| = |set| - 1 (forest property)
    int edges = 0;
    for (NodeId v : set)
      for (NodeId w : t.neighbors(v))
        if (w > v && (mask >> w & 1)) ++edges;
    if (edges + 1 == static_cast<int>(set.size())) out.push_back(set);
  }
  return out;
}

// Recursive characteristic ratio in exact rationals, written directly from
// x(empty) = 0, x(leaf) = 1/2, x = (1+x1)(1+x2)/(2+x1+x2).
inline Rational ratio_of(const TreeTopology& t, NodeId v) {
  Rational x[2] = {0, 0};
  const auto& kids = t.children(v);
  for (std::size_t i = 0; i < kids.size(); ++i) x[i] = ratio_of(t, kids[i]);
  return (1 + x[0]) * (1 + x[1]) / (2 + x[0] + x[1]);
}

}  // namespace oracle
