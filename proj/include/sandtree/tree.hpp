#pragma once

#include "sandtree/errors.hpp"
#include "sandtree/rng.hpp"

#include <algorithm>
#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace sandtree {

using NodeId = int;
inline constexpr NodeId kNoNode = -1;

/// Finite tree in which every vertex has at most two children.
///
/// A rooted tree has exactly one parentless node, `root()`. A rootless tree
/// is two rooted trees whose roots are joined by a marked edge: `root()` and
/// `join_partner()` are then both parentless and adjacent. The empty tree
/// (no nodes) is a valid value and stands for an absent subtree.
///
/// Every vertex is viewed as a vertex of the rootless binary tree, so it owns
/// three neighbor *slots*: slot 0 points up (parent, or the join partner for
/// the two roots of a rootless tree), slots 1 and 2 are the first and second
/// child. Absent neighbors are `kNoNode`.
class TreeTopology {
 public:
  struct Node {
    NodeId parent = kNoNode;
    std::vector<NodeId> children;
  };

  TreeTopology() = default;

  static TreeTopology point() {
    TreeTopology t;
    t.nodes_.emplace_back();
    t.root_ = 0;
    return t;
  }

  // Validating constructor used by deserialization: child lists per node,
  // parents derived.
  static TreeTopology from_children(const std::vector<std::vector<NodeId>>& children, NodeId root,
                                    NodeId join_partner = kNoNode) {
    TreeTopology t;
    if (children.empty()) {
      if (root != kNoNode && root != 0) throw std::invalid_argument("empty tree must not name a root");
      return t;
    }
    const auto n = static_cast<NodeId>(children.size());
    t.nodes_.resize(children.size());
    for (NodeId v = 0; v < n; ++v) {
      if (children[v].size() > 2) {
        throw std::invalid_argument("node " + std::to_string(v) + " has more than two children");
      }
      for (NodeId c : children[v]) {
        if (c < 0 || c >= n) {
          throw std::invalid_argument("node " + std::to_string(v) + " has out-of-range child " +
                                      std::to_string(c));
        }
        if (t.nodes_[c].parent != kNoNode) {
          throw std::invalid_argument("node " + std::to_string(c) + " has two parents");
        }
        t.nodes_[c].parent = v;
      }
      t.nodes_[v].children = children[v];
    }
    t.root_ = root;
    t.partner_ = join_partner;
    t.validate();
    return t;
  }

  NodeId add_child(NodeId parent) {
    check_node(parent);
    if (nodes_[parent].children.size() >= 2) {
      throw std::invalid_argument("node " + std::to_string(parent) + " already has two children");
    }
    const auto id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(Node{parent, {}});
    nodes_[parent].children.push_back(id);
    return id;
  }

  bool empty() const noexcept { return nodes_.empty(); }
  std::size_t size() const noexcept { return nodes_.size(); }
  NodeId root() const noexcept { return root_; }
  bool rooted() const noexcept { return partner_ == kNoNode; }
  std::optional<NodeId> join_partner() const {
    if (partner_ == kNoNode) return std::nullopt;
    return partner_;
  }

  const Node& node(NodeId v) const {
    check_node(v);
    return nodes_[v];
  }
  const std::vector<NodeId>& children(NodeId v) const { return node(v).children; }
  std::optional<NodeId> parent(NodeId v) const {
    const NodeId p = node(v).parent;
    if (p == kNoNode) return std::nullopt;
    return p;
  }
  bool contains(NodeId v) const noexcept { return v >= 0 && static_cast<std::size_t>(v) < nodes_.size(); }

  std::array<NodeId, 3> slots(NodeId v) const {
    const Node& n = node(v);
    NodeId up = n.parent;
    if (up == kNoNode && partner_ != kNoNode) up = (v == root_) ? partner_ : (v == partner_ ? root_ : kNoNode);
    return {up, n.children.size() > 0 ? n.children[0] : kNoNode,
            n.children.size() > 1 ? n.children[1] : kNoNode};
  }

  std::vector<NodeId> neighbors(NodeId v) const {
    std::vector<NodeId> out;
    for (NodeId s : slots(v)) {
      if (s != kNoNode) out.push_back(s);
    }
    return out;
  }

  int degree(NodeId v) const {
    int d = 0;
    for (NodeId s : slots(v)) d += (s != kNoNode);
    return d;
  }

  bool adjacent(NodeId u, NodeId v) const {
    if (!contains(u) || !contains(v)) return false;
    for (NodeId s : slots(u)) {
      if (s == v) return true;
    }
    return false;
  }

  std::size_t edge_count() const noexcept { return nodes_.empty() ? 0 : nodes_.size() - 1; }

  // Throws std::invalid_argument unless the structural invariants hold.
  void validate() const {
    if (nodes_.empty()) {
      if (root_ != kNoNode || partner_ != kNoNode) throw std::invalid_argument("empty tree with a root");
      return;
    }
    check_node(root_);
    std::size_t parentless = 0;
    for (NodeId v = 0; v < static_cast<NodeId>(nodes_.size()); ++v) {
      const Node& n = nodes_[v];
      if (n.children.size() > 2) throw std::invalid_argument("more than two children");
      if (n.parent == kNoNode) ++parentless;
      for (NodeId c : n.children) {
        if (!contains(c) || nodes_[c].parent != v) throw std::invalid_argument("inconsistent parent/child");
      }
    }
    if (nodes_[root_].parent != kNoNode) throw std::invalid_argument("root has a parent");
    if (partner_ != kNoNode) {
      check_node(partner_);
      if (partner_ == root_ || nodes_[partner_].parent != kNoNode) {
        throw std::invalid_argument("join partner must be a second parentless node");
      }
    }
    if (parentless != (partner_ == kNoNode ? 1u : 2u)) throw std::invalid_argument("wrong number of roots");
    // Acyclic and connected: every node reached exactly once from the roots.
    std::vector<char> seen(nodes_.size(), 0);
    std::size_t reached = 0;
    std::vector<NodeId> stack{root_};
    if (partner_ != kNoNode) stack.push_back(partner_);
    while (!stack.empty()) {
      const NodeId v = stack.back();
      stack.pop_back();
      if (seen[v]) throw std::invalid_argument("cycle in child relation");
      seen[v] = 1;
      ++reached;
      for (NodeId c : nodes_[v].children) stack.push_back(c);
    }
    if (reached != nodes_.size()) throw std::invalid_argument("tree is not connected");
  }

  // Same shape renumbered in preorder (root subtree, then partner subtree).
  TreeTopology normalized() const {
    TreeTopology out;
    if (empty()) return out;
    std::vector<NodeId> order;
    order.reserve(nodes_.size());
    auto walk = [&](NodeId top) {
      std::vector<NodeId> stack{top};
      while (!stack.empty()) {
        const NodeId v = stack.back();
        stack.pop_back();
        order.push_back(v);
        const auto& ch = nodes_[v].children;
        for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
      }
    };
    walk(root_);
    if (partner_ != kNoNode) walk(partner_);
    std::vector<NodeId> relabel(nodes_.size());
    for (std::size_t i = 0; i < order.size(); ++i) relabel[order[i]] = static_cast<NodeId>(i);
    out.nodes_.resize(nodes_.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      const Node& src = nodes_[order[i]];
      Node& dst = out.nodes_[i];
      dst.parent = src.parent == kNoNode ? kNoNode : relabel[src.parent];
      for (NodeId c : src.children) dst.children.push_back(relabel[c]);
    }
    out.root_ = 0;
    out.partner_ = partner_ == kNoNode ? kNoNode : relabel[partner_];
    return out;
  }

  // Ordered structural equality (child order matters, numbering does not).
  friend bool operator==(const TreeTopology& a, const TreeTopology& b) {
    if (a.size() != b.size() || a.rooted() != b.rooted()) return false;
    const TreeTopology na = a.normalized();
    const TreeTopology nb = b.normalized();
    if (na.partner_ != nb.partner_) return false;
    for (std::size_t i = 0; i < na.nodes_.size(); ++i) {
      if (na.nodes_[i].children != nb.nodes_[i].children) return false;
    }
    return true;
  }

 private:
  friend TreeTopology join(const TreeTopology& a, const TreeTopology& b);

  void check_node(NodeId v) const {
    if (!contains(v)) throw std::invalid_argument("node " + std::to_string(v) + " not in tree");
  }

  std::vector<Node> nodes_;
  NodeId root_ = kNoNode;
  NodeId partner_ = kNoNode;
};

// ---------------------------------------------------------------------------
// Copying and decomposition

namespace detail {

// Appends the component of `src` that contains `top` once the edge
// (top, from) is removed, rooted at `top`, below `dst_parent` (or as the root
// of an empty `dst`). Children keep slot order. Returns the new id of `top`.
inline NodeId append_component(TreeTopology& dst, NodeId dst_parent, const TreeTopology& src, NodeId top,
                               NodeId from) {
  NodeId result = kNoNode;
  // Preorder with explicit stack of (src node, src predecessor, dst parent).
  struct Frame {
    NodeId v, pred, dst_parent;
  };
  std::vector<Frame> stack{{top, from, dst_parent}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    NodeId id;
    if (f.dst_parent == kNoNode) {
      dst = TreeTopology::point();
      id = 0;
    } else {
      id = dst.add_child(f.dst_parent);
    }
    if (result == kNoNode) result = id;
    std::vector<NodeId> next;
    for (NodeId s : src.slots(f.v)) {
      if (s != kNoNode && s != f.pred) next.push_back(s);
    }
    if (next.size() > 2) throw std::invalid_argument("component root would have three children");
    for (auto it = next.rbegin(); it != next.rend(); ++it) stack.push_back({*it, f.v, id});
  }
  return result;
}

}  // namespace detail

// Rooted subtree hanging at `top` on the far side of the edge (from, top).
// With from == kNoNode, `top` must have at most two neighbors.
inline TreeTopology hanging_subtree(const TreeTopology& t, NodeId top, NodeId from = kNoNode) {
  if (top == kNoNode) return {};
  if (!t.contains(top)) throw std::invalid_argument("node not in tree");
  if (from != kNoNode && !t.adjacent(top, from)) throw std::invalid_argument("nodes are not adjacent");
  TreeTopology out;
  detail::append_component(out, kNoNode, t, top, from);
  return out;
}

// Subtree below `v` (v and its descendants), rooted at v.
inline TreeTopology descendant_subtree(const TreeTopology& t, NodeId v) {
  const auto p = t.slots(v)[0];
  return hanging_subtree(t, v, p);
}

// Appends a copy of the rooted tree `src` as a new child of `parent`.
// Copying the empty tree is a no-op and returns kNoNode.
inline NodeId append_copy(TreeTopology& dst, NodeId parent, const TreeTopology& src) {
  if (src.empty()) return kNoNode;
  if (!src.rooted()) throw std::invalid_argument("cannot attach a rootless tree");
  return detail::append_component(dst, parent, src, src.root(), kNoNode);
}

// New root whose children are the roots of `first` and `second`; empty
// arguments are skipped. Inverse of `split_at_root` on rooted trees.
inline TreeTopology graft(const TreeTopology& first, const TreeTopology& second) {
  TreeTopology out = TreeTopology::point();
  append_copy(out, 0, first);
  append_copy(out, 0, second);
  return out;
}

// Rootless tree made of `a` and `b` with their roots joined by an edge.
inline TreeTopology join(const TreeTopology& a, const TreeTopology& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("join needs two nonempty trees");
  if (!a.rooted() || !b.rooted()) throw std::invalid_argument("join needs rooted halves");
  TreeTopology out;
  detail::append_component(out, kNoNode, a, a.root(), kNoNode);
  const auto offset = static_cast<NodeId>(out.size());
  const TreeTopology nb = b.normalized();
  for (std::size_t i = 0; i < nb.size(); ++i) {
    TreeTopology::Node n = nb.node(static_cast<NodeId>(i));
    if (n.parent != kNoNode) n.parent += offset;
    for (NodeId& c : n.children) c += offset;
    out.nodes_.push_back(std::move(n));
  }
  out.partner_ = offset;
  return out;
}

enum class SplitAt { root };

// Split at the root: the two child subtrees of a rooted tree (empty where a
// child is absent), or the two joined halves of a rootless tree.
inline std::pair<TreeTopology, TreeTopology> split(const TreeTopology& t, SplitAt) {
  if (t.empty()) throw std::invalid_argument("cannot split the empty tree");
  if (!t.rooted()) {
    const NodeId partner = *t.join_partner();
    return {hanging_subtree(t, t.root(), partner), hanging_subtree(t, partner, t.root())};
  }
  const auto s = t.slots(t.root());
  return {hanging_subtree(t, s[1], t.root()), hanging_subtree(t, s[2], t.root())};
}

// Delete the edge (u, v): the component of u rooted at u and that of v
// rooted at v.
inline std::pair<TreeTopology, TreeTopology> split(const TreeTopology& t, NodeId u, NodeId v) {
  if (!t.adjacent(u, v)) {
    throw std::invalid_argument("no edge between " + std::to_string(u) + " and " + std::to_string(v));
  }
  return {hanging_subtree(t, u, v), hanging_subtree(t, v, u)};
}

// ---------------------------------------------------------------------------
// Paths and clusters

inline std::vector<NodeId> path_between(const TreeTopology& t, NodeId u, NodeId v) {
  if (!t.contains(u) || !t.contains(v)) throw std::invalid_argument("path endpoint not in tree");
  std::vector<NodeId> pred(t.size(), kNoNode);
  std::vector<char> seen(t.size(), 0);
  std::vector<NodeId> queue{u};
  seen[u] = 1;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const NodeId w = queue[head];
    if (w == v) break;
    for (NodeId s : t.slots(w)) {
      if (s != kNoNode && !seen[s]) {
        seen[s] = 1;
        pred[s] = w;
        queue.push_back(s);
      }
    }
  }
  std::vector<NodeId> path{v};
  while (path.back() != u) path.push_back(pred[path.back()]);
  std::reverse(path.begin(), path.end());
  return path;
}

inline int distance(const TreeTopology& t, NodeId u, NodeId v) {
  return static_cast<int>(path_between(t, u, v).size()) - 1;
}

// One neighbor slot left open by a path or cluster: the subtree hanging at
// `neighbor` away from `owner` (none when neighbor == kNoNode).
struct Slot {
  NodeId owner = kNoNode;
  NodeId neighbor = kNoNode;

  bool absent() const noexcept { return neighbor == kNoNode; }
  friend bool operator==(const Slot&, const Slot&) = default;
};

// The n + 3 open slots along the path u -> v of length n: slots of u, then of
// the interior vertices in path order, then of v; slot order within a vertex.
inline std::vector<Slot> path_slots(const TreeTopology& t, NodeId u, NodeId v) {
  if (u == v) throw std::invalid_argument("path endpoints must differ");
  const auto path = path_between(t, u, v);
  std::vector<Slot> out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const NodeId w = path[i];
    const NodeId prev = i > 0 ? path[i - 1] : kNoNode;
    const NodeId next = i + 1 < path.size() ? path[i + 1] : kNoNode;
    for (NodeId s : t.slots(w)) {
      if (s != kNoNode && (s == prev || s == next)) continue;
      out.push_back({w, s});
    }
  }
  return out;
}

inline std::vector<TreeTopology> subtrees_of(const TreeTopology& t, const std::vector<Slot>& slots) {
  std::vector<TreeTopology> out;
  out.reserve(slots.size());
  for (const Slot& s : slots) out.push_back(s.absent() ? TreeTopology{} : hanging_subtree(t, s.neighbor, s.owner));
  return out;
}

inline std::vector<TreeTopology> path_subtrees(const TreeTopology& t, NodeId u, NodeId v) {
  return subtrees_of(t, path_slots(t, u, v));
}

// Throws unless `cluster` is a duplicate-free connected vertex set containing
// `origin`.
inline void check_cluster(const TreeTopology& t, const std::vector<NodeId>& cluster, NodeId origin) {
  std::vector<char> in(t.size(), 0);
  for (NodeId v : cluster) {
    if (!t.contains(v)) throw std::invalid_argument("cluster vertex not in tree");
    if (in[v]) throw std::invalid_argument("duplicate cluster vertex");
    in[v] = 1;
  }
  if (!t.contains(origin) || !in[origin]) throw std::invalid_argument("cluster must contain the origin");
  std::vector<NodeId> stack{origin};
  std::vector<char> seen(t.size(), 0);
  seen[origin] = 1;
  std::size_t reached = 0;
  while (!stack.empty()) {
    const NodeId w = stack.back();
    stack.pop_back();
    ++reached;
    for (NodeId s : t.slots(w)) {
      if (s != kNoNode && in[s] && !seen[s]) {
        seen[s] = 1;
        stack.push_back(s);
      }
    }
  }
  if (reached != cluster.size()) throw std::invalid_argument("cluster is not connected");
}

// The |C| + 2 open slots of a connected cluster, in depth-first order from
// the origin: each vertex's slots are scanned in slot order, descending into
// cluster neighbors and recording every other slot.
inline std::vector<Slot> cluster_slots(const TreeTopology& t, const std::vector<NodeId>& cluster, NodeId origin) {
  check_cluster(t, cluster, origin);
  std::vector<char> in(t.size(), 0);
  for (NodeId v : cluster) in[v] = 1;
  std::vector<Slot> out;
  std::function<void(NodeId, NodeId)> visit = [&](NodeId w, NodeId from) {
    for (NodeId s : t.slots(w)) {
      if (s != kNoNode && s == from) continue;
      if (s != kNoNode && in[s]) {
        visit(s, w);
      } else {
        out.push_back({w, s});
      }
    }
  };
  visit(origin, kNoNode);
  return out;
}

inline std::vector<TreeTopology> cluster_subtrees(const TreeTopology& t, const std::vector<NodeId>& cluster,
                                                  NodeId origin) {
  return subtrees_of(t, cluster_slots(t, cluster, origin));
}

enum class ClusterUnit { vertices, edges };

inline constexpr std::size_t kClusterSizeGuard = 14;

/// All connected vertex sets containing `origin` with `size` vertices (or
/// `size` edges, i.e. size + 1 vertices). Each set is sorted; the list is in
/// lexicographic order. With unit == vertices and size == 0 the single
/// result is the empty cluster.
inline std::vector<std::vector<NodeId>> enumerate_clusters(const TreeTopology& t, NodeId origin, std::size_t size,
                                                           ClusterUnit unit,
                                                           std::size_t guard = kClusterSizeGuard) {
  if (size > guard) throw GuardError("cluster enumeration size", size, guard);
  if (!t.contains(origin)) throw std::invalid_argument("origin not in tree");
  const std::size_t vertices = unit == ClusterUnit::edges ? size + 1 : size;
  if (vertices == 0) return {{}};

  // Orientation away from the origin.
  std::vector<std::vector<NodeId>> down(t.size());
  {
    std::vector<NodeId> stack{origin};
    std::vector<NodeId> pred(t.size(), kNoNode);
    std::vector<char> seen(t.size(), 0);
    seen[origin] = 1;
    while (!stack.empty()) {
      const NodeId w = stack.back();
      stack.pop_back();
      for (NodeId s : t.slots(w)) {
        if (s != kNoNode && !seen[s]) {
          seen[s] = 1;
          down[w].push_back(s);
          stack.push_back(s);
        }
      }
    }
  }

  using Sets = std::vector<std::vector<NodeId>>;
  std::map<std::pair<NodeId, std::size_t>, Sets> memo;
  // Connected sets of exactly k vertices with top vertex w.
  std::function<const Sets&(NodeId, std::size_t)> grow = [&](NodeId w, std::size_t k) -> const Sets& {
    const auto key = std::make_pair(w, k);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    Sets result;
    // partial: sets built from the first i children using `used` vertices.
    std::vector<Sets> partial(k);
    partial[0].push_back({});
    for (NodeId c : down[w]) {
      std::vector<Sets> next = partial;  // child c absent
      for (std::size_t used = 0; used < k; ++used) {
        if (partial[used].empty()) continue;
        for (std::size_t j = 1; used + j < k; ++j) {
          const Sets& sub = grow(c, j);
          for (const auto& left : partial[used]) {
            for (const auto& right : sub) {
              auto merged = left;
              merged.insert(merged.end(), right.begin(), right.end());
              next[used + j].push_back(std::move(merged));
            }
          }
        }
      }
      partial = std::move(next);
    }
    for (auto& s : partial[k - 1]) {
      s.push_back(w);
      std::sort(s.begin(), s.end());
      result.push_back(std::move(s));
    }
    return memo.emplace(key, std::move(result)).first->second;
  };

  Sets out = grow(origin, vertices);
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Shapes

// Canonical code of a rooted tree: "(" + sorted child codes + ")". Two trees
// have the same code iff they agree up to swapping children.
inline std::string canonical_code(const TreeTopology& t, NodeId v) {
  std::vector<std::string> parts;
  for (NodeId c : t.children(v)) parts.push_back(canonical_code(t, c));
  std::sort(parts.begin(), parts.end());
  std::string out = "(";
  for (const auto& p : parts) out += p;
  out += ")";
  return out;
}

inline std::string canonical_code(const TreeTopology& t) {
  if (t.empty()) return "";
  if (!t.rooted()) throw std::invalid_argument("canonical code needs a rooted tree");
  return canonical_code(t, t.root());
}

inline TreeTopology tree_from_code(const std::string& code) {
  if (code.empty()) return {};
  TreeTopology t;
  std::vector<NodeId> stack;
  for (std::size_t i = 0; i < code.size(); ++i) {
    if (code[i] == '(') {
      if (stack.empty()) {
        if (!t.empty()) throw ParseError("trailing shape after root", std::to_string(i));
        t = TreeTopology::point();
        stack.push_back(0);
      } else {
        stack.push_back(t.add_child(stack.back()));
      }
    } else if (code[i] == ')') {
      if (stack.empty()) throw ParseError("unbalanced ')'", std::to_string(i));
      stack.pop_back();
    } else {
      throw ParseError("unexpected character in shape code", std::to_string(i));
    }
  }
  if (!stack.empty()) throw ParseError("unterminated shape code", std::to_string(code.size()));
  return t;
}

inline constexpr std::size_t kShapeGuard = 12;

/// Every rooted tree with at most `max_vertices` vertices and at most two
/// children per vertex, once per left/right-symmetry class, as canonical
/// representatives ordered by size and then by code.
inline std::vector<TreeTopology> enumerate_rooted_shapes(std::size_t max_vertices,
                                                         std::size_t guard = kShapeGuard) {
  if (max_vertices > guard) throw GuardError("rooted shape enumeration", max_vertices, guard);
  std::vector<std::vector<std::string>> by_size(max_vertices + 1);
  if (max_vertices >= 1) by_size[1] = {"()"};
  for (std::size_t n = 2; n <= max_vertices; ++n) {
    auto& out = by_size[n];
    for (const auto& c : by_size[n - 1]) out.push_back("(" + c + ")");
    for (std::size_t i = 1; 2 * i <= n - 1; ++i) {
      const std::size_t j = n - 1 - i;
      const auto& left = by_size[i];
      const auto& right = by_size[j];
      for (std::size_t a = 0; a < left.size(); ++a) {
        for (std::size_t b = (i == j ? a : 0); b < right.size(); ++b) {
          const auto& x = left[a];
          const auto& y = right[b];
          out.push_back(x < y ? "(" + x + y + ")" : "(" + y + x + ")");
        }
      }
    }
    std::sort(out.begin(), out.end());
  }
  std::vector<TreeTopology> shapes;
  for (std::size_t n = 1; n <= max_vertices; ++n) {
    for (const auto& code : by_size[n]) shapes.push_back(tree_from_code(code));
  }
  return shapes;
}

// ---------------------------------------------------------------------------
// Deterministic families

// Number of generations below the root (0 for a single vertex).
inline int height(const TreeTopology& t) {
  if (t.empty()) return -1;
  int best = 0;
  std::vector<std::pair<NodeId, int>> stack{{t.root(), 0}};
  while (!stack.empty()) {
    const auto [v, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    for (NodeId c : t.children(v)) stack.push_back({c, d + 1});
  }
  return best;
}

inline TreeTopology full_tree(int depth) {
  if (depth < 0) throw std::invalid_argument("depth must be nonnegative");
  TreeTopology t = TreeTopology::point();
  std::function<void(NodeId, int)> grow = [&](NodeId v, int left) {
    if (left == 0) return;
    grow(t.add_child(v), left - 1);
    grow(t.add_child(v), left - 1);
  };
  grow(0, depth);
  return t;
}

// Root plus `length` generations; each vertex of the spine carries a copy of
// `attachment` as first child and the next spine vertex as second child. The
// last spine vertex is a leaf.
inline TreeTopology backbone(const TreeTopology& attachment, int length) {
  if (length < 0) throw std::invalid_argument("length must be nonnegative");
  TreeTopology t = TreeTopology::point();
  NodeId spine = 0;
  for (int i = 0; i < length; ++i) {
    append_copy(t, spine, attachment);
    spine = t.add_child(spine);
  }
  return t;
}

// Root plus `length` generations of two vertices each: one leaf and one
// continuing vertex.
inline TreeTopology single_branch(int length) { return backbone(TreeTopology::point(), length); }

// Single branch whose spine vertex at `level` carries `attachment` in place of
// its leaf; the branch continues for `tail` more generations below it.
inline TreeTopology perturbed_branch(const TreeTopology& attachment, int level, int tail) {
  if (level < 0 || tail < 0) throw std::invalid_argument("level and tail must be nonnegative");
  TreeTopology t = TreeTopology::point();
  NodeId spine = 0;
  for (int i = 0; i < level; ++i) {
    t.add_child(spine);
    spine = t.add_child(spine);
  }
  append_copy(t, spine, attachment);
  append_copy(t, spine, single_branch(tail));
  return t;
}

struct FullFamily {
  int depth = 0;
};
struct SingleBranchFamily {
  int length = 0;
};
struct BackboneFamily {
  TreeTopology attachment;
  int length = 0;
};
struct PerturbedBranchFamily {
  TreeTopology attachment;
  int level = 0;
  int tail = 0;
};
using DeterministicFamily = std::variant<FullFamily, SingleBranchFamily, BackboneFamily, PerturbedBranchFamily>;

inline TreeTopology build_deterministic(const DeterministicFamily& family) {
  struct Visitor {
    TreeTopology operator()(const FullFamily& f) const { return full_tree(f.depth); }
    TreeTopology operator()(const SingleBranchFamily& f) const { return single_branch(f.length); }
    TreeTopology operator()(const BackboneFamily& f) const { return backbone(f.attachment, f.length); }
    TreeTopology operator()(const PerturbedBranchFamily& f) const {
      return perturbed_branch(f.attachment, f.level, f.tail);
    }
  };
  return std::visit(Visitor{}, family);
}

// ---------------------------------------------------------------------------
// Random trees

namespace detail {

inline void check_probability(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("probability must lie in [0, 1]");
}

inline void check_generations(int max_gen) {
  if (max_gen < 0) throw std::invalid_argument("generation count must be nonnegative");
}

// Binary branching below `v` for `generations` more generations. Decisions
// are drawn in preorder: one Bernoulli(p) per vertex above the cutoff.
inline void grow_gw(TreeTopology& t, NodeId v, double p, int generations, RandomSource& rng) {
  if (generations == 0 || !rng.bernoulli(p)) return;
  grow_gw(t, t.add_child(v), p, generations - 1, rng);
  grow_gw(t, t.add_child(v), p, generations - 1, rng);
}

inline void grow_binomial(TreeTopology& t, NodeId v, double p, int generations, RandomSource& rng) {
  if (generations == 0) return;
  const double u = rng.uniform();
  const double two = p * p;
  const double one = 2.0 * p * (1.0 - p);
  const int kids = u < two ? 2 : (u < two + one ? 1 : 0);
  for (int k = 0; k < kids; ++k) grow_binomial(t, t.add_child(v), p, generations - 1, rng);
}

}  // namespace detail

/// Binary Galton-Watson tree: each vertex above generation `max_gen`
/// independently gets two children with probability p, none otherwise.
inline TreeTopology sample_gw_binary(double p, int max_gen, RandomSource& rng) {
  detail::check_probability(p);
  detail::check_generations(max_gen);
  TreeTopology t = TreeTopology::point();
  detail::grow_gw(t, 0, p, max_gen, rng);
  return t;
}

/// Binomial tree: 2, 1 or 0 children with probabilities p^2, 2p(1-p),
/// (1-p)^2. A single child sits in the first child slot.
inline TreeTopology sample_binomial(double p, int max_gen, RandomSource& rng) {
  detail::check_probability(p);
  detail::check_generations(max_gen);
  TreeTopology t = TreeTopology::point();
  detail::grow_binomial(t, 0, p, max_gen, rng);
  return t;
}

struct SpineTree {
  TreeTopology tree;
  NodeId origin = kNoNode;   // spine start, the root
  NodeId endpoint = kNoNode;  // spine vertex at distance n
  std::vector<NodeId> spine;
  bool degenerate = false;  // p == 0: conditioning event has probability zero
};

/// Binary GW(p) tree conditioned on containing a designated line of
/// descent of length n from the root.
///
/// Given that a spine vertex has a child it has two, so every spine vertex
/// below the endpoint branches surely: first child is the off-spine sibling
/// (root of an unconditioned GW(p) subtree with `depth_margin` generations),
/// second child continues the spine. The endpoint is an unconditioned GW(p)
/// vertex with `depth_margin` generations. For p == 0 the bare path is
/// returned and flagged degenerate.
inline SpineTree build_spine_conditioned(double p, int n, int depth_margin, RandomSource& rng) {
  detail::check_probability(p);
  if (n < 1) throw std::invalid_argument("spine length must be at least 1");
  detail::check_generations(depth_margin);
  SpineTree out;
  out.tree = TreeTopology::point();
  out.degenerate = (p == 0.0);
  NodeId spine = 0;
  out.spine.push_back(spine);
  for (int i = 0; i < n; ++i) {
    if (!out.degenerate) {
      const NodeId sibling = out.tree.add_child(spine);
      detail::grow_gw(out.tree, sibling, p, depth_margin, rng);
    }
    spine = out.tree.add_child(spine);
    out.spine.push_back(spine);
  }
  if (!out.degenerate) detail::grow_gw(out.tree, spine, p, depth_margin, rng);
  out.origin = 0;
  out.endpoint = spine;
  return out;
}

}  // namespace sandtree
