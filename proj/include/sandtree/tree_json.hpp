#pragma once

#include "sandtree/errors.hpp"
#include "sandtree/tree.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace sandtree {

inline constexpr const char* kTreeFormat = "sandtree-v1";

// Canonical compact JSON:
//   {"format":"sandtree-v1","rooted":true,"root":0,"nodes":[{"id":0,"children":[]}]}
// Rootless trees set "rooted":false and add "join":<partner id> after "root".
// The empty tree has "root":null and no nodes.
inline nlohmann::ordered_json tree_to_json(const TreeTopology& t) {
  nlohmann::ordered_json j;
  j["format"] = kTreeFormat;
  j["rooted"] = t.rooted();
  if (t.empty()) {
    j["root"] = nullptr;
  } else {
    j["root"] = t.root();
  }
  if (auto partner = t.join_partner()) j["join"] = *partner;
  auto nodes = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < t.size(); ++i) {
    nlohmann::ordered_json n;
    n["id"] = i;
    n["children"] = t.children(static_cast<NodeId>(i));
    nodes.push_back(std::move(n));
  }
  j["nodes"] = std::move(nodes);
  return j;
}

inline std::string serialize(const TreeTopology& t) { return tree_to_json(t).dump(); }

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw ParseError(std::string("missing key '") + key + "'", where);
  return obj.at(key);
}

inline NodeId require_id(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ParseError("expected integer node id", where);
  const auto id = v.get<long long>();
  if (id < 0 || id > 0x7fffffff) throw ParseError("node id out of range", where);
  return static_cast<NodeId>(id);
}

}  // namespace detail

inline TreeTopology tree_from_json(const nlohmann::json& j) {
  const auto& format = detail::require(j, "format", "$");
  if (!format.is_string() || format.get<std::string>() != kTreeFormat) {
    throw ParseError("unsupported tree format", "$.format");
  }
  const auto& rooted = detail::require(j, "rooted", "$");
  if (!rooted.is_boolean()) throw ParseError("expected boolean", "$.rooted");
  const auto& nodes = detail::require(j, "nodes", "$");
  if (!nodes.is_array()) throw ParseError("expected array", "$.nodes");
  const auto& root_json = detail::require(j, "root", "$");

  std::vector<std::vector<NodeId>> children(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string where = "$.nodes[" + std::to_string(i) + "]";
    const NodeId id = detail::require_id(detail::require(nodes[i], "id", where), where + ".id");
    if (static_cast<std::size_t>(id) != i) throw ParseError("node ids must be dense and in order", where + ".id");
    const auto& ch = detail::require(nodes[i], "children", where);
    if (!ch.is_array()) throw ParseError("expected array", where + ".children");
    if (ch.size() > 2) throw ParseError("more than two children", where + ".children");
    for (std::size_t k = 0; k < ch.size(); ++k) {
      const std::string cw = where + ".children[" + std::to_string(k) + "]";
      const NodeId c = detail::require_id(ch[k], cw);
      if (static_cast<std::size_t>(c) >= nodes.size()) throw ParseError("child index out of range", cw);
      children[i].push_back(c);
    }
  }
  if (nodes.empty()) {
    if (!root_json.is_null()) throw ParseError("empty tree must have a null root", "$.root");
    return {};
  }
  const NodeId root = detail::require_id(root_json, "$.root");
  if (static_cast<std::size_t>(root) >= nodes.size()) throw ParseError("root out of range", "$.root");
  NodeId partner = kNoNode;
  if (!rooted.get<bool>()) {
    partner = detail::require_id(detail::require(j, "join", "$"), "$.join");
    if (static_cast<std::size_t>(partner) >= nodes.size()) throw ParseError("join partner out of range", "$.join");
  } else if (j.contains("join")) {
    throw ParseError("rooted tree must not carry a join partner", "$.join");
  }
  try {
    return TreeTopology::from_children(children, root, partner);
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), "$.nodes");
  }
}

// Parses the tree format; JSON syntax errors report their byte offset.
inline TreeTopology deserialize(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what(), "byte " + std::to_string(e.byte));
  }
  return tree_from_json(j);
}

}  // namespace sandtree
