#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace metatree {

// Path from the root as 1-based child indices; the empty path is the root.
// Ordering is lexicographic, so a node sorts before its descendants.
struct NodeAddress {
  std::vector<std::int32_t> path;

  NodeAddress() = default;
  explicit NodeAddress(std::vector<std::int32_t> p) : path(std::move(p)) {}

  static NodeAddress root() { return NodeAddress{}; }

  int depth() const { return static_cast<int>(path.size()); }
  bool is_root() const { return path.empty(); }

  NodeAddress child(std::int32_t m) const {
    NodeAddress c{path};
    c.path.push_back(m);
    return c;
  }

  NodeAddress parent() const {
    NodeAddress p{path};
    p.path.pop_back();
    return p;
  }

  // True if *this is a strict ancestor (proper prefix) of other.
  bool is_ancestor_of(const NodeAddress& other) const {
    if (path.size() >= other.path.size()) return false;
    for (std::size_t i = 0; i < path.size(); ++i) {
      if (path[i] != other.path[i]) return false;
    }
    return true;
  }

  friend auto operator<=>(const NodeAddress&, const NodeAddress&) = default;

  std::string to_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < path.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(path[i]);
    }
    s += ']';
    return s;
  }
};

}  // namespace metatree
