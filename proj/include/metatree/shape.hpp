#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "metatree/address.hpp"
#include "metatree/errors.hpp"

namespace metatree {

// Geometry of the representative tree: a regular `arity`-ary tree over
// `feature_count` categorical features, cut off at `max_depth` when bounded.
// An unbounded shape has no leaf level; only the lazy engine can fit it.
struct TreeShape {
  std::int32_t arity = 2;
  std::int32_t feature_count = 1;
  std::optional<std::int32_t> max_depth;

  bool bounded() const { return max_depth.has_value(); }

  void validate() const {
    if (arity < 2) {
      throw ValidationError("tree arity must be >= 2, got " + std::to_string(arity));
    }
    if (feature_count < 1) {
      throw ValidationError("feature count must be >= 1, got " +
                            std::to_string(feature_count));
    }
    if (bounded() && *max_depth < 0) {
      throw ValidationError("max depth must be >= 0, got " +
                            std::to_string(*max_depth));
    }
  }

  bool contains(const NodeAddress& s) const {
    if (bounded() && s.depth() > *max_depth) return false;
    for (std::int32_t m : s.path) {
      if (m < 1 || m > arity) return false;
    }
    return true;
  }

  // Number of nodes in the representative tree (bounded shapes only).
  std::uint64_t node_count() const {
    if (!bounded()) {
      throw PreconditionError("node count is undefined for an unbounded shape");
    }
    std::uint64_t total = 0;
    std::uint64_t level = 1;
    for (std::int32_t d = 0; d <= *max_depth; ++d) {
      total += level;
      if (level > (UINT64_MAX / 2) / static_cast<std::uint64_t>(arity)) {
        throw ResourceError("representative tree is too large to enumerate");
      }
      level *= static_cast<std::uint64_t>(arity);
    }
    return total;
  }
};

}  // namespace metatree
