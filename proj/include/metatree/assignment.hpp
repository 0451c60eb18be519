#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "metatree/address.hpp"
#include "metatree/errors.hpp"
#include "metatree/shape.hpp"

namespace metatree {

// Which feature each inner node queries. Two forms:
//   - depth-indexed: all nodes at depth d query features[d % size]; the list
//     cycles, which also covers unbounded shapes;
//   - per-node: an explicit map that must cover every inner node of a bounded
//     shape.
class FeatureAssignment {
 public:
  FeatureAssignment() : by_depth_{1} {}

  static FeatureAssignment by_depth(std::vector<std::int32_t> features) {
    if (features.empty()) {
      throw ValidationError("depth-indexed feature assignment must be non-empty");
    }
    FeatureAssignment a;
    a.by_depth_ = std::move(features);
    return a;
  }

  static FeatureAssignment per_node(std::map<NodeAddress, std::int32_t> features) {
    FeatureAssignment a;
    a.by_depth_.clear();
    a.per_node_ = std::move(features);
    return a;
  }

  bool is_depth_indexed() const { return !by_depth_.empty(); }

  std::int32_t feature_at_depth(int depth) const {
    return by_depth_[static_cast<std::size_t>(depth) % by_depth_.size()];
  }

  std::int32_t feature_at_node(const NodeAddress& s) const {
    auto it = per_node_.find(s);
    if (it == per_node_.end()) {
      throw StructureError("no feature assigned to inner node " + s.to_string());
    }
    return it->second;
  }

  std::int32_t feature(const NodeAddress& s) const {
    return is_depth_indexed() ? feature_at_depth(s.depth()) : feature_at_node(s);
  }

  const std::vector<std::int32_t>& depth_list() const { return by_depth_; }
  const std::map<NodeAddress, std::int32_t>& node_map() const { return per_node_; }

  void validate(const TreeShape& shape) const {
    if (is_depth_indexed()) {
      for (std::int32_t k : by_depth_) check_feature(k, shape);
      return;
    }
    if (!shape.bounded()) {
      throw ValidationError(
          "per-node feature assignments require a bounded shape; "
          "use a depth-indexed assignment");
    }
    for (const auto& [addr, k] : per_node_) {
      if (!shape.contains(addr) || addr.depth() >= *shape.max_depth) {
        throw StructureError("feature assigned to " + addr.to_string() +
                             ", which is not an inner node of the shape");
      }
      check_feature(k, shape);
    }
    // Coverage: every inner node must carry exactly one feature index.
    std::uint64_t inner = 0;
    std::uint64_t level = 1;
    for (std::int32_t d = 0; d < *shape.max_depth; ++d) {
      inner += level;
      level *= static_cast<std::uint64_t>(shape.arity);
      if (inner > (1u << 20)) {
        throw ValidationError(
            "per-node feature assignment is not supported for shapes with "
            "more than 2^20 inner nodes; use a depth-indexed assignment");
      }
    }
    if (per_node_.size() != inner) {
      throw ValidationError("per-node feature assignment covers " +
                            std::to_string(per_node_.size()) + " of " +
                            std::to_string(inner) + " inner nodes");
    }
  }

  bool operator==(const FeatureAssignment&) const = default;

 private:
  static void check_feature(std::int32_t k, const TreeShape& shape) {
    if (k < 1 || k > shape.feature_count) {
      throw ValidationError("feature index " + std::to_string(k) +
                            " outside [1, " + std::to_string(shape.feature_count) +
                            "]");
    }
  }

  std::vector<std::int32_t> by_depth_;
  std::map<NodeAddress, std::int32_t> per_node_;
};

}  // namespace metatree
