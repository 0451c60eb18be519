#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "metatree/address.hpp"
#include "metatree/assignment.hpp"
#include "metatree/errors.hpp"
#include "metatree/model.hpp"

namespace metatree {

// One explicit element of the meta-tree: a full rooted subtree of the
// representative tree (every node keeps all of its children or none).
// Stored as the sorted set of node addresses.
class PrunedSubtree {
 public:
  static PrunedSubtree from_nodes(std::int32_t arity,
                                  std::vector<NodeAddress> nodes) {
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    PrunedSubtree t;
    t.arity_ = arity;
    t.nodes_ = std::move(nodes);
    t.validate();
    return t;
  }

  static PrunedSubtree root_only(std::int32_t arity) {
    return from_nodes(arity, {NodeAddress::root()});
  }

  std::int32_t arity() const { return arity_; }
  const std::vector<NodeAddress>& nodes() const { return nodes_; }

  bool contains(const NodeAddress& s) const {
    return std::binary_search(nodes_.begin(), nodes_.end(), s);
  }

  // A member is inner exactly when its children are members.
  bool is_inner(const NodeAddress& s) const { return contains(s.child(1)); }

  std::vector<NodeAddress> leaves() const {
    std::vector<NodeAddress> out;
    for (const NodeAddress& s : nodes_) {
      if (!is_inner(s)) out.push_back(s);
    }
    return out;
  }

  // The leaf this subtree routes x to, under the given feature assignment.
  NodeAddress leaf_for(const FeatureAssignment& assignment,
                       std::span<const std::int32_t> x) const {
    NodeAddress s;
    while (is_inner(s)) {
      const std::int32_t k = assignment.feature(s);
      s.path.push_back(x[static_cast<std::size_t>(k) - 1]);
    }
    return s;
  }

  friend auto operator<=>(const PrunedSubtree&, const PrunedSubtree&) = default;

 private:
  void validate() const {
    if (arity_ < 2) throw StructureError("pruned subtree needs arity >= 2");
    if (nodes_.empty() || !nodes_.front().is_root()) {
      throw StructureError("a pruned subtree must contain the root");
    }
    for (const NodeAddress& s : nodes_) {
      for (std::int32_t m : s.path) {
        if (m < 1 || m > arity_) {
          throw StructureError("address " + s.to_string() +
                               " has a child index outside [1, " +
                               std::to_string(arity_) + "]");
        }
      }
      if (!s.is_root() && !contains(s.parent())) {
        throw StructureError("node " + s.to_string() +
                             " is present without its parent");
      }
      std::int32_t present = 0;
      for (std::int32_t m = 1; m <= arity_; ++m) {
        if (contains(s.child(m))) ++present;
      }
      if (present != 0 && present != arity_) {
        throw StructureError("node " + s.to_string() + " has " +
                             std::to_string(present) + " of " +
                             std::to_string(arity_) + " children");
      }
    }
  }

  std::int32_t arity_ = 2;
  std::vector<NodeAddress> nodes_;
};

namespace detail {

// Product over the subtree of g at inner nodes and (1-g) at leaves,
// accumulated in log space.
template <LeafFamily F, typename GAt>
double subtree_log_prob(const MetaTreeModel<F>& model, const PrunedSubtree& t,
                        GAt&& g_at) {
  if (t.arity() != model.shape().arity) {
    throw StructureError("subtree arity does not match the model shape");
  }
  double lp = 0.0;
  for (const NodeAddress& s : t.nodes()) {
    const double g = g_at(s);  // shape-checks the address
    lp += t.is_inner(s) ? std::log(g) : std::log1p(-g);
  }
  return lp;
}

}  // namespace detail

// Probability the tree prior assigns to the pruned subtree t.
template <LeafFamily F>
double prior_prob(const MetaTreeModel<F>& model, const PrunedSubtree& t) {
  return std::exp(detail::subtree_log_prob(
      model, t, [&](const NodeAddress& s) { return model.g_prior_at(s); }));
}

// Posterior analogue; equals prior_prob on an unfitted model.
template <LeafFamily F>
double posterior_prob(const MetaTreeModel<F>& model, const PrunedSubtree& t) {
  return std::exp(detail::subtree_log_prob(
      model, t, [&](const NodeAddress& s) { return model.g_posterior_at(s); }));
}

}  // namespace metatree
