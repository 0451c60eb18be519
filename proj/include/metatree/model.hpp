#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "metatree/address.hpp"
#include "metatree/assignment.hpp"
#include "metatree/engine.hpp"
#include "metatree/errors.hpp"
#include "metatree/leaf_model.hpp"
#include "metatree/shape.hpp"

namespace metatree {

// The representative tree with per-node split probabilities and observation
// states. Together with the feature assignment this parameterizes the whole
// posterior over pruned subtrees: before fitting, every node carries its
// prior split probability; a fitted model carries the posterior ones.
//
// Nodes are kept in a lazily allocated arena: a node materializes the first
// time data routes through it, a sweep reaches it, or a per-node override is
// set. Unmaterialized nodes behave as prior-state nodes (default split
// probability for their depth, default leaf prior, no data).
//
// Mutation (fitting, overrides) is single-writer; the read-only queries are
// safe to call concurrently once fitting has finished.
template <LeafFamily F>
class MetaTreeModel {
 public:
  struct Config {
    TreeShape shape;
    FeatureAssignment assignment;
    // Split probability per depth, cycled when shorter than the tree is deep.
    // Nodes at the max depth of a bounded shape always get 0.
    std::vector<double> split_probs = {0.5};
    typename F::Params leaf_prior{};
  };

  struct Node {
    std::int32_t depth = 0;
    double g_prior = 0.0;
    double g_posterior = 0.0;
    LeafState<F> leaf;
    std::int64_t data_count = 0;
    std::vector<std::int32_t> children;  // size arity, kNoChild = absent
  };

  static constexpr std::int32_t kNoChild = -1;

  explicit MetaTreeModel(Config cfg) : cfg_(std::move(cfg)) {
    cfg_.shape.validate();
    cfg_.assignment.validate(cfg_.shape);
    if (cfg_.split_probs.empty()) {
      throw ValidationError("split probability list must be non-empty");
    }
    for (double g : cfg_.split_probs) check_split_prob(g);
    F::validate_params(cfg_.leaf_prior);
    nodes_.push_back(make_node(0));
  }

  const TreeShape& shape() const { return cfg_.shape; }
  const FeatureAssignment& assignment() const { return cfg_.assignment; }
  const Config& config() const { return cfg_; }

  // ---- prior customization (before any data) -------------------------------

  void set_split_prob(const NodeAddress& s, double g) {
    require_fresh("set_split_prob");
    check_address(s);
    check_split_prob(g);
    if (cfg_.shape.bounded() && s.depth() == *cfg_.shape.max_depth && g != 0.0) {
      throw ValidationError("nodes at the maximum depth keep split probability 0");
    }
    Node& n = nodes_[ensure_path(s)];
    n.g_prior = g;
    n.g_posterior = g;
  }

  void set_leaf_prior(const NodeAddress& s, const typename F::Params& p) {
    require_fresh("set_leaf_prior");
    check_address(s);
    F::validate_params(p);
    if (!cfg_.shape.bounded() && !(p == cfg_.leaf_prior)) {
      throw PreconditionError(
          "an unbounded shape requires one shared leaf prior for every node");
    }
    nodes_[ensure_path(s)].leaf.prior = p;
    if (!(p == cfg_.leaf_prior)) custom_leaf_priors_ = true;
  }

  bool has_custom_leaf_priors() const { return custom_leaf_priors_; }

  // ---- default-aware queries (work for unmaterialized nodes too) -----------

  double default_split_prob(std::int32_t depth) const {
    if (cfg_.shape.bounded() && depth == *cfg_.shape.max_depth) return 0.0;
    return cfg_.split_probs[static_cast<std::size_t>(depth) % cfg_.split_probs.size()];
  }

  double g_prior_at(const NodeAddress& s) const {
    check_address(s);
    const std::int32_t id = find_id(s);
    return id == kNoChild ? default_split_prob(s.depth()) : nodes_[id].g_prior;
  }

  double g_posterior_at(const NodeAddress& s) const {
    check_address(s);
    const std::int32_t id = find_id(s);
    return id == kNoChild ? default_split_prob(s.depth()) : nodes_[id].g_posterior;
  }

  LeafState<F> leaf_state_at(const NodeAddress& s) const {
    check_address(s);
    const std::int32_t id = find_id(s);
    return id == kNoChild ? LeafState<F>{cfg_.leaf_prior, {}} : nodes_[id].leaf;
  }

  std::int64_t data_count_at(const NodeAddress& s) const {
    check_address(s);
    const std::int32_t id = find_id(s);
    return id == kNoChild ? 0 : nodes_[id].data_count;
  }

  bool materialized(const NodeAddress& s) const {
    check_address(s);
    return find_id(s) != kNoChild;
  }

  std::size_t materialized_count() const { return nodes_.size(); }

  // ---- routing --------------------------------------------------------------

  void validate_x(std::span<const std::int32_t> x) const {
    if (static_cast<std::int32_t>(x.size()) != cfg_.shape.feature_count) {
      throw ValidationError("expected " + std::to_string(cfg_.shape.feature_count) +
                            " feature values, got " + std::to_string(x.size()));
    }
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (x[k] < 1 || x[k] > cfg_.shape.arity) {
        throw ValidationError("column x" + std::to_string(k + 1) + ": value " +
                              std::to_string(x[k]) + " outside [1, " +
                              std::to_string(cfg_.shape.arity) + "]");
      }
    }
  }

  // Root-to-leaf path taken by x: at each inner node the x-value of the
  // node's assigned feature picks the child. Bounded shapes only.
  std::vector<NodeAddress> route(std::span<const std::int32_t> x) const {
    if (!cfg_.shape.bounded()) {
      throw PreconditionError("routing to a leaf requires a bounded shape");
    }
    validate_x(x);
    std::vector<NodeAddress> path;
    path.reserve(static_cast<std::size_t>(*cfg_.shape.max_depth) + 1);
    NodeAddress addr;
    path.push_back(addr);
    for (std::int32_t d = 0; d < *cfg_.shape.max_depth; ++d) {
      const std::int32_t k = cfg_.assignment.feature(addr);
      addr.path.push_back(x[static_cast<std::size_t>(k) - 1]);
      path.push_back(addr);
    }
    return path;
  }

  // ---- full-tree iteration (bounded shapes) ---------------------------------

  // Every address of the representative tree in post-order, children in
  // ascending index order, root last.
  template <typename Fn>
  void for_each_address_postorder(Fn&& fn) const {
    if (!cfg_.shape.bounded()) {
      throw PreconditionError("address enumeration requires a bounded shape");
    }
    NodeAddress addr;
    postorder_rec(addr, std::forward<Fn>(fn));
  }

  std::vector<NodeAddress> enumerate_addresses() const {
    std::vector<NodeAddress> out;
    out.reserve(cfg_.shape.node_count());
    for_each_address_postorder([&](const NodeAddress& a) { out.push_back(a); });
    return out;
  }

  // Materialized nodes in depth-first pre-order (parents before children).
  template <typename Fn>
  void for_each_materialized(Fn&& fn) const {
    NodeAddress addr;
    materialized_rec(0, addr, std::forward<Fn>(fn));
  }

  // ---- fit bookkeeping -------------------------------------------------------

  bool fitted() const { return fitted_; }
  std::optional<Engine> last_engine() const { return last_engine_; }

  // log p(everything absorbed so far); 0 for a fresh model.
  double log_marginal_cum() const { return log_marginal_cum_; }

  void require_fresh(const std::string& op) const {
    if (fitted_) {
      throw ContractError(op + " requires a model that has absorbed no data; "
                          "call reset() to refit from the prior");
    }
  }

  void note_fit(Engine e, double log_marginal_delta) {
    fitted_ = true;
    last_engine_ = e;
    log_marginal_cum_ += log_marginal_delta;
  }

  // Posterior state back to the prior; keeps materialized nodes and their
  // prior overrides.
  void reset() {
    for (Node& n : nodes_) {
      n.g_posterior = n.g_prior;
      n.leaf.stats = {};
      n.data_count = 0;
    }
    fitted_ = false;
    last_engine_.reset();
    log_marginal_cum_ = 0.0;
  }

  // ---- arena access (engines, serialization) --------------------------------

  std::int32_t root_id() const { return 0; }
  Node& node(std::int32_t id) { return nodes_[id]; }
  const Node& node(std::int32_t id) const { return nodes_[id]; }

  std::int32_t child_id(std::int32_t id, std::int32_t m) const {
    return nodes_[id].children[static_cast<std::size_t>(m) - 1];
  }

  std::int32_t ensure_child(std::int32_t id, std::int32_t m) {
    std::int32_t c = nodes_[id].children[static_cast<std::size_t>(m) - 1];
    if (c == kNoChild) {
      c = static_cast<std::int32_t>(nodes_.size());
      const std::int32_t depth = nodes_[id].depth + 1;
      nodes_[id].children[static_cast<std::size_t>(m) - 1] = c;
      nodes_.push_back(make_node(depth));
    }
    return c;
  }

  std::int32_t ensure_path(const NodeAddress& s) {
    std::int32_t id = 0;
    for (std::int32_t m : s.path) id = ensure_child(id, m);
    return id;
  }

  std::int32_t find_id(const NodeAddress& s) const {
    std::int32_t id = 0;
    for (std::int32_t m : s.path) {
      id = nodes_[id].children[static_cast<std::size_t>(m) - 1];
      if (id == kNoChild) return kNoChild;
    }
    return id;
  }

  // Used by the loader to restore a saved fit.
  void restore_fit_state(std::optional<Engine> e, double log_marginal) {
    fitted_ = e.has_value();
    last_engine_ = e;
    log_marginal_cum_ = log_marginal;
  }

 private:
  static void check_split_prob(double g) {
    if (!(g >= 0.0 && g <= 1.0)) {
      throw ValidationError("split probability must lie in [0, 1]");
    }
  }

  void check_address(const NodeAddress& s) const {
    if (!cfg_.shape.contains(s)) {
      throw StructureError("address " + s.to_string() +
                           " lies outside the representative tree");
    }
  }

  Node make_node(std::int32_t depth) const {
    Node n;
    n.depth = depth;
    n.g_prior = default_split_prob(depth);
    n.g_posterior = n.g_prior;
    n.leaf.prior = cfg_.leaf_prior;
    n.children.assign(static_cast<std::size_t>(cfg_.shape.arity), kNoChild);
    return n;
  }

  template <typename Fn>
  void postorder_rec(NodeAddress& addr, Fn&& fn) const {
    if (addr.depth() < *cfg_.shape.max_depth) {
      for (std::int32_t m = 1; m <= cfg_.shape.arity; ++m) {
        addr.path.push_back(m);
        postorder_rec(addr, fn);
        addr.path.pop_back();
      }
    }
    fn(const_cast<const NodeAddress&>(addr));
  }

  template <typename Fn>
  void materialized_rec(std::int32_t id, NodeAddress& addr, Fn&& fn) const {
    fn(const_cast<const NodeAddress&>(addr), nodes_[id]);
    for (std::int32_t m = 1; m <= cfg_.shape.arity; ++m) {
      const std::int32_t c = nodes_[id].children[static_cast<std::size_t>(m) - 1];
      if (c == kNoChild) continue;
      addr.path.push_back(m);
      materialized_rec(c, addr, fn);
      addr.path.pop_back();
    }
  }

  Config cfg_;
  std::vector<Node> nodes_;
  bool custom_leaf_priors_ = false;
  bool fitted_ = false;
  std::optional<Engine> last_engine_;
  double log_marginal_cum_ = 0.0;
};

}  // namespace metatree
