#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "metatree/data.hpp"
#include "metatree/engine.hpp"
#include "metatree/errors.hpp"
#include "metatree/leaf_model.hpp"
#include "metatree/model.hpp"

namespace metatree {

struct FitReport {
  Engine engine = Engine::batch;
  std::int64_t n = 0;              // rows consumed by this call
  std::int64_t nodes_visited = 0;  // marginal/mixture evaluations
  double log_marginal_likelihood = 0.0;  // cumulative for the model
  double wall_time_ms = 0.0;
};

struct LazyOptions {
  std::int32_t depth_cap = 64;
};

// Optional cache of leaf marginals keyed by (prior, sufficient statistics).
// The same integral shows up for any tree that funnels the same observations
// into the same node, so it can be shared across fits; off unless supplied.
template <LeafFamily F>
class MarginalMemo {
 public:
  double log_marginal(const typename F::Params& p, const typename F::SuffStat& st) {
    auto [it, inserted] = memo_.try_emplace(std::pair(p, st), 0.0);
    if (inserted) {
      it->second = F::log_marginal(p, st);
      ++misses_;
    } else {
      ++hits_;
    }
    return it->second;
  }

  std::size_t size() const { return memo_.size(); }
  std::int64_t hits() const { return hits_; }
  std::int64_t misses() const { return misses_; }

 private:
  std::map<std::pair<typename F::Params, typename F::SuffStat>, double> memo_;
  std::int64_t hits_ = 0;
  std::int64_t misses_ = 0;
};

namespace detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0)
        .count();
  }
};

// log of (1-g)*exp(log_stop) + g*exp(log_descend), stable in log space.
inline double mix_logs(double g, double log_stop, double log_descend) {
  if (g <= 0.0) return log_stop;
  if (g >= 1.0) return log_descend;
  const double a = std::log1p(-g) + log_stop;
  const double b = std::log(g) + log_descend;
  const double hi = a > b ? a : b;
  if (hi == kNegInf) return kNegInf;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

// g * exp(log_children - log_q), clamped into [0, 1].
inline double update_g(double g, double log_children, double log_q) {
  if (g <= 0.0) return 0.0;
  if (g >= 1.0) return 1.0;
  const double v = g * std::exp(log_children - log_q);
  return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

template <LeafFamily F>
double node_log_marginal(const typename MetaTreeModel<F>::Node& n,
                         MarginalMemo<F>* memo) {
  return memo ? memo->log_marginal(n.leaf.prior, n.leaf.stats)
              : n.leaf.log_marginal();
}

// Materialize and visit every node on the routing path of x.
// visit(id, depth, child_index_taken); the root is visited with index 0.
template <LeafFamily F, typename Visit>
void walk_path(MetaTreeModel<F>& model, std::span<const std::int32_t> x,
               Visit&& visit) {
  const FeatureAssignment& asg = model.assignment();
  const bool by_depth = asg.is_depth_indexed();
  const std::int32_t max_depth = *model.shape().max_depth;
  NodeAddress addr;  // maintained only for per-node assignments
  std::int32_t id = model.root_id();
  visit(id, 0, 0);
  for (std::int32_t d = 0; d < max_depth; ++d) {
    const std::int32_t k =
        by_depth ? asg.feature_at_depth(d) : asg.feature_at_node(addr);
    const std::int32_t m = x[static_cast<std::size_t>(k) - 1];
    id = model.ensure_child(id, m);
    if (!by_depth) addr.path.push_back(m);
    visit(id, d + 1, m);
  }
}

// Route every row and absorb its observation into each on-path node.
template <LeafFamily F>
void partition_rows(MetaTreeModel<F>& model, const DataBatch<F>& data) {
  if (data.feature_count() != model.shape().feature_count ||
      data.arity() != model.shape().arity) {
    throw ValidationError("data batch was built for a different shape");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& y = data.y(i);
    walk_path(model, data.x_row(i),
              [&](std::int32_t id, std::int32_t, std::int32_t) {
                auto& n = model.node(id);
                F::accumulate(n.leaf.stats, y);
                ++n.data_count;
              });
  }
}

[[noreturn]] inline void throw_degenerate(const NodeAddress& addr) {
  throw DegenerateLikelihoodError(
      "observations have zero probability under the model at node " +
      addr.to_string());
}

}  // namespace detail

// One observation along its routing path: the mixture values q are computed
// bottom-up against the current posterior state and frozen, then the on-path
// split probabilities are re-weighted by q(child)/q(node), then the
// observation is absorbed into every on-path node. Off-path nodes are
// untouched.
template <LeafFamily F>
FitReport sequential_update(MetaTreeModel<F>& model,
                            std::span<const std::int32_t> x,
                            const typename F::Value& y) {
  if (!model.shape().bounded()) {
    throw PreconditionError("the sequential engine requires a bounded shape");
  }
  model.validate_x(x);
  F::validate_value(y);
  const detail::Timer timer;
  const std::int32_t max_depth = *model.shape().max_depth;

  std::vector<std::int32_t> ids;
  std::vector<std::int32_t> taken;  // child indices, for error reporting
  ids.reserve(static_cast<std::size_t>(max_depth) + 1);
  taken.reserve(static_cast<std::size_t>(max_depth));
  detail::walk_path(model, x, [&](std::int32_t id, std::int32_t d, std::int32_t m) {
    ids.push_back(id);
    if (d > 0) taken.push_back(m);
  });

  // q bottom-up, frozen before any split probability changes
  std::vector<double> lq(static_cast<std::size_t>(max_depth) + 1);
  lq[static_cast<std::size_t>(max_depth)] =
      model.node(ids.back()).leaf.log_predictive(y);
  for (std::int32_t d = max_depth - 1; d >= 0; --d) {
    const auto& n = model.node(ids[static_cast<std::size_t>(d)]);
    lq[static_cast<std::size_t>(d)] = detail::mix_logs(
        n.g_posterior, n.leaf.log_predictive(y), lq[static_cast<std::size_t>(d) + 1]);
  }
  for (std::int32_t d = 0; d <= max_depth; ++d) {
    if (!(lq[static_cast<std::size_t>(d)] > detail::kNegInf)) {
      detail::throw_degenerate(NodeAddress{
          std::vector<std::int32_t>(taken.begin(), taken.begin() + d)});
    }
  }

  for (std::int32_t d = 0; d < max_depth; ++d) {
    auto& n = model.node(ids[static_cast<std::size_t>(d)]);
    n.g_posterior = detail::update_g(n.g_posterior, lq[static_cast<std::size_t>(d) + 1],
                                     lq[static_cast<std::size_t>(d)]);
  }
  for (std::int32_t id : ids) {
    auto& n = model.node(id);
    n.leaf = n.leaf.absorbed(y);
    ++n.data_count;
  }

  model.note_fit(Engine::sequential, lq[0]);
  return {Engine::sequential, 1, max_depth + 1, model.log_marginal_cum(),
          timer.ms()};
}

// Whole-batch refit from the prior: rows are partitioned over the tree by
// routing, then one post-order sweep over every node of the representative
// tree computes the subtree marginals q and turns each prior split
// probability into its posterior. The root q is the log-marginal likelihood
// of the batch over the whole meta-tree.
template <LeafFamily F>
FitReport batch_update(MetaTreeModel<F>& model, const DataBatch<F>& data,
                       MarginalMemo<F>* memo = nullptr) {
  if (!model.shape().bounded()) {
    throw PreconditionError(
        "the batch engine requires a bounded shape; use the lazy engine");
  }
  model.require_fresh("batch_update");
  const detail::Timer timer;
  detail::partition_rows(model, data);

  const std::int32_t max_depth = *model.shape().max_depth;
  const std::int32_t arity = model.shape().arity;
  std::int64_t visits = 0;
  NodeAddress addr;

  auto rec = [&](auto&& self, std::int32_t id, std::int32_t depth) -> double {
    ++visits;
    double children_sum = 0.0;
    if (depth < max_depth) {
      for (std::int32_t m = 1; m <= arity; ++m) {
        const std::int32_t cid = model.ensure_child(id, m);
        addr.path.push_back(m);
        children_sum += self(self, cid, depth + 1);
        addr.path.pop_back();
      }
    }
    auto& n = model.node(id);  // fetched after any materialization below
    if (n.data_count == 0) return 0.0;  // empty: marginal 1, posterior = prior
    const double lm = detail::node_log_marginal<F>(n, memo);
    if (depth == max_depth) {
      if (!(lm > detail::kNegInf)) detail::throw_degenerate(addr);
      return lm;
    }
    const double lq = detail::mix_logs(n.g_prior, lm, children_sum);
    if (!(lq > detail::kNegInf)) detail::throw_degenerate(addr);
    n.g_posterior = detail::update_g(n.g_prior, children_sum, lq);
    return lq;
  };
  const double root_q = rec(rec, model.root_id(), 0);

  if (!data.empty()) model.note_fit(Engine::batch, root_q);
  return {Engine::batch, static_cast<std::int64_t>(data.size()), visits,
          model.log_marginal_cum(), timer.ms()};
}

// Same posterior as batch_update, but the sweep descends only into nodes
// that received data; an empty subtree contributes marginal 1 without being
// visited.
template <LeafFamily F>
FitReport batch_update_sparse(MetaTreeModel<F>& model, const DataBatch<F>& data,
                              MarginalMemo<F>* memo = nullptr) {
  if (!model.shape().bounded()) {
    throw PreconditionError(
        "the sparse engine requires a bounded shape; use the lazy engine");
  }
  model.require_fresh("batch_update_sparse");
  const detail::Timer timer;
  detail::partition_rows(model, data);

  const std::int32_t max_depth = *model.shape().max_depth;
  const std::int32_t arity = model.shape().arity;
  std::int64_t visits = 0;
  NodeAddress addr;

  auto rec = [&](auto&& self, std::int32_t id, std::int32_t depth) -> double {
    ++visits;
    double children_sum = 0.0;
    if (depth < max_depth) {
      for (std::int32_t m = 1; m <= arity; ++m) {
        const std::int32_t cid = model.child_id(id, m);
        if (cid == MetaTreeModel<F>::kNoChild || model.node(cid).data_count == 0) {
          continue;
        }
        addr.path.push_back(m);
        children_sum += self(self, cid, depth + 1);
        addr.path.pop_back();
      }
    }
    auto& n = model.node(id);
    const double lm = detail::node_log_marginal<F>(n, memo);
    if (depth == max_depth) {
      if (!(lm > detail::kNegInf)) detail::throw_degenerate(addr);
      return lm;
    }
    const double lq = detail::mix_logs(n.g_prior, lm, children_sum);
    if (!(lq > detail::kNegInf)) detail::throw_degenerate(addr);
    n.g_posterior = detail::update_g(n.g_prior, children_sum, lq);
    return lq;
  };

  double root_q = 0.0;
  if (model.node(model.root_id()).data_count > 0) {
    root_q = rec(rec, model.root_id(), 0);
  }

  if (!data.empty()) model.note_fit(Engine::sparse, root_q);
  return {Engine::sparse, static_cast<std::int64_t>(data.size()), visits,
          model.log_marginal_cum(), timer.ms()};
}

// Sparse sweep that additionally stops at any node whose data share a single
// x vector (or are empty): below such a node the recursion telescopes, so the
// node's q is just the marginal of its observations and its split probability
// keeps the prior value. Works on unbounded shapes; requires the shared leaf
// prior that makes the telescoping exact. The depth cap guards against
// assignments that never separate two distinct x vectors.
template <LeafFamily F>
FitReport batch_update_lazy(MetaTreeModel<F>& model, const DataBatch<F>& data,
                            LazyOptions opts = {},
                            MarginalMemo<F>* memo = nullptr) {
  model.require_fresh("batch_update_lazy");
  if (model.has_custom_leaf_priors()) {
    throw PreconditionError(
        "the lazy engine requires one shared leaf prior across all nodes");
  }
  if (data.feature_count() != model.shape().feature_count ||
      data.arity() != model.shape().arity) {
    throw ValidationError("data batch was built for a different shape");
  }
  if (opts.depth_cap < 1) {
    throw ValidationError("lazy depth cap must be >= 1");
  }
  const detail::Timer timer;

  const FeatureAssignment& asg = model.assignment();
  const bool by_depth = asg.is_depth_indexed();
  const bool bounded = model.shape().bounded();
  const std::int32_t max_depth = bounded ? *model.shape().max_depth : 0;
  const std::int32_t arity = model.shape().arity;
  std::int64_t visits = 0;
  NodeAddress addr;

  auto concentrated = [&](std::span<const std::size_t> rows) {
    const auto first = data.x_row(rows.front());
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto xi = data.x_row(rows[i]);
      if (!std::equal(first.begin(), first.end(), xi.begin())) return false;
    }
    return true;
  };

  auto rec = [&](auto&& self, std::int32_t id, std::int32_t depth,
                 std::span<const std::size_t> rows) -> double {
    ++visits;
    {
      auto& n = model.node(id);
      for (std::size_t i : rows) F::accumulate(n.leaf.stats, data.y(i));
      n.data_count += static_cast<std::int64_t>(rows.size());
    }
    const bool leaf_level = bounded && depth == max_depth;
    if (leaf_level || concentrated(rows)) {
      const auto& n = model.node(id);
      const double lm = detail::node_log_marginal<F>(n, memo);
      if (!(lm > detail::kNegInf)) detail::throw_degenerate(addr);
      return lm;  // split probability stays at its prior value
    }
    if (depth + 1 > opts.depth_cap) {
      throw ResourceError("lazy update exceeded depth cap " +
                          std::to_string(opts.depth_cap) + " below node " +
                          addr.to_string());
    }
    const std::int32_t k =
        by_depth ? asg.feature_at_depth(depth) : asg.feature_at_node(addr);
    std::vector<std::vector<std::size_t>> buckets(
        static_cast<std::size_t>(arity));
    for (std::size_t i : rows) {
      buckets[static_cast<std::size_t>(
                  data.x_row(i)[static_cast<std::size_t>(k) - 1]) -
              1]
          .push_back(i);
    }
    double children_sum = 0.0;
    for (std::int32_t m = 1; m <= arity; ++m) {
      const auto& bucket = buckets[static_cast<std::size_t>(m) - 1];
      if (bucket.empty()) continue;
      const std::int32_t cid = model.ensure_child(id, m);
      addr.path.push_back(m);
      children_sum += self(self, cid, depth + 1, bucket);
      addr.path.pop_back();
    }
    auto& n = model.node(id);
    const double lm = detail::node_log_marginal<F>(n, memo);
    const double lq = detail::mix_logs(n.g_prior, lm, children_sum);
    if (!(lq > detail::kNegInf)) detail::throw_degenerate(addr);
    n.g_posterior = detail::update_g(n.g_prior, children_sum, lq);
    return lq;
  };

  double root_q = 0.0;
  if (!data.empty()) {
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    root_q = rec(rec, model.root_id(), 0, all);
    model.note_fit(Engine::lazy, root_q);
  }
  return {Engine::lazy, static_cast<std::int64_t>(data.size()), visits,
          model.log_marginal_cum(), timer.ms()};
}

// log p(all absorbed observations); the cached root q for batch fits, the
// accumulated one-step predictives for sequential fits, 0 when no data has
// been absorbed.
template <LeafFamily F>
double log_marginal_likelihood(const MetaTreeModel<F>& model) {
  return model.log_marginal_cum();
}

// Posterior-mixture predictive along the routing path of x: at the path
// leaf the node's posterior predictive, at each inner node the posterior
// split probability blends the node's own predictive with the child value.
// Nodes never materialized are treated as prior-state nodes; on an unbounded
// shape the all-prior tail below the materialized prefix collapses to the
// shared prior predictive.
template <LeafFamily F>
typename F::Predictive predict(const MetaTreeModel<F>& model,
                               std::span<const std::int32_t> x) {
  model.validate_x(x);
  const FeatureAssignment& asg = model.assignment();
  const bool by_depth = asg.is_depth_indexed();

  struct View {
    double g;
    typename F::Predictive pred;
  };
  std::vector<View> views;
  const typename F::Predictive prior_pred =
      LeafState<F>{model.config().leaf_prior, {}}.predictive();

  typename F::Predictive value = prior_pred;
  if (model.shape().bounded()) {
    const std::int32_t max_depth = *model.shape().max_depth;
    views.reserve(static_cast<std::size_t>(max_depth) + 1);
    NodeAddress addr;
    std::int32_t id = model.root_id();
    for (std::int32_t d = 0; d <= max_depth; ++d) {
      if (id != MetaTreeModel<F>::kNoChild) {
        const auto& n = model.node(id);
        views.push_back({n.g_posterior, n.leaf.predictive()});
      } else {
        views.push_back({model.default_split_prob(d), prior_pred});
      }
      if (d < max_depth) {
        const std::int32_t k =
            by_depth ? asg.feature_at_depth(d) : asg.feature_at_node(addr);
        const std::int32_t m = x[static_cast<std::size_t>(k) - 1];
        if (id != MetaTreeModel<F>::kNoChild) id = model.child_id(id, m);
        if (!by_depth) addr.path.push_back(m);
      }
    }
    value = views.back().pred;  // path leaf: split probability is 0 there
    views.pop_back();
  } else {
    std::int32_t id = model.root_id();
    std::int32_t d = 0;
    while (id != MetaTreeModel<F>::kNoChild) {
      const auto& n = model.node(id);
      views.push_back({n.g_posterior, n.leaf.predictive()});
      id = model.child_id(
          id, x[static_cast<std::size_t>(asg.feature_at_depth(d)) - 1]);
      ++d;
    }
    value = prior_pred;  // collapsed prior tail
  }

  for (auto it = views.rbegin(); it != views.rend(); ++it) {
    typename F::Predictive mixed = F::zero_predictive();
    F::add_scaled(mixed, 1.0 - it->g, it->pred);
    F::add_scaled(mixed, it->g, value);
    value = mixed;
  }
  return value;
}

// Drive a whole batch through one engine. The sequential engine consumes the
// rows in order; the others hand the batch to their single-shot update.
template <LeafFamily F>
FitReport fit(MetaTreeModel<F>& model, const DataBatch<F>& data, Engine engine,
              LazyOptions lazy_opts = {}, MarginalMemo<F>* memo = nullptr) {
  switch (engine) {
    case Engine::sequential: {
      const detail::Timer timer;
      std::int64_t visits = 0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        visits += sequential_update(model, data.x_row(i), data.y(i)).nodes_visited;
      }
      return {Engine::sequential, static_cast<std::int64_t>(data.size()), visits,
              model.log_marginal_cum(), timer.ms()};
    }
    case Engine::batch:
      return batch_update(model, data, memo);
    case Engine::sparse:
      return batch_update_sparse(model, data, memo);
    case Engine::lazy:
      return batch_update_lazy(model, data, lazy_opts, memo);
  }
  throw ContractError("unknown engine");
}

}  // namespace metatree
