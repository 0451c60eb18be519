#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "metatree/errors.hpp"

namespace metatree {

// Contract for a conjugate observation model attached to a node. A family
// bundles prior hyperparameters (Params), order-independent sufficient
// statistics of the observations seen at the node (SuffStat), and the
// closed forms the engines need: the marginal likelihood of the absorbed
// observations against the prior, the one-step posterior predictive, and the
// conjugate posterior-hyperparameter update. Adding a family requires no
// change to the tree or the update engines.
template <typename F>
concept LeafFamily =
    std::equality_comparable<typename F::Params> &&
    std::equality_comparable<typename F::SuffStat> &&
    std::default_initializable<typename F::SuffStat> &&
    requires(const typename F::Params& p, const typename F::SuffStat& st,
             typename F::SuffStat& mst, const typename F::Value& y,
             typename F::Predictive& acc, const typename F::Predictive& pr,
             double w) {
      { F::name() } -> std::convertible_to<std::string_view>;
      { F::validate_params(p) };
      { F::validate_value(y) };
      { F::accumulate(mst, y) };
      { F::count(st) } -> std::convertible_to<std::int64_t>;
      { F::log_marginal(p, st) } -> std::same_as<double>;
      { F::log_predictive(p, st, y) } -> std::same_as<double>;
      { F::posterior(p, st) } -> std::same_as<typename F::Params>;
      { F::predictive(p, st) } -> std::same_as<typename F::Predictive>;
      { F::zero_predictive() } -> std::same_as<typename F::Predictive>;
      { F::add_scaled(acc, w, pr) };
    };

// Value-type state of one node's observation model: the prior it integrates
// against plus the sufficient statistics absorbed so far. Copy freely;
// `absorbed` returns a new state instead of mutating.
template <typename F>
struct LeafState {
  typename F::Params prior{};
  typename F::SuffStat stats{};

  std::int64_t count() const { return F::count(stats); }

  // log of the likelihood of every absorbed observation, integrated against
  // the prior; 0 when nothing has been absorbed.
  double log_marginal() const { return F::log_marginal(prior, stats); }

  // One-step posterior-predictive log-density of y given the absorbed data.
  double log_predictive(const typename F::Value& y) const {
    return F::log_predictive(prior, stats, y);
  }

  typename F::Params posterior_params() const { return F::posterior(prior, stats); }
  typename F::Predictive predictive() const { return F::predictive(prior, stats); }

  LeafState absorbed(const typename F::Value& y) const {
    LeafState next = *this;
    F::validate_value(y);
    F::accumulate(next.stats, y);
    return next;
  }

  LeafState absorbed(std::span<const typename F::Value> ys) const {
    LeafState next = *this;
    for (const auto& y : ys) {
      F::validate_value(y);
      F::accumulate(next.stats, y);
    }
    return next;
  }

  bool operator==(const LeafState&) const = default;
};

// Marginal likelihood of a multiset of observations under a bare prior.
template <typename F>
double log_marginal(const typename F::Params& prior,
                    std::span<const typename F::Value> ys) {
  typename F::SuffStat st{};
  for (const auto& y : ys) {
    F::validate_value(y);
    F::accumulate(st, y);
  }
  return F::log_marginal(prior, st);
}

// Bernoulli observations y in {0,1} with a Beta(alpha, beta) prior on the
// success probability.
struct BernoulliBeta {
  struct Params {
    double alpha = 1.0;
    double beta = 1.0;
    friend auto operator<=>(const Params&, const Params&) = default;
  };

  struct SuffStat {
    std::int64_t ones = 0;
    std::int64_t zeros = 0;
    friend auto operator<=>(const SuffStat&, const SuffStat&) = default;
  };

  using Value = std::int32_t;
  using Predictive = double;  // P(y = 1)

  static constexpr std::string_view name() { return "bernoulli_beta"; }

  static void validate_params(const Params& p) {
    if (!(p.alpha > 0.0) || !(p.beta > 0.0) || !std::isfinite(p.alpha) ||
        !std::isfinite(p.beta)) {
      throw ValidationError("beta hyperparameters must be finite and positive");
    }
  }

  static void validate_value(Value y) {
    if (y != 0 && y != 1) {
      throw ValidationError("objective value must be 0 or 1, got " +
                            std::to_string(y));
    }
  }

  static void accumulate(SuffStat& st, Value y) { (y ? st.ones : st.zeros) += 1; }

  static std::int64_t count(const SuffStat& st) { return st.ones + st.zeros; }

  // log Beta(alpha + ones, beta + zeros) - log Beta(alpha, beta)
  static double log_marginal(const Params& p, const SuffStat& st) {
    if (st.ones == 0 && st.zeros == 0) return 0.0;
    return log_beta(p.alpha + static_cast<double>(st.ones),
                    p.beta + static_cast<double>(st.zeros)) -
           log_beta(p.alpha, p.beta);
  }

  static double log_predictive(const Params& p, const SuffStat& st, Value y) {
    validate_value(y);
    const double a = p.alpha + static_cast<double>(st.ones);
    const double b = p.beta + static_cast<double>(st.zeros);
    return std::log((y ? a : b) / (a + b));
  }

  static Params posterior(const Params& p, const SuffStat& st) {
    return Params{p.alpha + static_cast<double>(st.ones),
                  p.beta + static_cast<double>(st.zeros)};
  }

  static Predictive predictive(const Params& p, const SuffStat& st) {
    const double a = p.alpha + static_cast<double>(st.ones);
    const double b = p.beta + static_cast<double>(st.zeros);
    return a / (a + b);
  }

  static Predictive zero_predictive() { return 0.0; }
  static void add_scaled(Predictive& acc, double w, const Predictive& pr) {
    acc += w * pr;
  }

 private:
  static double log_beta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  }
};

static_assert(LeafFamily<BernoulliBeta>);

}  // namespace metatree
