#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "metatree/errors.hpp"
#include "metatree/leaf_model.hpp"

namespace metatree {

// Validated rows (x, y): x is a K-vector with entries in {1..M}, y an
// observation of the leaf family. Stored flat, row-major.
template <LeafFamily F>
class DataBatch {
 public:
  DataBatch(std::int32_t feature_count, std::int32_t arity)
      : feature_count_(feature_count), arity_(arity) {
    if (feature_count < 1 || arity < 2) {
      throw ValidationError("data batch needs feature_count >= 1 and arity >= 2");
    }
  }

  // Row/column numbers in diagnostics are 1-based.
  void add_row(std::span<const std::int32_t> x, const typename F::Value& y) {
    const std::size_t row = size() + 1;
    if (static_cast<std::int32_t>(x.size()) != feature_count_) {
      throw ValidationError("row " + std::to_string(row) + ": expected " +
                            std::to_string(feature_count_) + " feature values, got " +
                            std::to_string(x.size()));
    }
    for (std::int32_t k = 0; k < feature_count_; ++k) {
      if (x[k] < 1 || x[k] > arity_) {
        throw ValidationError("row " + std::to_string(row) + ", column x" +
                              std::to_string(k + 1) + ": value " +
                              std::to_string(x[k]) + " outside [1, " +
                              std::to_string(arity_) + "]");
      }
    }
    try {
      F::validate_value(y);
    } catch (const ValidationError& e) {
      throw ValidationError("row " + std::to_string(row) + ", column y: " + e.what());
    }
    xs_.insert(xs_.end(), x.begin(), x.end());
    ys_.push_back(y);
  }

  std::size_t size() const { return ys_.size(); }
  bool empty() const { return ys_.empty(); }
  std::int32_t feature_count() const { return feature_count_; }
  std::int32_t arity() const { return arity_; }

  std::span<const std::int32_t> x_row(std::size_t row) const {
    return {xs_.data() + row * static_cast<std::size_t>(feature_count_),
            static_cast<std::size_t>(feature_count_)};
  }

  const typename F::Value& y(std::size_t row) const { return ys_[row]; }

  DataBatch permuted(std::span<const std::size_t> order) const {
    DataBatch out(feature_count_, arity_);
    for (std::size_t i : order) out.add_row(x_row(i), ys_[i]);
    return out;
  }

 private:
  std::int32_t feature_count_;
  std::int32_t arity_;
  std::vector<std::int32_t> xs_;
  std::vector<typename F::Value> ys_;
};

}  // namespace metatree
