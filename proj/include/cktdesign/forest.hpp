#pragma once

// Random-forest regression: bootstrap-aggregated CART trees split on variance
// reduction, grown without a depth limit, all features considered per split.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "core.hpp"
#include "rng.hpp"

namespace cktdesign {

struct ForestConfig {
  int trees = 100;
  bool bootstrap = true;
  int min_samples_split = 2;

  void validate() const {
    if (trees < 1) throw contract_violation("forest needs at least one tree");
    if (min_samples_split < 2) throw contract_violation("min_samples_split must be >= 2");
  }
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when x[feature] <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;  // leaf mean
};

/// Row-major sample matrix view.
struct FeatureMatrix {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  /// Grow on the listed sample rows (repeats allowed, as produced by bootstrap).
  void fit(const FeatureMatrix& X, std::span<const double> y, std::vector<std::size_t> samples,
           int min_samples_split = 2) {
    if (samples.empty()) throw contract_violation("cannot grow a tree on zero samples");
    nodes_.clear();
    struct Task {
      std::size_t begin, end;
      std::int32_t node;
    };
    std::vector<Task> stack;
    nodes_.push_back({});
    stack.push_back({0, samples.size(), 0});
    std::vector<std::pair<double, double>> column;  // (feature value, target)

    while (!stack.empty()) {
      const Task task = stack.back();
      stack.pop_back();
      const auto count = task.end - task.begin;
      double sum = 0.0;
      for (auto i = task.begin; i < task.end; ++i) sum += y[samples[i]];
      const double mean = sum / static_cast<double>(count);
      nodes_[task.node].value = mean;

      bool constant_target = true;
      for (auto i = task.begin + 1; i < task.end && constant_target; ++i)
        constant_target = y[samples[i]] == y[samples[task.begin]];
      if (constant_target) nodes_[task.node].value = y[samples[task.begin]];
      if (count < static_cast<std::size_t>(min_samples_split) || constant_target) continue;

      // Maximize S_L^2/n_L + S_R^2/n_R, equivalent to minimizing child SSE.
      const double parent_score = sum * sum / static_cast<double>(count);
      double best_score = parent_score;
      std::int32_t best_feature = -1;
      double best_threshold = 0.0;
      for (std::size_t f = 0; f < X.cols; ++f) {
        column.clear();
        for (auto i = task.begin; i < task.end; ++i)
          column.emplace_back(X.at(samples[i], f), y[samples[i]]);
        std::sort(column.begin(), column.end());
        if (column.front().first == column.back().first) continue;
        double left_sum = 0.0;
        for (std::size_t s = 0; s + 1 < count; ++s) {
          left_sum += column[s].second;
          if (column[s].first == column[s + 1].first) continue;
          const auto nl = static_cast<double>(s + 1);
          const auto nr = static_cast<double>(count - s - 1);
          const double right_sum = sum - left_sum;
          const double score = left_sum * left_sum / nl + right_sum * right_sum / nr;
          if (score > best_score) {
            best_score = score;
            best_feature = static_cast<std::int32_t>(f);
            double mid = 0.5 * (column[s].first + column[s + 1].first);
            if (mid >= column[s + 1].first) mid = column[s].first;
            best_threshold = mid;
          }
        }
      }
      if (best_feature < 0) continue;

      const auto split = std::partition(
          samples.begin() + static_cast<std::ptrdiff_t>(task.begin),
          samples.begin() + static_cast<std::ptrdiff_t>(task.end),
          [&](std::size_t r) { return X.at(r, static_cast<std::size_t>(best_feature)) <= best_threshold; });
      const auto mid = static_cast<std::size_t>(split - samples.begin());
      if (mid == task.begin || mid == task.end) continue;

      const auto left = static_cast<std::int32_t>(nodes_.size());
      nodes_.push_back({});
      const auto right = static_cast<std::int32_t>(nodes_.size());
      nodes_.push_back({});
      auto& node = nodes_[task.node];
      node.feature = best_feature;
      node.threshold = best_threshold;
      node.left = left;
      node.right = right;
      stack.push_back({mid, task.end, right});
      stack.push_back({task.begin, mid, left});
    }
  }

  double predict(std::span<const double> x) const {
    if (nodes_.empty()) throw contract_violation("tree is empty");
    std::int32_t i = 0;
    while (nodes_[i].feature >= 0) {
      const auto& n = nodes_[i];
      i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes_[i].value;
  }

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

  /// Structural sanity for deserialized trees.
  void check(std::size_t features) const {
    if (nodes_.empty()) throw contract_violation("tree has no nodes");
    const auto n = static_cast<std::int32_t>(nodes_.size());
    for (std::int32_t i = 0; i < n; ++i) {
      const auto& node = nodes_[i];
      if (node.feature < 0) continue;
      if (static_cast<std::size_t>(node.feature) >= features || node.left <= i || node.right <= i ||
          node.left >= n || node.right >= n)
        throw contract_violation("tree node " + std::to_string(i) + " is malformed");
    }
  }

 private:
  std::vector<TreeNode> nodes_;
};

/// Ensemble for one scalar target.
class ForestRegressor {
 public:
  ForestRegressor() = default;
  explicit ForestRegressor(std::vector<RegressionTree> trees) : trees_(std::move(trees)) {}

  void fit(const FeatureMatrix& X, std::span<const double> y, const ForestConfig& cfg,
           std::uint64_t seed) {
    cfg.validate();
    if (X.rows == 0 || y.size() != X.rows) throw contract_violation("forest training data is empty or ragged");
    trees_.assign(static_cast<std::size_t>(cfg.trees), {});
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      std::vector<std::size_t> samples(X.rows);
      if (cfg.bootstrap) {
        Rng rng(derive_seed(seed, {t}));
        for (auto& s : samples) s = static_cast<std::size_t>(rng.below(X.rows));
      } else {
        std::iota(samples.begin(), samples.end(), std::size_t{0});
      }
      trees_[t].fit(X, y, std::move(samples), cfg.min_samples_split);
    }
  }

  double predict(std::span<const double> x) const {
    if (trees_.empty()) throw contract_violation("forest has no trees");
    double sum = 0.0;
    for (const auto& t : trees_) sum += t.predict(x);
    return sum / static_cast<double>(trees_.size());
  }

  const std::vector<RegressionTree>& trees() const noexcept { return trees_; }

 private:
  std::vector<RegressionTree> trees_;
};

}  // namespace cktdesign
