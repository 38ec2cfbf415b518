#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cktdesign/core.hpp"
#include "cktdesign/mlp.hpp"

namespace cktdesign::oracle {

/// Lex-best feasible point by enumeration and a full sort, or -1 if none.
inline std::ptrdiff_t best_feasible(const Dataset& d, const MetricVector& q,
                                    const std::vector<MetricSpec>& metrics) {
  std::vector<std::size_t> feasible;
  for (std::size_t i = 0; i < d.size(); ++i) {
    bool ok = true;
    for (std::size_t m = 0; m < metrics.size(); ++m)
      ok = ok && metrics[m].direction * d.points[i].y[m] >= metrics[m].direction * q[m];
    if (ok) feasible.push_back(i);
  }
  if (feasible.empty()) return -1;
  std::vector<std::size_t> by_rank(metrics.size());
  for (std::size_t m = 0; m < metrics.size(); ++m) by_rank[metrics[m].priority - 1] = m;
  std::sort(feasible.begin(), feasible.end(), [&](std::size_t a, std::size_t b) {
    for (auto m : by_rank) {
      const double va = metrics[m].direction * d.points[a].y[m];
      const double vb = metrics[m].direction * d.points[b].y[m];
      if (va != vb) return va > vb;
    }
    return a < b;
  });
  return static_cast<std::ptrdiff_t>(feasible.front());
}

/// Largest relative disagreement between the analytic MLP gradient and
/// central finite differences of the loss, over every weight and bias.
/// Entries below 1e-6 in magnitude are compared in absolute terms.
inline double gradient_check(std::mt19937_64& g, std::vector<int> sizes = {2, 3, 2}, int batch = 4,
                             double h = 1e-5) {
  using Net = Mlp<double>;
  std::normal_distribution<double> normal(0.0, 1.0);
  Net net(sizes);
  for (auto& layer : net.layers()) {
    for (auto& w : layer.weight.reshaped()) w = normal(g);
    for (auto& b : layer.bias) b = normal(g);
  }
  Net::Matrix x(sizes.front(), batch), y(sizes.back(), batch);
  for (auto& v : x.reshaped()) v = normal(g);
  for (auto& v : y.reshaped()) v = normal(g);

  const auto grad = net.gradient(x, y);
  double worst = 0.0;
  auto probe = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = net.loss(x, y);
    param = saved - h;
    const double down = net.loss(x, y);
    param = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic - numeric) / scale);
  };
  for (std::size_t l = 0; l < net.depth(); ++l) {
    auto& layer = net.layers()[l];
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
      probe(layer.weight.data()[i], grad.layers[l].weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) probe(layer.bias(i), grad.layers[l].bias(i));
  }
  return worst;
}

}  // namespace cktdesign::oracle
