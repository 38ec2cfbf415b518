#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "core.hpp"
#include "parallel.hpp"
#include "spice.hpp"
#include "surrogate.hpp"

namespace cktdesign {

/// Cartesian product of the parameter axes in row-major order (last
/// parameter varies fastest). Axis values are start + i*step.
inline std::vector<ParameterVector> build_grid(const CircuitTopology& t) {
  if (t.parameters.empty()) throw contract_violation("cannot build a grid with no parameters");
  std::vector<std::size_t> counts;
  std::size_t total = 1;
  for (const auto& p : t.parameters) {
    p.validate();
    counts.push_back(p.count());
    total *= counts.back();
  }
  std::vector<ParameterVector> grid;
  grid.reserve(total);
  std::vector<std::size_t> idx(t.n(), 0);
  for (std::size_t g = 0; g < total; ++g) {
    std::vector<double> x(t.n());
    for (std::size_t i = 0; i < t.n(); ++i) x[i] = t.parameters[i].value(idx[i]);
    grid.emplace_back(std::move(x));
    for (std::size_t i = t.n(); i-- > 0;) {
      if (++idx[i] < counts[i]) break;
      idx[i] = 0;
    }
  }
  return grid;
}

inline std::size_t grid_size(const CircuitTopology& t) {
  std::size_t total = 1;
  for (const auto& p : t.parameters) total *= p.count();
  return total;
}

struct SimulateOptions {
  bool clamp = false;             // clamp x into the parameter box instead of rejecting it
  std::int64_t point_index = -1;  // carried by simulation_failed
};

/// Forward model f: X -> Y.
inline MetricVector simulate(const CircuitTopology& t, const ParameterVector& x,
                             const SimulateOptions& opts = {}) {
  if (x.size() != t.n())
    throw contract_violation("parameter vector has " + std::to_string(x.size()) +
                             " values, topology '" + t.id + "' expects " + std::to_string(t.n()));
  const ParameterVector in = opts.clamp ? t.clamp(x) : x;
  if (!opts.clamp && !t.in_box(in))
    throw contract_violation("parameter vector outside the design box of '" + t.id + "'");

  MetricVector y;
  if (t.backend.kind == BackendSpec::Kind::surrogate) {
    try {
      y = surrogate_family(t.backend.model, in.view(), SurrogateConstants(&t.backend));
    } catch (const contract_violation& e) {
      throw simulation_failed(e.what(), opts.point_index);
    }
  } else {
    y = run_spice(t, in, opts.point_index);
  }
  for (std::size_t i = 0; i < y.size(); ++i)
    if (!(y[i] > 0.0) || !std::isfinite(y[i]))
      throw simulation_failed("metric '" + t.metrics[i].name + "' is not a positive finite value",
                              opts.point_index);
  return y;
}

/// Simulate every grid point into D0. Failed points are dropped and their
/// grid indices recorded in the metadata; output order is grid order
/// regardless of the worker count.
inline Dataset simulate_grid(const CircuitTopology& t, unsigned threads = 1) {
  const auto grid = build_grid(t);
  if (t.backend.kind == BackendSpec::Kind::spice)
    threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max(1, t.backend.max_workers)));

  std::vector<std::optional<MetricVector>> results(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t i) {
    try {
      results[i] = simulate(t, grid[i], {.point_index = static_cast<std::int64_t>(i)});
    } catch (const simulation_failed&) {
      results[i].reset();
    }
  });

  Dataset d;
  d.topology_id = t.id;
  d.provenance = Provenance::D0;
  d.points.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (results[i])
      d.points.push_back({grid[i], std::move(*results[i]), static_cast<std::int64_t>(i)});
    else
      d.meta.skipped.push_back(static_cast<std::int64_t>(i));
  }
  if (d.points.empty())
    throw simulation_failed("every grid point of '" + t.id + "' failed to simulate");
  return d;
}

}  // namespace cktdesign
