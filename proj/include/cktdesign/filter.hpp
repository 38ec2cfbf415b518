#pragma once

// Training-set construction for the threshold problem.
//
// Starting from simulated data D0 the builders produce:
//   deps        (x, y~)             y~ = (1 - eps*lambda*u) * y, one draw per point
//   dstar-0     (x*(y), y)          x* = lex-best circuit of D0 meeting threshold y
//   dstar-eps   (x*(y~), y~)        same selection against perturbed queries
//   dm-eps      (x, y~_t), t<m      m independent perturbations, original circuits kept
//   dbar-m-eps  (x, y~), x in top-m of the feasible set of y~
//
// Feasibility is always evaluated against the unperturbed metrics of the D0
// passed in (the training portion under cross-validation).

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "core.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace cktdesign {

struct PerturbationConfig {
  double epsilon = 0.2;
  std::uint64_t seed = 0;
  int replicates = 20;  // m

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon < 1.0))
      throw contract_violation("epsilon must lie in [0, 1), got " + std::to_string(epsilon));
    if (replicates < 1) throw contract_violation("m must be >= 1");
  }
};

/// y~_i = (1 - eps * lambda_i * u_i) * y_i.
inline MetricVector perturb_query(const MetricVector& y, std::span<const MetricSpec> metrics,
                                  double epsilon, std::span<const double> u) {
  if (!(epsilon >= 0.0 && epsilon < 1.0))
    throw contract_violation("epsilon must lie in [0, 1), got " + std::to_string(epsilon));
  if (y.size() != metrics.size() || u.size() != metrics.size())
    throw contract_violation("perturb_query: dimension mismatch");
  MetricVector out = y;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(u[i] >= 0.0 && u[i] < 1.0)) throw contract_violation("perturbation draw outside [0, 1)");
    out[i] = (1.0 - epsilon * static_cast<double>(metrics[i].direction) * u[i]) * y[i];
  }
  return out;
}

/// Stream key for a point: its D0 index when known, otherwise its position.
inline std::uint64_t point_key(const DesignPoint& p, std::size_t position) {
  return p.source_index >= 0 ? static_cast<std::uint64_t>(p.source_index) : position;
}

inline std::vector<double> perturbation_draw(std::uint64_t seed, std::uint64_t point,
                                             std::uint64_t replicate, std::size_t k) {
  std::vector<double> u(k);
  for (std::size_t j = 0; j < k; ++j) u[j] = stream_uniform(seed, point, replicate, j);
  return u;
}

/// Perturbed metrics of every point for one replicate.
inline std::vector<MetricVector> perturbed_queries(const Dataset& d0,
                                                   std::span<const MetricSpec> metrics,
                                                   const PerturbationConfig& cfg,
                                                   std::uint64_t replicate) {
  std::vector<MetricVector> out;
  out.reserve(d0.size());
  for (std::size_t i = 0; i < d0.size(); ++i) {
    const auto u = perturbation_draw(cfg.seed, point_key(d0.points[i], i), replicate, metrics.size());
    out.push_back(perturb_query(d0.points[i].y, metrics, cfg.epsilon, u));
  }
  return out;
}

/// lambda-signed, priority-ordered metric keys of a dataset, for fast
/// feasibility scans and lexicographic selection.
class FeasibilityIndex {
 public:
  FeasibilityIndex(const Dataset& d0, std::span<const MetricSpec> metrics)
      : order_(metrics), k_(metrics.size()), n_(d0.size()), keys_(n_ * k_) {
    for (std::size_t i = 0; i < n_; ++i) {
      if (d0.points[i].y.size() != k_) throw contract_violation("dataset/metric dimension mismatch");
      order_.signed_keys(d0.points[i].y.view(), std::span(keys_).subspan(i * k_, k_));
    }
  }

  std::size_t size() const noexcept { return n_; }

  std::vector<double> query_keys(const MetricVector& q) const {
    if (q.size() != k_) throw contract_violation("query dimension mismatch");
    std::vector<double> out(k_);
    order_.signed_keys(q.view(), out);
    return out;
  }

  bool feasible(std::size_t i, std::span<const double> qk) const {
    const double* row = &keys_[i * k_];
    for (std::size_t r = 0; r < k_; ++r)
      if (!(row[r] >= qk[r])) return false;
    return true;
  }

  /// Strict lexicographic preference of point a over point b.
  bool lex_greater(std::size_t a, std::size_t b) const {
    const double* ra = &keys_[a * k_];
    const double* rb = &keys_[b * k_];
    for (std::size_t r = 0; r < k_; ++r) {
      if (ra[r] > rb[r]) return true;
      if (ra[r] < rb[r]) return false;
    }
    return false;
  }

  /// Descending lexicographic order, ties by ascending index.
  bool ranks_before(std::size_t a, std::size_t b) const {
    if (lex_greater(a, b)) return true;
    if (lex_greater(b, a)) return false;
    return a < b;
  }

  std::vector<std::size_t> feasible_set(const MetricVector& q) const {
    const auto qk = query_keys(q);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_; ++i)
      if (feasible(i, qk)) out.push_back(i);
    return out;
  }

  std::size_t best(std::span<const std::size_t> candidates) const {
    if (candidates.empty()) throw contract_violation("lex_argmax of an empty candidate set");
    std::size_t best = candidates.front();
    for (auto c : candidates) {
      if (c >= n_) throw contract_violation("candidate index out of range");
      if (ranks_before(c, best)) best = c;
    }
    return best;
  }

  /// Lex-best feasible point for a query, or nullopt when none is feasible.
  std::optional<std::size_t> best_feasible(const MetricVector& q) const {
    const auto qk = query_keys(q);
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < n_; ++i)
      if (feasible(i, qk) && (!best || lex_greater(i, *best))) best = i;
    return best;
  }

  std::vector<std::size_t> top_feasible(const MetricVector& q, std::size_t m) const {
    auto f = feasible_set(q);
    const auto take = std::min(m, f.size());
    std::partial_sort(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(take), f.end(),
                      [this](std::size_t a, std::size_t b) { return ranks_before(a, b); });
    f.resize(take);
    return f;
  }

 private:
  MetricOrder order_;
  std::size_t k_;
  std::size_t n_;
  std::vector<double> keys_;
};

/// Indices (ascending) of points whose metrics meet the threshold query.
inline std::vector<std::size_t> feasible_set(const MetricVector& y_query, const Dataset& d0,
                                             std::span<const MetricSpec> metrics) {
  return FeasibilityIndex(d0, metrics).feasible_set(y_query);
}

/// Index of the lexicographically best candidate; identical metric vectors
/// resolve to the smallest index.
inline std::size_t lex_argmax(std::span<const std::size_t> indices, const Dataset& d0,
                              std::span<const MetricSpec> metrics) {
  return FeasibilityIndex(d0, metrics).best(indices);
}

namespace detail {

inline Dataset derived(const Dataset& d0, const CircuitTopology& t, Provenance p) {
  Dataset out;
  out.topology_id = d0.topology_id.empty() ? t.id : d0.topology_id;
  out.provenance = p;
  out.meta.metric_order = t.priority_order();
  return out;
}

inline void set_perturbation_meta(Dataset& d, const PerturbationConfig& cfg, bool multi) {
  d.meta.seed = cfg.seed;
  d.meta.epsilon = cfg.epsilon;
  if (multi) d.meta.replicates = cfg.replicates;
}

/// Pair each query with its lex-best feasible circuit.
inline std::vector<DesignPoint> select_targets(const Dataset& d0, const FeasibilityIndex& index,
                                               const std::vector<MetricVector>& queries,
                                               unsigned threads) {
  std::vector<DesignPoint> out(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    const auto best = index.best_feasible(queries[i]);
    if (!best)
      throw contract_violation("query " + std::to_string(i) + " has an empty feasible set");
    const auto& target = d0.points[*best];
    out[i] = {target.x, queries[i], target.source_index};
  });
  return out;
}

}  // namespace detail

inline Dataset build_deps(const Dataset& d0, const CircuitTopology& t,
                          const PerturbationConfig& cfg) {
  cfg.validate();
  if (d0.empty()) throw contract_violation("D0 is empty");
  auto out = detail::derived(d0, t, Provenance::Deps);
  detail::set_perturbation_meta(out, cfg, false);
  const auto queries = perturbed_queries(d0, t.metrics, cfg, 0);
  out.points.reserve(d0.size());
  for (std::size_t i = 0; i < d0.size(); ++i)
    out.points.push_back({d0.points[i].x, queries[i], d0.points[i].source_index});
  return out;
}

inline Dataset build_dstar0(const Dataset& d0, const CircuitTopology& t, unsigned threads = 1) {
  if (d0.empty()) throw contract_violation("D0 is empty");
  auto out = detail::derived(d0, t, Provenance::DstarZero);
  const FeasibilityIndex index(d0, t.metrics);
  std::vector<MetricVector> queries;
  queries.reserve(d0.size());
  for (const auto& p : d0.points) queries.push_back(p.y);
  out.points = detail::select_targets(d0, index, queries, threads);
  return out;
}

inline Dataset build_dstar_eps(const Dataset& d0, const CircuitTopology& t,
                               const PerturbationConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  if (d0.empty()) throw contract_violation("D0 is empty");
  auto out = detail::derived(d0, t, Provenance::DstarEps);
  detail::set_perturbation_meta(out, cfg, false);
  const FeasibilityIndex index(d0, t.metrics);
  out.points = detail::select_targets(d0, index, perturbed_queries(d0, t.metrics, cfg, 0), threads);
  return out;
}

inline Dataset build_dm_eps(const Dataset& d0, const CircuitTopology& t,
                            const PerturbationConfig& cfg) {
  cfg.validate();
  if (d0.empty()) throw contract_violation("D0 is empty");
  auto out = detail::derived(d0, t, Provenance::DmEps);
  detail::set_perturbation_meta(out, cfg, true);
  out.points.reserve(d0.size() * static_cast<std::size_t>(cfg.replicates));
  for (int r = 0; r < cfg.replicates; ++r) {
    const auto queries = perturbed_queries(d0, t.metrics, cfg, static_cast<std::uint64_t>(r));
    for (std::size_t i = 0; i < d0.size(); ++i)
      out.points.push_back({d0.points[i].x, queries[i], d0.points[i].source_index});
  }
  return out;
}

inline Dataset build_dbar_m_eps(const Dataset& d0, const CircuitTopology& t,
                                const PerturbationConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  if (d0.empty()) throw contract_violation("D0 is empty");
  auto out = detail::derived(d0, t, Provenance::DbarMEps);
  detail::set_perturbation_meta(out, cfg, true);
  const FeasibilityIndex index(d0, t.metrics);
  const auto queries = perturbed_queries(d0, t.metrics, cfg, 0);
  std::vector<std::vector<std::size_t>> chosen(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    chosen[i] = index.top_feasible(queries[i], static_cast<std::size_t>(cfg.replicates));
  });
  for (std::size_t i = 0; i < queries.size(); ++i)
    for (auto c : chosen[i])
      out.points.push_back({d0.points[c].x, queries[i], d0.points[c].source_index});
  return out;
}

/// Dispatch on the dataset construction method.
inline Dataset build_dataset(Provenance method, const Dataset& d0, const CircuitTopology& t,
                             const PerturbationConfig& cfg, unsigned threads = 1) {
  switch (method) {
    case Provenance::D0: {
      Dataset out = d0;
      out.provenance = Provenance::D0;
      out.meta.seed.reset();
      out.meta.epsilon.reset();
      out.meta.replicates.reset();
      return out;
    }
    case Provenance::Deps: return build_deps(d0, t, cfg);
    case Provenance::DstarZero: return build_dstar0(d0, t, threads);
    case Provenance::DstarEps: return build_dstar_eps(d0, t, cfg, threads);
    case Provenance::DmEps: return build_dm_eps(d0, t, cfg);
    case Provenance::DbarMEps: return build_dbar_m_eps(d0, t, cfg, threads);
  }
  throw contract_violation("unknown dataset method");
}

// ---------------------------------------------------------------------------
// Normalization to [-1, 1]
// ---------------------------------------------------------------------------

struct NormalizationStats {
  std::vector<double> min;
  std::vector<double> max;

  std::size_t size() const noexcept { return min.size(); }

  void check(std::size_t n) const {
    if (n != min.size())
      throw contract_violation("normalization stats have " + std::to_string(min.size()) +
                               " features, input has " + std::to_string(n));
  }

  double apply(std::size_t f, double v) const {
    const double range = max[f] - min[f];
    if (range == 0.0) return 0.0;
    return 2.0 * (v - min[f]) / range - 1.0;
  }

  double invert(std::size_t f, double a) const {
    const double range = max[f] - min[f];
    if (range == 0.0) return min[f];
    return (a + 1.0) * 0.5 * range + min[f];
  }

  std::vector<double> apply(std::span<const double> v) const {
    check(v.size());
    std::vector<double> out(v.size());
    for (std::size_t f = 0; f < v.size(); ++f) out[f] = apply(f, v[f]);
    return out;
  }

  std::vector<double> invert(std::span<const double> a) const {
    check(a.size());
    std::vector<double> out(a.size());
    for (std::size_t f = 0; f < a.size(); ++f) out[f] = invert(f, a[f]);
    return out;
  }

  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

enum class Side { parameters, metrics };

inline NormalizationStats fit_normalizer(const Dataset& d, Side side) {
  if (d.empty()) throw contract_violation("cannot fit normalization on an empty dataset");
  auto row = [&](const DesignPoint& p) {
    return side == Side::parameters ? p.x.view() : p.y.view();
  };
  const auto width = row(d.points.front()).size();
  NormalizationStats s{std::vector<double>(row(d.points.front()).begin(), row(d.points.front()).end()),
                       std::vector<double>(row(d.points.front()).begin(), row(d.points.front()).end())};
  for (const auto& p : d.points) {
    const auto r = row(p);
    if (r.size() != width) throw contract_violation("ragged dataset");
    for (std::size_t f = 0; f < width; ++f) {
      s.min[f] = std::min(s.min[f], r[f]);
      s.max[f] = std::max(s.max[f], r[f]);
    }
  }
  return s;
}

}  // namespace cktdesign
