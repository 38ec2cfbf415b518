#pragma once

// Domain model shared by every stage of the pipeline: parameter/metric specs,
// circuit topologies, design points, datasets, and the threshold ordering
// predicates (feasibility, lexicographic preference, Pareto dominance).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace cktdesign {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class contract_violation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class simulation_failed : public std::runtime_error {
 public:
  explicit simulation_failed(const std::string& what, std::int64_t point_index = -1)
      : std::runtime_error(what), point_index_(point_index) {}
  std::int64_t point_index() const noexcept { return point_index_; }

 private:
  std::int64_t point_index_;
};

// ---------------------------------------------------------------------------
// Strongly typed real vectors
// ---------------------------------------------------------------------------

template <class Tag>
struct RealVector {
  std::vector<double> values;

  RealVector() = default;
  explicit RealVector(std::vector<double> v) : values(std::move(v)) {}
  RealVector(std::initializer_list<double> v) : values(v) {}

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  auto begin() const noexcept { return values.begin(); }
  auto end() const noexcept { return values.end(); }
  std::span<const double> view() const noexcept { return values; }

  friend bool operator==(const RealVector&, const RealVector&) = default;
};

using ParameterVector = RealVector<struct ParameterTag>;
using MetricVector = RealVector<struct MetricTag>;

// ---------------------------------------------------------------------------
// Specs and topology
// ---------------------------------------------------------------------------

struct ParameterSpec {
  std::string name;
  std::string unit;
  double start = 0.0;
  double step = 1.0;
  double end = 0.0;

  void validate() const {
    if (!(step > 0.0)) throw config_error("parameter '" + name + "': step must be > 0");
    if (!(end >= start)) throw config_error("parameter '" + name + "': end must be >= start");
  }

  /// Number of grid values, endpoint included when (end-start)/step is
  /// integral to within 1e-9.
  std::size_t count() const {
    return static_cast<std::size_t>(std::floor((end - start) / step + 1e-9)) + 1;
  }

  /// i-th grid value, computed as start + i*step (never by accumulation).
  double value(std::size_t i) const { return start + static_cast<double>(i) * step; }

  bool contains(double v) const {
    const double slack = 1e-9 * std::max({std::abs(start), std::abs(end), step});
    return v >= start - slack && v <= end + slack;
  }
};

struct MetricSpec {
  std::string name;
  std::string unit;
  int direction = 1;  // +1 majorative, -1 minorative
  int priority = 1;   // 1 = most preferred
};

struct BackendSpec {
  enum class Kind { surrogate, spice };
  Kind kind = Kind::surrogate;

  // surrogate
  std::string model;
  std::vector<std::pair<std::string, double>> constants;
  // metric name -> per-parameter sign of the partial derivative (+1, -1, 0)
  std::vector<std::pair<std::string, std::vector<int>>> tradeoffs;

  // spice
  std::string netlist_template;  // resolved path
  std::string executable;
  std::vector<std::string> analyses;
  std::vector<std::pair<std::string, std::string>> measurements;  // measurement -> metric
  int max_workers = 4;

  std::optional<double> constant(std::string_view key) const {
    for (const auto& [k, v] : constants)
      if (k == key) return v;
    return std::nullopt;
  }
};

inline void validate_metrics(std::span<const MetricSpec> metrics) {
  std::vector<int> seen(metrics.size(), 0);
  for (const auto& m : metrics) {
    if (m.direction != 1 && m.direction != -1)
      throw config_error("metric '" + m.name + "': direction must be +1 or -1");
    if (m.priority < 1 || m.priority > static_cast<int>(metrics.size()))
      throw config_error("metric '" + m.name + "': priority out of range 1.." +
                         std::to_string(metrics.size()));
    if (seen[m.priority - 1]++)
      throw config_error("metric priorities must be a permutation of 1..k");
  }
}

struct CircuitTopology {
  std::string id;
  std::vector<ParameterSpec> parameters;
  std::vector<MetricSpec> metrics;
  BackendSpec backend;

  std::size_t n() const noexcept { return parameters.size(); }
  std::size_t k() const noexcept { return metrics.size(); }

  void validate() const {
    if (id.empty()) throw config_error("topology id is empty");
    if (parameters.empty()) throw config_error("topology '" + id + "' has no parameters");
    if (metrics.empty()) throw config_error("topology '" + id + "' has no metrics");
    std::unordered_set<std::string> names;
    for (const auto& p : parameters) {
      p.validate();
      if (!names.insert(p.name).second)
        throw config_error("duplicate parameter name '" + p.name + "'");
    }
    names.clear();
    for (const auto& m : metrics)
      if (!names.insert(m.name).second)
        throw config_error("duplicate metric name '" + m.name + "'");
    validate_metrics(metrics);
  }

  std::optional<std::size_t> parameter_index(std::string_view name) const {
    for (std::size_t i = 0; i < parameters.size(); ++i)
      if (parameters[i].name == name) return i;
    return std::nullopt;
  }
  std::optional<std::size_t> metric_index(std::string_view name) const {
    for (std::size_t i = 0; i < metrics.size(); ++i)
      if (metrics[i].name == name) return i;
    return std::nullopt;
  }

  /// Copy with metric priorities reassigned; `order` lists metric names from
  /// most to least preferred and must be a permutation of the metric names.
  CircuitTopology with_priority(std::span<const std::string> order) const {
    if (order.size() != metrics.size())
      throw contract_violation("priority order must name all " + std::to_string(k()) +
                               " metrics");
    CircuitTopology out = *this;
    std::vector<int> assigned(k(), 0);
    for (std::size_t r = 0; r < order.size(); ++r) {
      auto idx = metric_index(order[r]);
      if (!idx) throw contract_violation("unknown metric '" + order[r] + "' in priority order");
      if (assigned[*idx]++) throw contract_violation("metric '" + order[r] + "' repeated");
      out.metrics[*idx].priority = static_cast<int>(r) + 1;
    }
    return out;
  }

  /// Metric names from most to least preferred.
  std::vector<std::string> priority_order() const {
    std::vector<std::string> out(k());
    for (const auto& m : metrics) out[m.priority - 1] = m.name;
    return out;
  }

  bool in_box(const ParameterVector& x) const {
    if (x.size() != n()) return false;
    for (std::size_t i = 0; i < n(); ++i)
      if (!parameters[i].contains(x[i])) return false;
    return true;
  }

  ParameterVector clamp(ParameterVector x) const {
    for (std::size_t i = 0; i < n(); ++i)
      x[i] = std::clamp(x[i], parameters[i].start, parameters[i].end);
    return x;
  }
};

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct DesignPoint {
  ParameterVector x;
  MetricVector y;
  std::int64_t source_index = -1;  // -1 marks a synthetic point
};

enum class Provenance { D0, Deps, DstarZero, DstarEps, DmEps, DbarMEps };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::D0: return "d0";
    case Provenance::Deps: return "deps";
    case Provenance::DstarZero: return "dstar-0";
    case Provenance::DstarEps: return "dstar-eps";
    case Provenance::DmEps: return "dm-eps";
    case Provenance::DbarMEps: return "dbar-m-eps";
  }
  return "?";
}

inline Provenance provenance_from_string(std::string_view s) {
  for (auto p : {Provenance::D0, Provenance::Deps, Provenance::DstarZero, Provenance::DstarEps,
                 Provenance::DmEps, Provenance::DbarMEps})
    if (to_string(p) == s) return p;
  throw contract_violation("unknown dataset method '" + std::string(s) +
                           "' (expected d0, deps, dstar-0, dstar-eps, dm-eps, dbar-m-eps)");
}

constexpr bool is_perturbed(Provenance p) {
  return p == Provenance::Deps || p == Provenance::DstarEps || p == Provenance::DmEps ||
         p == Provenance::DbarMEps;
}
constexpr bool is_multi_sample(Provenance p) {
  return p == Provenance::DmEps || p == Provenance::DbarMEps;
}

struct DatasetMetadata {
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::optional<int> replicates;
  std::vector<std::int64_t> skipped;     // grid indices whose simulation failed
  std::vector<std::string> metric_order;  // priority order used for filtering, if any
  std::string command;
};

struct Dataset {
  std::string topology_id;
  Provenance provenance = Provenance::D0;
  std::vector<DesignPoint> points;
  DatasetMetadata meta;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  void validate(std::size_t n, std::size_t k) const {
    for (std::size_t i = 0; i < points.size(); ++i)
      if (points[i].x.size() != n || points[i].y.size() != k)
        throw contract_violation("dataset point " + std::to_string(i) +
                                 " has wrong dimensionality");
    if (meta.epsilon.has_value() != is_perturbed(provenance))
      throw contract_violation("epsilon must be present exactly for perturbed datasets");
    if (meta.replicates.has_value() != is_multi_sample(provenance))
      throw contract_violation("m must be present exactly for multi-sample datasets");
  }

  /// Points at the given positions, source indices preserved.
  Dataset subset(std::span<const std::size_t> positions) const {
    Dataset out;
    out.topology_id = topology_id;
    out.provenance = provenance;
    out.meta = meta;
    out.points.reserve(positions.size());
    for (auto p : positions) out.points.push_back(points.at(p));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Threshold ordering
// ---------------------------------------------------------------------------

/// Precomputed view of metric directions and priorities. Comparisons work on
/// lambda-signed values walked in priority order; ties are exact equality.
class MetricOrder {
 public:
  explicit MetricOrder(std::span<const MetricSpec> metrics)
      : sign_(metrics.size()), rank_metric_(metrics.size()) {
    validate_metrics(metrics);
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      sign_[i] = static_cast<double>(metrics[i].direction);
      rank_metric_[metrics[i].priority - 1] = i;
    }
  }

  std::size_t size() const noexcept { return sign_.size(); }
  double sign(std::size_t metric) const { return sign_[metric]; }
  std::size_t metric_at_rank(std::size_t rank) const { return rank_metric_[rank]; }

  /// lambda-signed values in priority order.
  void signed_keys(std::span<const double> y, std::span<double> out) const {
    for (std::size_t r = 0; r < rank_metric_.size(); ++r) {
      const auto m = rank_metric_[r];
      out[r] = sign_[m] * y[m];
    }
  }

  bool meets(std::span<const double> candidate, std::span<const double> threshold) const {
    check(candidate.size(), threshold.size());
    for (std::size_t i = 0; i < sign_.size(); ++i)
      if (!(sign_[i] * candidate[i] >= sign_[i] * threshold[i])) return false;
    return true;
  }

  bool lex_better(std::span<const double> a, std::span<const double> b) const {
    check(a.size(), b.size());
    for (auto m : rank_metric_) {
      const double sa = sign_[m] * a[m];
      const double sb = sign_[m] * b[m];
      if (sa > sb) return true;
      if (sa < sb) return false;
    }
    return false;
  }

  bool dominates(std::span<const double> a, std::span<const double> b) const {
    return meets(a, b) && !std::equal(a.begin(), a.end(), b.begin(), b.end());
  }

 private:
  void check(std::size_t a, std::size_t b) const {
    if (a != sign_.size() || b != sign_.size())
      throw contract_violation("metric vector dimension mismatch: expected " +
                               std::to_string(sign_.size()) + ", got " + std::to_string(a) +
                               " and " + std::to_string(b));
  }

  std::vector<double> sign_;
  std::vector<std::size_t> rank_metric_;
};

/// True iff lambda_i * y_prime_i >= lambda_i * y_i for all i.
inline bool meets_threshold(const MetricVector& y_prime, const MetricVector& y,
                            std::span<const MetricSpec> metrics) {
  return MetricOrder(metrics).meets(y_prime.view(), y.view());
}

inline bool lex_better(const MetricVector& a, const MetricVector& b,
                       std::span<const MetricSpec> metrics) {
  return MetricOrder(metrics).lex_better(a.view(), b.view());
}

/// Weak dominance with at least one strict improvement.
inline bool dominates(const MetricVector& a, const MetricVector& b,
                      std::span<const MetricSpec> metrics) {
  return MetricOrder(metrics).dominates(a.view(), b.view());
}

}  // namespace cktdesign
