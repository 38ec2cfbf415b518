#pragma once

// Evaluation protocol: relative-error and threshold-violation metrics, success
// curves over margins, k-fold and disjoint-subset splits, clustering
// statistics, and the metric-ordering comparison.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "filter.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "simulator.hpp"

namespace cktdesign {

// ---------------------------------------------------------------------------
// Error metrics
// ---------------------------------------------------------------------------

/// delta_i = |y_i - yhat_i| / y_i.
inline std::vector<double> exact_error(const MetricVector& y_target, const MetricVector& y_hat) {
  if (y_target.size() != y_hat.size()) throw contract_violation("exact_error: dimension mismatch");
  std::vector<double> d(y_target.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (y_target[i] == 0.0) throw contract_violation("exact_error: zero target component");
    d[i] = std::abs(y_target[i] - y_hat[i]) / y_target[i];
  }
  return d;
}

/// delta_i = max(lambda_i (y_i - yhat_i), 0) / y_i.
inline std::vector<double> threshold_violation(const MetricVector& y_threshold,
                                               const MetricVector& y_hat,
                                               std::span<const MetricSpec> metrics) {
  if (y_threshold.size() != y_hat.size() || y_threshold.size() != metrics.size())
    throw contract_violation("threshold_violation: dimension mismatch");
  std::vector<double> d(y_threshold.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (y_threshold[i] == 0.0) throw contract_violation("threshold_violation: zero threshold component");
    const double lambda = static_cast<double>(metrics[i].direction);
    d[i] = std::max(lambda * (y_threshold[i] - y_hat[i]), 0.0) / y_threshold[i];
  }
  return d;
}

inline double max_delta(std::span<const double> delta) {
  double worst = 0.0;
  for (double v : delta) worst = std::max(worst, std::isnan(v) ? std::numeric_limits<double>::infinity() : v);
  return worst;
}

/// Fraction of points whose worst per-metric delta is within the margin.
inline double success_rate(std::span<const std::vector<double>> deltas, double margin) {
  if (deltas.empty()) throw contract_violation("success_rate of an empty point set");
  if (!(margin >= 0.0)) throw contract_violation("margin must be >= 0");
  std::size_t ok = 0;
  for (const auto& d : deltas) ok += max_delta(d) <= margin;
  return static_cast<double>(ok) / static_cast<double>(deltas.size());
}

struct MeanSem {
  double mean = 0.0;
  double sem = 0.0;
};

/// Mean and standard error (sample stdev / sqrt(count)).
inline MeanSem mean_sem(std::span<const double> v) {
  if (v.empty()) throw contract_violation("mean of an empty sample");
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {mean, sd / std::sqrt(static_cast<double>(v.size()))};
}

// ---------------------------------------------------------------------------
// Protocol and report
// ---------------------------------------------------------------------------

enum class EvalMode { exact, threshold };

inline std::string_view to_string(EvalMode m) { return m == EvalMode::exact ? "exact" : "threshold"; }

inline EvalMode eval_mode_from_string(std::string_view s) {
  if (s == "exact") return EvalMode::exact;
  if (s == "threshold") return EvalMode::threshold;
  throw contract_violation("unknown evaluation mode '" + std::string(s) + "'");
}

inline std::vector<double> default_margins() {
  std::vector<double> m;
  for (int i = 0; i <= 20; ++i) m.push_back(i * 0.005);
  return m;
}

struct EvalProtocol {
  EvalMode mode = EvalMode::threshold;
  int folds = 10;
  std::optional<double> fraction;  // training fraction; unset means k-fold
  std::vector<double> margins = default_margins();
  int repetitions = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (!fraction && folds < 2) throw contract_violation("folds must be >= 2");
    if (fraction) {
      static constexpr double allowed[] = {0.05, 0.10, 0.20, 0.50, 0.90};
      if (std::none_of(std::begin(allowed), std::end(allowed),
                       [&](double a) { return std::abs(a - *fraction) < 1e-12; }))
        throw contract_violation("training fraction must be one of 0.05, 0.1, 0.2, 0.5, 0.9");
    }
    if (margins.empty()) throw contract_violation("at least one margin is required");
    for (double m : margins)
      if (!(m >= 0.0 && m <= 1.0)) throw contract_violation("margins must lie in [0, 1]");
    if (repetitions < 1) throw contract_violation("repetitions must be >= 1");
  }
};

inline nlohmann::ordered_json protocol_to_json(const EvalProtocol& p) {
  nlohmann::ordered_json j;
  j["mode"] = std::string(to_string(p.mode));
  j["folds"] = p.folds;
  if (p.fraction) j["fraction"] = *p.fraction;
  j["repetitions"] = p.repetitions;
  j["seed"] = p.seed;
  return j;
}

inline EvalProtocol protocol_from_json(const nlohmann::ordered_json& j, std::vector<double> margins) {
  EvalProtocol p;
  p.mode = eval_mode_from_string(j.at("mode").get<std::string>());
  p.folds = j.at("folds").get<int>();
  if (j.contains("fraction")) p.fraction = j.at("fraction").get<double>();
  p.repetitions = j.at("repetitions").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.margins = std::move(margins);
  return p;
}

struct RunResult {
  int run = 0;
  int split = 0;  // fold or subset index
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::vector<double> success;             // per margin
  std::vector<double> per_metric_error;    // mean delta over simulated points
  std::vector<std::int64_t> failed_points;  // source indices whose prediction failed to simulate
  friend bool operator==(const RunResult&, const RunResult&) = default;
};

struct EvalReport {
  std::string circuit;
  std::string method;
  std::string model;
  EvalProtocol protocol;
  std::vector<double> success_mean;
  std::vector<double> success_sem;
  std::vector<std::string> metric_names;
  std::vector<double> per_metric_error;
  std::vector<RunResult> runs;
  std::string command;
  nlohmann::ordered_json notes = nlohmann::ordered_json::object();

  /// Mean success at a margin present in the protocol.
  double success_at(double margin) const {
    for (std::size_t i = 0; i < protocol.margins.size(); ++i)
      if (std::abs(protocol.margins[i] - margin) < 1e-12) return success_mean[i];
    throw contract_violation("margin " + std::to_string(margin) + " not in report");
  }
  double sem_at(double margin) const {
    for (std::size_t i = 0; i < protocol.margins.size(); ++i)
      if (std::abs(protocol.margins[i] - margin) < 1e-12) return success_sem[i];
    throw contract_violation("margin " + std::to_string(margin) + " not in report");
  }
};

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["circuit"] = r.circuit;
  j["method"] = r.method;
  j["model"] = r.model;
  j["protocol"] = protocol_to_json(r.protocol);
  j["margins"] = r.protocol.margins;
  j["success_mean"] = r.success_mean;
  j["success_sem"] = r.success_sem;
  j["per_metric_error"] = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < r.metric_names.size(); ++i)
    j["per_metric_error"][r.metric_names[i]] = r.per_metric_error[i];
  j["runs"] = nlohmann::ordered_json::array();
  for (const auto& run : r.runs)
    j["runs"].push_back({{"run", run.run},
                         {"split", run.split},
                         {"train_size", run.train_size},
                         {"test_size", run.test_size},
                         {"success", run.success},
                         {"per_metric_error", run.per_metric_error},
                         {"failed_points", run.failed_points}});
  j["notes"] = r.notes;
  j["command"] = r.command;
  return j;
}

inline EvalReport report_from_json(const nlohmann::ordered_json& j) {
  EvalReport r;
  try {
    r.circuit = j.at("circuit").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.protocol = protocol_from_json(j.at("protocol"), j.at("margins").get<std::vector<double>>());
    r.success_mean = j.at("success_mean").get<std::vector<double>>();
    r.success_sem = j.at("success_sem").get<std::vector<double>>();
    for (const auto& [name, value] : j.at("per_metric_error").items()) {
      r.metric_names.push_back(name);
      r.per_metric_error.push_back(value.get<double>());
    }
    for (const auto& run : j.at("runs")) {
      RunResult rr;
      rr.run = run.at("run").get<int>();
      rr.split = run.at("split").get<int>();
      rr.train_size = run.at("train_size").get<std::size_t>();
      rr.test_size = run.at("test_size").get<std::size_t>();
      rr.success = run.at("success").get<std::vector<double>>();
      rr.per_metric_error = run.at("per_metric_error").get<std::vector<double>>();
      rr.failed_points = run.at("failed_points").get<std::vector<std::int64_t>>();
      r.runs.push_back(std::move(rr));
    }
    r.notes = j.value("notes", nlohmann::ordered_json::object());
    r.command = j.value("command", std::string{});
  } catch (const nlohmann::ordered_json::exception& e) {
    throw contract_violation(std::string("malformed evaluation report: ") + e.what());
  }
  return r;
}

/// margin,success_mean,success_sem rows for plotting.
inline std::string report_curve_csv(const EvalReport& r) {
  std::string out = "margin,success_mean,success_sem\n";
  for (std::size_t i = 0; i < r.protocol.margins.size(); ++i)
    out += format_real(r.protocol.margins[i]) + "," + format_real(r.success_mean[i]) + "," +
           format_real(r.success_sem[i]) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

/// Shuffle 0..n-1 and cut it into `parts` disjoint groups whose sizes differ
/// by at most one. Each group is returned in ascending order.
inline std::vector<std::vector<std::size_t>> make_folds(std::size_t n, int parts, std::uint64_t seed) {
  if (parts < 2) throw contract_violation("need at least two folds");
  if (n < static_cast<std::size_t>(parts))
    throw contract_violation("cannot split " + std::to_string(n) + " points into " +
                             std::to_string(parts) + " folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(order));
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(parts));
  const auto p = static_cast<std::size_t>(parts);
  for (std::size_t f = 0; f < p; ++f) {
    const auto lo = f * n / p;
    const auto hi = (f + 1) * n / p;
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(lo),
                    order.begin() + static_cast<std::ptrdiff_t>(hi));
    std::sort(folds[f].begin(), folds[f].end());
  }
  return folds;
}

struct Split {
  int index = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

namespace detail {

inline std::vector<std::size_t> complement(std::size_t n, std::span<const std::size_t> part) {
  std::vector<bool> in(n, false);
  for (auto i : part) in[i] = true;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (!in[i]) out.push_back(i);
  return out;
}

/// Number of disjoint training subsets realizing a training fraction.
inline int subsets_for_fraction(double fraction) { return static_cast<int>(std::lround(1.0 / fraction)); }

}  // namespace detail

/// Split used by repetition `run`. Runs cycle through the folds (or subset
/// rotations) of one shuffle, and draw a fresh shuffle every full cycle.
inline Split split_for_run(std::size_t n, const EvalProtocol& p, int run) {
  const bool kfold = !p.fraction || std::abs(*p.fraction - 0.9) < 1e-12;
  const int parts = kfold ? p.folds : detail::subsets_for_fraction(*p.fraction);
  const auto cycle = static_cast<std::uint64_t>(run / parts);
  const auto folds = make_folds(n, parts, derive_seed(p.seed, {0x5011, cycle}));
  Split s;
  s.index = run % parts;
  const auto& part = folds[static_cast<std::size_t>(s.index)];
  if (part.size() < 2 && !kfold) throw contract_violation("training subset smaller than 2 points");
  if (kfold) {
    s.test = part;
    s.train = detail::complement(n, part);
  } else {
    s.train = part;
    s.test = detail::complement(n, part);
  }
  if (s.train.size() < 2) throw contract_violation("training subset smaller than 2 points");
  return s;
}

// ---------------------------------------------------------------------------
// Evaluation runs
// ---------------------------------------------------------------------------

struct EvalSetup {
  Provenance method = Provenance::DstarEps;
  TrainConfig train;
  PerturbationConfig perturbation;  // epsilon and m; seeds are derived per run
  EvalProtocol protocol;
  unsigned threads = 1;
};

/// Threshold (or exact) queries for a set of D0 points.
inline std::vector<MetricVector> make_queries(const Dataset& d0, std::span<const std::size_t> points,
                                              const CircuitTopology& t, EvalMode mode, double epsilon,
                                              std::uint64_t seed) {
  std::vector<MetricVector> q;
  q.reserve(points.size());
  for (auto i : points) {
    const auto& p = d0.points[i];
    if (mode == EvalMode::exact) {
      q.push_back(p.y);
    } else {
      const auto u = perturbation_draw(seed, point_key(p, i), 0, t.k());
      q.push_back(perturb_query(p.y, t.metrics, epsilon, u));
    }
  }
  return q;
}

struct QueryOutcome {
  std::vector<double> delta;  // +inf everywhere when simulation failed
  std::optional<MetricVector> achieved;
};

inline QueryOutcome score_query(const ModelArtifact& model, const CircuitTopology& t, const MetricVector& q,
                                EvalMode mode, std::int64_t point_index = -1) {
  const auto x = predict(model, q);
  QueryOutcome out;
  try {
    out.achieved = simulate(t, x, {.clamp = true, .point_index = point_index});
  } catch (const simulation_failed&) {
    out.delta.assign(t.k(), std::numeric_limits<double>::infinity());
    return out;
  }
  out.delta = mode == EvalMode::exact ? exact_error(q, *out.achieved)
                                      : threshold_violation(q, *out.achieved, t.metrics);
  return out;
}

/// One repetition: split, filter the training portion, train, query the test
/// portion, re-simulate, score.
inline RunResult evaluate_run(const Dataset& d0, const CircuitTopology& t, const EvalSetup& s, int run) {
  const auto split = split_for_run(d0.size(), s.protocol, run);
  const auto r = static_cast<std::uint64_t>(run);
  const Dataset train_d0 = d0.subset(split.train);

  PerturbationConfig pc = s.perturbation;
  pc.seed = derive_seed(s.protocol.seed, {0xF117, r});
  const Dataset training = build_dataset(s.method, train_d0, t, pc, 1);

  TrainConfig tc = s.train;
  tc.seed = derive_seed(s.protocol.seed, {0x7A1, r});
  const auto model = train(training, t, tc);

  const auto queries = make_queries(d0, split.test, t, s.protocol.mode, s.perturbation.epsilon,
                                    derive_seed(s.protocol.seed, {0x0E7, r}));
  std::vector<std::vector<double>> deltas;
  deltas.reserve(queries.size());
  RunResult out;
  out.run = run;
  out.split = split.index;
  out.train_size = split.train.size();
  out.test_size = split.test.size();
  out.per_metric_error.assign(t.k(), 0.0);
  std::size_t simulated = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& source = d0.points[split.test[i]];
    auto o = score_query(model, t, queries[i], s.protocol.mode, source.source_index);
    if (!o.achieved) {
      out.failed_points.push_back(source.source_index);
    } else {
      ++simulated;
      for (std::size_t m = 0; m < t.k(); ++m) out.per_metric_error[m] += o.delta[m];
    }
    deltas.push_back(std::move(o.delta));
  }
  if (simulated > 0)
    for (auto& e : out.per_metric_error) e /= static_cast<double>(simulated);
  for (double margin : s.protocol.margins) out.success.push_back(success_rate(deltas, margin));
  return out;
}

inline EvalReport aggregate_runs(const CircuitTopology& t, const EvalSetup& s, std::vector<RunResult> runs) {
  EvalReport rep;
  rep.circuit = t.id;
  rep.method = std::string(to_string(s.method));
  rep.model = std::string(to_string(s.train.kind));
  rep.protocol = s.protocol;
  for (const auto& m : t.metrics) rep.metric_names.push_back(m.name);
  for (std::size_t i = 0; i < s.protocol.margins.size(); ++i) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.success[i]);
    const auto ms = mean_sem(v);
    rep.success_mean.push_back(ms.mean);
    rep.success_sem.push_back(ms.sem);
  }
  rep.per_metric_error.assign(t.k(), 0.0);
  for (std::size_t m = 0; m < t.k(); ++m) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.per_metric_error[m]);
    rep.per_metric_error[m] = mean_sem(v).mean;
  }
  rep.runs = std::move(runs);
  rep.notes["repetitions"] =
      "each repetition is one train/test run; runs cycle through the folds of one shuffle and "
      "reshuffle every full cycle; training perturbations and test queries are redrawn per run";
  rep.notes["feasibility"] = "feasible sets are computed against the training portion of D0 only";
  rep.notes["epsilon"] = s.perturbation.epsilon;
  if (is_multi_sample(s.method)) rep.notes["m"] = s.perturbation.replicates;
  return rep;
}

/// k-fold cross-validation (or fraction mode when protocol.fraction is set).
inline EvalReport kfold_eval(const Dataset& d0, const CircuitTopology& t, const EvalSetup& s) {
  s.protocol.validate();
  s.perturbation.validate();
  if (d0.empty()) throw contract_violation("D0 is empty");
  if (!s.protocol.fraction && d0.size() < static_cast<std::size_t>(s.protocol.folds))
    throw contract_violation("D0 has fewer points than folds");
  std::vector<RunResult> runs(static_cast<std::size_t>(s.protocol.repetitions));
  parallel_for(runs.size(), s.threads,
               [&](std::size_t r) { runs[r] = evaluate_run(d0, t, s, static_cast<int>(r)); });
  return aggregate_runs(t, s, std::move(runs));
}

/// Success curves per training fraction. Fractions below 0.9 train on one of
/// 1/fraction disjoint subsets and test on the rest; 0.9 is 10-fold CV. With
/// `repetitions` unset each fraction runs exactly one full rotation.
inline std::vector<EvalReport> datasize_sweep(const Dataset& d0, const CircuitTopology& t, EvalSetup s,
                                              std::span<const double> fractions,
                                              std::optional<int> repetitions = std::nullopt) {
  if (fractions.empty()) throw contract_violation("no training fractions given");
  std::vector<EvalReport> out;
  for (double f : fractions) {
    EvalSetup fs = s;
    fs.protocol.fraction = f;
    fs.protocol.validate();
    const bool kfold = std::abs(f - 0.9) < 1e-12;
    if (kfold) fs.protocol.folds = 10;
    const int parts = kfold ? 10 : detail::subsets_for_fraction(f);
    if (d0.size() / static_cast<std::size_t>(parts) < 2)
      throw contract_violation("subset smaller than 2 points for fraction " + format_real(f));
    fs.protocol.repetitions = repetitions.value_or(parts);
    out.push_back(kfold_eval(d0, t, fs));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

struct ClusteringStats {
  std::size_t distinct = 0;
  double entropy_bits = 0.0;
  double perplexity = 1.0;
};

/// Distinct target parameter vectors and the perplexity 2^H of their
/// empirical distribution.
inline ClusteringStats clustering_stats(const Dataset& d) {
  if (d.empty()) throw contract_violation("clustering_stats of an empty dataset");
  std::map<std::vector<double>, std::size_t> counts;
  for (const auto& p : d.points) ++counts[p.x.values];
  const auto n = static_cast<double>(d.size());
  double h = 0.0;
  for (const auto& [x, c] : counts) {
    const double pr = static_cast<double>(c) / n;
    h -= pr * std::log2(pr);
  }
  return {counts.size(), h, std::exp2(h)};
}

// ---------------------------------------------------------------------------
// Metric-ordering study
// ---------------------------------------------------------------------------

struct OrderingResult {
  std::vector<std::string> order;
  std::vector<double> mean_achieved;  // per metric, topology metric order
  std::vector<double> success;        // per protocol margin
  ClusteringStats clustering;
};

struct OrderingComparison {
  std::size_t a = 0, b = 0;     // indices into results
  std::string metric;           // rank-1 metric of order a
  bool prioritized_weakly_better = false;
};

struct OrderingReport {
  std::string circuit;
  std::vector<OrderingResult> results;
  std::vector<OrderingComparison> comparisons;
  std::size_t queries = 0;
  std::string command;
};

/// Build the lex-filtered perturbed dataset under each priority order, train
/// identically seeded models, and compare them on one shared held-out query
/// set (a 9:1 split of D0).
inline OrderingReport ordering_study(const Dataset& d0, const CircuitTopology& t,
                                     std::span<const std::vector<std::string>> orders, const EvalSetup& s) {
  if (orders.size() < 2) throw contract_violation("the ordering study needs at least two orders");
  std::vector<CircuitTopology> variants;
  for (const auto& o : orders) variants.push_back(t.with_priority(o));
  s.protocol.validate();

  EvalProtocol split_protocol = s.protocol;
  split_protocol.fraction.reset();
  split_protocol.folds = 10;
  const auto split = split_for_run(d0.size(), split_protocol, 0);
  const Dataset train_d0 = d0.subset(split.train);
  PerturbationConfig pc = s.perturbation;
  pc.seed = derive_seed(s.protocol.seed, {0xF117, 0});
  TrainConfig tc = s.train;
  tc.seed = derive_seed(s.protocol.seed, {0x7A1, 0});
  const auto queries = make_queries(d0, split.test, t, EvalMode::threshold, s.perturbation.epsilon,
                                    derive_seed(s.protocol.seed, {0x0E7, 0}));

  OrderingReport rep;
  rep.circuit = t.id;
  rep.queries = queries.size();
  rep.results.resize(variants.size());
  parallel_for(variants.size(), s.threads, [&](std::size_t v) {
    const auto& tv = variants[v];
    const auto training = build_dstar_eps(train_d0, tv, pc, 1);
    const auto model = train(training, tv, tc);
    OrderingResult r;
    r.order = tv.priority_order();
    r.clustering = clustering_stats(training);
    r.mean_achieved.assign(t.k(), 0.0);
    std::vector<std::vector<double>> deltas;
    std::size_t simulated = 0;
    for (const auto& q : queries) {
      auto o = score_query(model, tv, q, EvalMode::threshold);
      if (o.achieved) {
        ++simulated;
        for (std::size_t m = 0; m < t.k(); ++m) r.mean_achieved[m] += (*o.achieved)[m];
      }
      deltas.push_back(std::move(o.delta));
    }
    for (auto& v2 : r.mean_achieved) v2 /= static_cast<double>(std::max<std::size_t>(simulated, 1));
    for (double margin : s.protocol.margins) r.success.push_back(success_rate(deltas, margin));
    rep.results[v] = std::move(r);
  });

  for (std::size_t a = 0; a < rep.results.size(); ++a)
    for (std::size_t b = 0; b < rep.results.size(); ++b) {
      if (a == b) continue;
      const auto& top = rep.results[a].order.front();
      if (rep.results[b].order.front() == top) continue;
      const auto m = *t.metric_index(top);
      const double lambda = static_cast<double>(t.metrics[m].direction);
      rep.comparisons.push_back(
          {a, b, top, lambda * rep.results[a].mean_achieved[m] >= lambda * rep.results[b].mean_achieved[m]});
    }
  return rep;
}

inline nlohmann::ordered_json ordering_to_json(const OrderingReport& r, const CircuitTopology& t,
                                               std::span<const double> margins) {
  nlohmann::ordered_json j;
  j["circuit"] = r.circuit;
  j["queries"] = r.queries;
  j["margins"] = std::vector<double>(margins.begin(), margins.end());
  j["orders"] = nlohmann::ordered_json::array();
  for (const auto& res : r.results) {
    nlohmann::ordered_json o;
    o["order"] = res.order;
    o["mean_achieved"] = nlohmann::ordered_json::object();
    for (std::size_t m = 0; m < t.k(); ++m) o["mean_achieved"][t.metrics[m].name] = res.mean_achieved[m];
    o["success"] = res.success;
    o["distinct_targets"] = res.clustering.distinct;
    o["perplexity"] = res.clustering.perplexity;
    j["orders"].push_back(std::move(o));
  }
  j["comparisons"] = nlohmann::ordered_json::array();
  for (const auto& c : r.comparisons)
    j["comparisons"].push_back({{"order", c.a},
                                {"versus", c.b},
                                {"metric", c.metric},
                                {"prioritized_weakly_better", c.prioritized_weakly_better}});
  j["command"] = r.command;
  return j;
}

}  // namespace cktdesign
