#pragma once

// Design service: trained agents plus the simulator behind JSON handlers.
// Handlers are plain functions of (loaded artifacts, request) so they can be
// exercised without a socket; http.hpp binds them to routes.

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "eval.hpp"
#include "filter.hpp"
#include "model.hpp"
#include "simulator.hpp"
#include "topology.hpp"

namespace cktdesign {

struct ServiceResponse {
  int status = 200;
  nlohmann::ordered_json body;
};

inline ServiceResponse error_response(int status, const std::string& message,
                                      const std::optional<std::string>& field = std::nullopt) {
  nlohmann::ordered_json body{{"error", message}};
  if (field) body["field"] = *field;
  return {status, std::move(body)};
}

class DesignService {
 public:
  static constexpr double kDefaultMargin = 0.05;
  static constexpr std::size_t kFrontierLimit = 500;

  /// Load every `*.bin` artifact in `model_dir` and every topology config in
  /// `config_dir`. A missing model directory yields a service with no agents.
  DesignService(const std::filesystem::path& model_dir, const std::filesystem::path& config_dir) {
    for (const auto& id : list_topologies(config_dir))
      circuits_.emplace(id, std::make_unique<Circuit>(find_topology(id, config_dir)));
    if (!std::filesystem::is_directory(model_dir)) return;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(model_dir))
      if (e.path().extension() == ".bin") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) add_model(load_model(f));
  }

  DesignService(std::vector<CircuitTopology> topologies, std::vector<ModelArtifact> models) {
    for (auto& t : topologies) {
      auto id = t.id;
      circuits_.emplace(id, std::make_unique<Circuit>(std::move(t)));
    }
    for (auto& m : models) add_model(std::move(m));
  }

  /// GET /api/circuits
  ServiceResponse circuits() const {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& [id, c] : circuits_) {
      if (!c->model) continue;
      const auto& t = c->topology;
      nlohmann::ordered_json j;
      j["id"] = id;
      j["model"] = std::string(to_string(c->model->kind));
      j["parameters"] = nlohmann::ordered_json::array();
      for (const auto& p : t.parameters)
        j["parameters"].push_back(
            {{"name", p.name}, {"unit", p.unit}, {"start", p.start}, {"step", p.step}, {"end", p.end}});
      const auto& range = metric_ranges(*c);
      j["metrics"] = nlohmann::ordered_json::array();
      for (std::size_t i = 0; i < t.k(); ++i) {
        const auto& m = t.metrics[i];
        j["metrics"].push_back({{"name", m.name},
                                {"unit", m.unit},
                                {"direction", m.direction},
                                {"priority", m.priority},
                                {"observed_min", range.min[i]},
                                {"observed_max", range.max[i]}});
      }
      out.push_back(std::move(j));
    }
    return {200, std::move(out)};
  }

  /// POST /api/design
  ServiceResponse design(const std::string& body) const {
    nlohmann::ordered_json req;
    if (auto err = parse_body(body, req)) return *err;
    const Circuit* c = nullptr;
    if (auto err = lookup_circuit(req, c, 400)) return *err;
    if (!c->model) return error_response(400, "no trained model loaded for circuit '" + c->topology.id + "'", "circuit_id");
    const auto& t = c->topology;

    if (!req.contains("thresholds") || !req["thresholds"].is_object())
      return error_response(400, "thresholds must be an object of metric name to value", "thresholds");
    const auto& th = req["thresholds"];
    for (const auto& [name, value] : th.items())
      if (!t.metric_index(name))
        return error_response(400, "unknown metric '" + name + "'", "thresholds." + name);
    std::vector<double> y(t.k());
    for (std::size_t i = 0; i < t.k(); ++i) {
      const auto& name = t.metrics[i].name;
      if (!th.contains(name)) return error_response(400, "missing threshold for '" + name + "'", "thresholds." + name);
      if (!th[name].is_number()) return error_response(400, "threshold must be a number", "thresholds." + name);
      y[i] = th[name].get<double>();
      if (!(y[i] > 0.0) || !std::isfinite(y[i]))
        return error_response(400, "threshold must be a positive finite number", "thresholds." + name);
    }
    double margin = kDefaultMargin;
    if (req.contains("margin")) {
      if (!req["margin"].is_number() || !(req["margin"].get<double>() >= 0.0))
        return error_response(400, "margin must be a non-negative number", "margin");
      margin = req["margin"].get<double>();
    }

    const MetricVector query(y);
    const auto x = predict(*c->model, query);
    MetricVector achieved;
    try {
      achieved = simulate(t, x, {.clamp = true});
    } catch (const simulation_failed& e) {
      return error_response(500, std::string("simulation failed: ") + e.what());
    }
    const auto delta = threshold_violation(query, achieved, t.metrics);
    const auto& range = metric_ranges(*c);
    bool ood = false;
    for (std::size_t i = 0; i < t.k(); ++i) ood = ood || y[i] < range.min[i] || y[i] > range.max[i];

    nlohmann::ordered_json out;
    out["circuit_id"] = t.id;
    out["parameters"] = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < t.n(); ++i) out["parameters"][t.parameters[i].name] = x[i];
    out["simulated_metrics"] = nlohmann::ordered_json::object();
    out["violations"] = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < t.k(); ++i) {
      out["simulated_metrics"][t.metrics[i].name] = achieved[i];
      out["violations"][t.metrics[i].name] = delta[i];
    }
    out["success"] = max_delta(delta) <= margin;
    out["margin_used"] = margin;
    out["out_of_distribution"] = ood;
    if (ood) {
      out["warning"] = "thresholds lie outside the metric ranges observed in the simulated grid";
      return {422, std::move(out)};
    }
    return {200, std::move(out)};
  }

  /// POST /api/simulate
  ServiceResponse simulate_request(const std::string& body) const {
    nlohmann::ordered_json req;
    if (auto err = parse_body(body, req)) return *err;
    const Circuit* c = nullptr;
    if (auto err = lookup_circuit(req, c, 404)) return *err;
    const auto& t = c->topology;
    if (!req.contains("parameters") || !req["parameters"].is_object())
      return error_response(400, "parameters must be an object of parameter name to value", "parameters");
    const auto& ps = req["parameters"];
    for (const auto& [name, value] : ps.items())
      if (!t.parameter_index(name))
        return error_response(400, "unknown parameter '" + name + "'", "parameters." + name);
    std::vector<double> x(t.n());
    for (std::size_t i = 0; i < t.n(); ++i) {
      const auto& spec = t.parameters[i];
      if (!ps.contains(spec.name))
        return error_response(400, "missing parameter '" + spec.name + "'", "parameters." + spec.name);
      if (!ps[spec.name].is_number())
        return error_response(400, "parameter must be a number", "parameters." + spec.name);
      x[i] = ps[spec.name].get<double>();
      if (!spec.contains(x[i]))
        return error_response(400, "parameter outside [" + format_real(spec.start) + ", " + format_real(spec.end) + "]",
                              "parameters." + spec.name);
    }
    MetricVector y;
    try {
      y = simulate(t, ParameterVector(x));
    } catch (const simulation_failed& e) {
      return error_response(500, std::string("simulation failed: ") + e.what());
    }
    nlohmann::ordered_json out;
    out["circuit_id"] = t.id;
    out["metrics"] = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < t.k(); ++i) out["metrics"][t.metrics[i].name] = y[i];
    return {200, std::move(out)};
  }

  /// GET /api/frontier/{id}: distinct lex-filtered targets of D0, which are
  /// mutually non-dominated, downsampled evenly along the priority order.
  ServiceResponse frontier(const std::string& id) const {
    auto it = circuits_.find(id);
    if (it == circuits_.end()) return error_response(404, "unknown circuit '" + id + "'", "circuit_id");
    const auto& c = *it->second;
    const auto& pts = frontier_points(c);
    nlohmann::ordered_json out;
    out["circuit_id"] = id;
    out["metrics"] = nlohmann::ordered_json::array();
    for (const auto& m : c.topology.metrics) out["metrics"].push_back(m.name);
    out["total"] = pts.size();
    out["points"] = nlohmann::ordered_json::array();
    std::vector<std::size_t> pick;
    if (pts.size() <= kFrontierLimit) {
      for (std::size_t i = 0; i < pts.size(); ++i) pick.push_back(i);
    } else {
      for (std::size_t s = 0; s < kFrontierLimit; ++s) pick.push_back(s * (pts.size() - 1) / (kFrontierLimit - 1));
    }
    for (auto i : pick) out["points"].push_back(pts[i].values);
    return {200, std::move(out)};
  }

  bool has_model(const std::string& id) const {
    auto it = circuits_.find(id);
    return it != circuits_.end() && it->second->model.has_value();
  }

 private:
  struct Circuit {
    explicit Circuit(CircuitTopology t) : topology(std::move(t)) {}
    CircuitTopology topology;
    std::optional<ModelArtifact> model;
    mutable std::once_flag d0_once;
    mutable std::optional<Dataset> d0;
    mutable std::once_flag frontier_once;
    mutable std::vector<MetricVector> frontier;
    mutable std::once_flag range_once;
    mutable NormalizationStats range;
  };

  void add_model(ModelArtifact m) {
    auto it = circuits_.find(m.topology_id);
    if (it == circuits_.end())
      throw config_error("model for unknown circuit '" + m.topology_id + "'");
    if (m.k() != it->second->topology.k() || m.n() != it->second->topology.n())
      throw config_error("model for '" + m.topology_id + "' does not match the topology dimensions");
    it->second->model = std::move(m);
  }

  static const Dataset& d0_of(const Circuit& c) {
    std::call_once(c.d0_once, [&] { c.d0 = simulate_grid(c.topology, 1); });
    return *c.d0;
  }

  static const NormalizationStats& metric_ranges(const Circuit& c) {
    std::call_once(c.range_once, [&] {
      if (c.topology.backend.kind == BackendSpec::Kind::spice && c.model)
        c.range = c.model->metric_stats;
      else
        c.range = fit_normalizer(d0_of(c), Side::metrics);
    });
    return c.range;
  }

  static const std::vector<MetricVector>& frontier_points(const Circuit& c) {
    std::call_once(c.frontier_once, [&] {
      const auto& d0 = d0_of(c);
      const auto filtered = build_dstar0(d0, c.topology, 1);
      std::vector<std::int64_t> targets;
      for (const auto& p : filtered.points) targets.push_back(p.source_index);
      std::sort(targets.begin(), targets.end());
      targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
      std::map<std::int64_t, std::size_t> pos;
      for (std::size_t i = 0; i < d0.size(); ++i) pos[d0.points[i].source_index] = i;
      std::vector<std::size_t> idx;
      for (auto s : targets) idx.push_back(pos.at(s));
      const FeasibilityIndex order(d0, c.topology.metrics);
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return order.ranks_before(a, b); });
      for (auto i : idx) c.frontier.push_back(d0.points[i].y);
    });
    return c.frontier;
  }

  static std::optional<ServiceResponse> parse_body(const std::string& body, nlohmann::ordered_json& out) {
    try {
      out = nlohmann::ordered_json::parse(body);
    } catch (const nlohmann::ordered_json::parse_error&) {
      return error_response(400, "request body is not valid JSON", "body");
    }
    if (!out.is_object()) return error_response(400, "request body must be a JSON object", "body");
    return std::nullopt;
  }

  std::optional<ServiceResponse> lookup_circuit(const nlohmann::ordered_json& req, const Circuit*& c,
                                                int unknown_status) const {
    if (!req.contains("circuit_id") || !req["circuit_id"].is_string())
      return error_response(400, "circuit_id must be a string", "circuit_id");
    const auto id = req["circuit_id"].get<std::string>();
    auto it = circuits_.find(id);
    if (it == circuits_.end()) return error_response(unknown_status, "unknown circuit '" + id + "'", "circuit_id");
    c = it->second.get();
    return std::nullopt;
  }

  std::map<std::string, std::unique_ptr<Circuit>> circuits_;
};

}  // namespace cktdesign
