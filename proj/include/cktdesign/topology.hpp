#pragma once

// Topology configuration files (JSON):
//
//   { "id": "cs",
//     "parameters": [{"name": "W", "unit": "um", "start": 2.8, "step": 0.2, "end": 6.6}, ...],
//     "metrics":    [{"name": "bandwidth", "unit": "Hz", "direction": 1, "priority": 1}, ...],
//     "backend":    {"kind": "surrogate", "model": "cs", "constants": {...}, "tradeoffs": {...}}
//                or {"kind": "spice", "netlist": "cs.cir", "executable": "ngspice",
//                    "analyses": [...], "measurements": {"meas_name": "metric_name"},
//                    "max_workers": 4} }
//
// Metric priority defaults to declaration order. Configs are discovered in
// $CIRCUITS_CONFIG_DIR, falling back to the directory compiled in as
// CKTDESIGN_CIRCUITS_DIR.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "surrogate.hpp"

#ifndef CKTDESIGN_CIRCUITS_DIR
#define CKTDESIGN_CIRCUITS_DIR "circuits"
#endif

namespace cktdesign {

using json = nlohmann::ordered_json;

namespace detail {

template <class T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw config_error(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw config_error(where + ": field '" + key + "' has the wrong type");
  }
}

inline int parse_direction(const json& j, const std::string& where) {
  if (j.is_number_integer()) return j.get<int>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "majorative" || s == "maximize" || s == "+1") return 1;
    if (s == "minorative" || s == "minimize" || s == "-1") return -1;
  }
  throw config_error(where + ": direction must be +1/-1 or majorative/minorative");
}

}  // namespace detail

inline CircuitTopology topology_from_json(const json& j,
                                          const std::filesystem::path& base_dir = {}) {
  CircuitTopology t;
  t.id = detail::required<std::string>(j, "id", "topology");
  const std::string where = "topology '" + t.id + "'";

  for (const auto& p : detail::required<json>(j, "parameters", where)) {
    ParameterSpec s;
    s.name = detail::required<std::string>(p, "name", where + " parameter");
    s.unit = p.value("unit", "");
    s.start = detail::required<double>(p, "start", where + " parameter " + s.name);
    s.step = detail::required<double>(p, "step", where + " parameter " + s.name);
    s.end = detail::required<double>(p, "end", where + " parameter " + s.name);
    t.parameters.push_back(std::move(s));
  }

  const auto& metrics = detail::required<json>(j, "metrics", where);
  int rank = 0;
  for (const auto& m : metrics) {
    MetricSpec s;
    s.name = detail::required<std::string>(m, "name", where + " metric");
    s.unit = m.value("unit", "");
    s.direction = detail::parse_direction(m.at("direction"), where + " metric " + s.name);
    s.priority = m.contains("priority") ? m.at("priority").get<int>() : ++rank;
    t.metrics.push_back(std::move(s));
  }

  const auto& b = detail::required<json>(j, "backend", where);
  const auto kind = detail::required<std::string>(b, "kind", where + " backend");
  if (kind == "surrogate") {
    t.backend.kind = BackendSpec::Kind::surrogate;
    t.backend.model = b.value("model", t.id);
    if (b.contains("constants"))
      for (const auto& [k, v] : b.at("constants").items())
        t.backend.constants.emplace_back(k, v.get<double>());
    if (b.contains("tradeoffs"))
      for (const auto& [k, v] : b.at("tradeoffs").items())
        t.backend.tradeoffs.emplace_back(k, v.get<std::vector<int>>());
  } else if (kind == "spice") {
    t.backend.kind = BackendSpec::Kind::spice;
    auto netlist = std::filesystem::path(detail::required<std::string>(b, "netlist", where));
    if (netlist.is_relative() && !base_dir.empty()) netlist = base_dir / netlist;
    t.backend.netlist_template = netlist.string();
    t.backend.executable = b.value("executable", "ngspice");
    t.backend.analyses = b.value("analyses", std::vector<std::string>{});
    const auto measurements = detail::required<json>(b, "measurements", where);
    for (const auto& [mname, metric] : measurements.items())
      t.backend.measurements.emplace_back(mname, metric.get<std::string>());
    t.backend.max_workers = b.value("max_workers", 4);
  } else {
    throw config_error(where + ": backend kind must be 'surrogate' or 'spice'");
  }

  t.validate();

  if (t.backend.kind == BackendSpec::Kind::surrogate) {
    const auto* entry = detail::find_surrogate(t.backend.model);
    if (!entry) throw config_error(where + ": unknown surrogate model '" + t.backend.model + "'");
    if (entry->n != t.n() || entry->k != t.k())
      throw config_error(where + ": surrogate '" + t.backend.model + "' produces " +
                         std::to_string(entry->k) + " metrics from " + std::to_string(entry->n) +
                         " parameters");
    for (const auto& [metric, signs] : t.backend.tradeoffs) {
      if (!t.metric_index(metric))
        throw config_error(where + ": tradeoff row for unknown metric '" + metric + "'");
      if (signs.size() != t.n())
        throw config_error(where + ": tradeoff row '" + metric + "' needs one sign per parameter");
    }
  } else {
    for (const auto& m : t.metrics) {
      bool produced = false;
      for (const auto& [meas, metric] : t.backend.measurements) produced |= metric == m.name;
      if (!produced)
        throw config_error(where + ": no measurement produces metric '" + m.name + "'");
    }
  }
  return t;
}

inline json topology_to_json(const CircuitTopology& t) {
  json j;
  j["id"] = t.id;
  j["parameters"] = json::array();
  for (const auto& p : t.parameters)
    j["parameters"].push_back(
        {{"name", p.name}, {"unit", p.unit}, {"start", p.start}, {"step", p.step}, {"end", p.end}});
  j["metrics"] = json::array();
  for (const auto& m : t.metrics)
    j["metrics"].push_back({{"name", m.name},
                            {"unit", m.unit},
                            {"direction", m.direction},
                            {"priority", m.priority}});
  return j;
}

inline CircuitTopology load_topology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open topology config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw config_error("malformed topology config " + path.string() + ": " + e.what());
  }
  return topology_from_json(j, path.parent_path());
}

inline std::filesystem::path circuits_config_dir() {
  if (const char* env = std::getenv("CIRCUITS_CONFIG_DIR"); env && *env) return env;
  return CKTDESIGN_CIRCUITS_DIR;
}

/// Load `<dir>/<id>.json` from the config directory.
inline CircuitTopology find_topology(const std::string& id,
                                     const std::filesystem::path& dir = circuits_config_dir()) {
  const auto path = dir / (id + ".json");
  if (!std::filesystem::exists(path))
    throw config_error("unknown circuit '" + id + "' (no " + path.string() + ")");
  auto t = load_topology(path);
  if (t.id != id) throw config_error("config " + path.string() + " declares id '" + t.id + "'");
  return t;
}

inline std::vector<std::string> list_topologies(
    const std::filesystem::path& dir = circuits_config_dir()) {
  std::vector<std::string> ids;
  if (!std::filesystem::is_directory(dir)) return ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".json") ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace cktdesign
