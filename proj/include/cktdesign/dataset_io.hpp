#pragma once

// Dataset files: a CSV with header `idx,param:<name>...,metric:<name>...`, one
// row per point, reals in shortest round-trip form; plus a JSON sidecar
// `<file>.meta.json` carrying provenance, (epsilon, m, seed), skipped grid
// indices, the filtering priority order, and the producing command line.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "spice.hpp"

namespace cktdesign {

class dataset_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void write_csv(std::ostream& out, const Dataset& d, const CircuitTopology& t) {
  out << "idx";
  for (const auto& p : t.parameters) out << ",param:" << p.name;
  for (const auto& m : t.metrics) out << ",metric:" << m.name;
  out << '\n';
  for (const auto& pt : d.points) {
    out << pt.source_index;
    for (double v : pt.x) out << ',' << format_real(v);
    for (double v : pt.y) out << ',' << format_real(v);
    out << '\n';
  }
}

inline std::string to_csv(const Dataset& d, const CircuitTopology& t) {
  std::ostringstream ss;
  write_csv(ss, d, t);
  return ss.str();
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace detail

/// Parse a dataset CSV against a topology. Columns are matched by name.
inline Dataset read_csv(std::istream& in, const CircuitTopology& t, const std::string& source = "csv") {
  std::string line;
  if (!std::getline(in, line)) throw dataset_error(source + ": empty file");
  std::vector<std::string> header;
  for (auto cell : detail::split_csv(line)) header.emplace_back(cell);
  if (header.empty() || header[0] != "idx")
    throw dataset_error(source + ": header must start with 'idx'");

  std::vector<int> param_col(t.n(), -1), metric_col(t.k(), -1);
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string_view h = header[c];
    if (h.starts_with("param:")) {
      auto idx = t.parameter_index(h.substr(6));
      if (!idx)
        throw dataset_error(source + ": column '" + std::string(h) +
                            "' is not a parameter of '" + t.id + "'");
      param_col[*idx] = static_cast<int>(c);
    } else if (h.starts_with("metric:")) {
      auto idx = t.metric_index(h.substr(7));
      if (!idx)
        throw dataset_error(source + ": column '" + std::string(h) + "' is not a metric of '" +
                            t.id + "'");
      metric_col[*idx] = static_cast<int>(c);
    } else {
      throw dataset_error(source + ": unexpected column '" + std::string(h) + "'");
    }
  }
  for (std::size_t i = 0; i < t.n(); ++i)
    if (param_col[i] < 0) throw dataset_error(source + ": missing column 'param:" + t.parameters[i].name + "'");
  for (std::size_t i = 0; i < t.k(); ++i)
    if (metric_col[i] < 0) throw dataset_error(source + ": missing column 'metric:" + t.metrics[i].name + "'");

  Dataset d;
  d.topology_id = t.id;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != header.size())
      throw dataset_error(source + ": line " + std::to_string(line_no) + " has " +
                          std::to_string(cells.size()) + " fields, expected " +
                          std::to_string(header.size()));
    auto real = [&](int col) {
      double v = 0.0;
      auto cell = cells[col];
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size())
        throw dataset_error(source + ": line " + std::to_string(line_no) + " field '" +
                            header[col] + "' is not a number");
      return v;
    };
    DesignPoint pt;
    std::int64_t idx = 0;
    auto [ptr, ec] = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), idx);
    if (ec != std::errc() || ptr != cells[0].data() + cells[0].size())
      throw dataset_error(source + ": line " + std::to_string(line_no) + " field 'idx' is not an integer");
    pt.source_index = idx;
    pt.x.values.resize(t.n());
    pt.y.values.resize(t.k());
    for (std::size_t i = 0; i < t.n(); ++i) pt.x[i] = real(param_col[i]);
    for (std::size_t i = 0; i < t.k(); ++i) {
      pt.y[i] = real(metric_col[i]);
      if (!(pt.y[i] > 0.0))
        throw dataset_error(source + ": line " + std::to_string(line_no) + " field 'metric:" +
                            t.metrics[i].name + "' must be positive");
    }
    d.points.push_back(std::move(pt));
  }
  return d;
}

inline nlohmann::ordered_json sidecar_json(const Dataset& d) {
  nlohmann::ordered_json j;
  j["topology_id"] = d.topology_id;
  j["provenance"] = std::string(to_string(d.provenance));
  j["size"] = d.size();
  if (d.meta.seed) j["seed"] = *d.meta.seed;
  if (d.meta.epsilon) j["epsilon"] = *d.meta.epsilon;
  if (d.meta.replicates) j["m"] = *d.meta.replicates;
  j["skipped"] = d.meta.skipped;
  if (!d.meta.metric_order.empty()) j["metric_order"] = d.meta.metric_order;
  j["command"] = d.meta.command;
  return j;
}

inline void apply_sidecar(const nlohmann::ordered_json& j, Dataset& d) {
  try {
    if (j.contains("topology_id")) d.topology_id = j.at("topology_id").get<std::string>();
    d.provenance = provenance_from_string(j.value("provenance", std::string("d0")));
    if (j.contains("seed")) d.meta.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("epsilon")) d.meta.epsilon = j.at("epsilon").get<double>();
    if (j.contains("m")) d.meta.replicates = j.at("m").get<int>();
    d.meta.skipped = j.value("skipped", std::vector<std::int64_t>{});
    d.meta.metric_order = j.value("metric_order", std::vector<std::string>{});
    d.meta.command = j.value("command", std::string{});
  } catch (const nlohmann::ordered_json::exception& e) {
    throw dataset_error(std::string("malformed dataset sidecar: ") + e.what());
  }
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  return csv.string() + ".meta.json";
}

inline void write_dataset(const std::filesystem::path& csv, const Dataset& d,
                          const CircuitTopology& t) {
  {
    std::ofstream out(csv, std::ios::binary);
    if (!out) throw dataset_error("cannot write " + csv.string());
    write_csv(out, d, t);
  }
  std::ofstream meta(sidecar_path(csv), std::ios::binary);
  if (!meta) throw dataset_error("cannot write " + sidecar_path(csv).string());
  meta << sidecar_json(d).dump(2) << '\n';
}

/// Topology id recorded in a dataset's sidecar, if any.
inline std::optional<std::string> sidecar_topology(const std::filesystem::path& csv) {
  std::ifstream in(sidecar_path(csv));
  if (!in) return std::nullopt;
  try {
    auto j = nlohmann::ordered_json::parse(in);
    if (j.contains("topology_id")) return j.at("topology_id").get<std::string>();
  } catch (const nlohmann::ordered_json::exception&) {
    throw dataset_error("malformed dataset sidecar " + sidecar_path(csv).string());
  }
  return std::nullopt;
}

inline Dataset read_dataset(const std::filesystem::path& csv, const CircuitTopology& t) {
  std::ifstream in(csv, std::ios::binary);
  if (!in) throw dataset_error("cannot open " + csv.string());
  Dataset d = read_csv(in, t, csv.string());
  if (std::ifstream meta(sidecar_path(csv)); meta) {
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(meta);
    } catch (const nlohmann::ordered_json::exception&) {
      throw dataset_error("malformed dataset sidecar " + sidecar_path(csv).string());
    }
    apply_sidecar(j, d);
    if (d.topology_id != t.id)
      throw dataset_error(csv.string() + ": dataset belongs to '" + d.topology_id +
                          "', not '" + t.id + "'");
  }
  d.validate(t.n(), t.k());
  return d;
}

}  // namespace cktdesign
