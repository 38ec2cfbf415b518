#pragma once

// External SPICE adapter: `${name}` netlist templates, batch-mode process
// invocation, and `name = value` measurement parsing.

#include <array>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <unistd.h>

#include "core.hpp"

namespace cktdesign {

class template_error : public std::runtime_error {
 public:
  template_error(const std::string& what, std::vector<std::string> names)
      : std::runtime_error(what), names_(std::move(names)) {}
  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  std::vector<std::string> names_;
};

class parse_error : public std::runtime_error {
 public:
  parse_error(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Shortest decimal text that round-trips the double.
inline std::string format_real(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

/// SPICE scale suffix for a parameter unit ("um" -> "u", "nH" -> "n", ...).
inline std::string_view spice_suffix(std::string_view unit) {
  static const std::map<std::string_view, std::string_view> table{
      {"um", "u"},   {"\xC2\xB5m", "u"}, {"nm", "n"},  {"mm", "m"},  {"m", ""},
      {"Ohm", ""},   {"ohm", ""},        {"\xCE\xA9", ""},          {"kOhm", "k"},
      {"MOhm", "meg"}, {"H", ""},        {"uH", "u"},  {"nH", "n"},  {"pH", "p"},
      {"F", ""},     {"uF", "u"},        {"nF", "n"},  {"pF", "p"},  {"fF", "f"},
      {"V", ""},     {"mV", "m"},        {"A", ""},    {"mA", "m"},  {"uA", "u"},
      {"", ""}};
  auto it = table.find(unit);
  return it == table.end() ? std::string_view{} : it->second;
}

class NetlistTemplate {
 public:
  explicit NetlistTemplate(std::string text) : text_(std::move(text)) {
    static const std::regex placeholder(R"(\$\{([A-Za-z_][A-Za-z0-9_]*)\})");
    for (auto it = std::sregex_iterator(text_.begin(), text_.end(), placeholder);
         it != std::sregex_iterator(); ++it)
      placeholders_.insert((*it)[1].str());
  }

  static NetlistTemplate from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open netlist template " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return NetlistTemplate(ss.str());
  }

  const std::string& text() const noexcept { return text_; }
  const std::set<std::string>& placeholders() const noexcept { return placeholders_; }

 private:
  std::string text_;
  std::set<std::string> placeholders_;
};

/// Substitute every `${name}` with the parameter value plus its SPICE suffix.
/// The placeholder set must equal the parameter names exactly.
inline std::string emit_netlist(const NetlistTemplate& tpl, std::span<const ParameterSpec> params,
                                const ParameterVector& x) {
  if (x.size() != params.size())
    throw contract_violation("parameter vector has " + std::to_string(x.size()) +
                             " values, expected " + std::to_string(params.size()));
  std::set<std::string> names;
  for (const auto& p : params) names.insert(p.name);

  std::vector<std::string> unused, unknown;
  std::set_difference(tpl.placeholders().begin(), tpl.placeholders().end(), names.begin(),
                      names.end(), std::back_inserter(unknown));
  std::set_difference(names.begin(), names.end(), tpl.placeholders().begin(),
                      tpl.placeholders().end(), std::back_inserter(unused));
  if (!unknown.empty() || !unused.empty()) {
    std::string msg = "netlist template placeholders do not match parameters;";
    std::vector<std::string> all;
    for (const auto& n : unknown) msg += " unknown placeholder '" + n + "';", all.push_back(n);
    for (const auto& n : unused) msg += " missing placeholder for '" + n + "';", all.push_back(n);
    throw template_error(msg, std::move(all));
  }

  std::string out = tpl.text();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string key = "${" + params[i].name + "}";
    const std::string value = format_real(x[i]) + std::string(spice_suffix(params[i].unit));
    for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size()))
      out.replace(pos, key.size(), value);
  }
  return out;
}

/// Insert analysis commands ahead of the terminating `.end` card (or append).
inline std::string with_analyses(std::string netlist, std::span<const std::string> analyses) {
  if (analyses.empty()) return netlist;
  std::string block;
  for (const auto& a : analyses) block += a + "\n";
  static const std::regex end_card(R"((^|\n)[ \t]*\.end[ \t]*(\r?\n|$))", std::regex::icase);
  std::smatch m;
  if (std::regex_search(netlist, m, end_card)) {
    const auto at = static_cast<std::size_t>(m.position(0)) + m[1].length();
    netlist.insert(at, block);
  } else {
    if (!netlist.empty() && netlist.back() != '\n') netlist += '\n';
    netlist += block + ".end\n";
  }
  return netlist;
}

struct MeasurementParse {
  std::map<std::string, double> values;
  std::vector<std::string> warnings;
};

/// Extract `<name> = <value>` lines from simulator output. A matching line
/// whose value does not parse as a real is an error; repeated names keep the
/// last value and record a warning.
inline MeasurementParse parse_measurements(std::string_view text) {
  static const std::regex line_re(R"(^\s*([A-Za-z_][A-Za-z0-9_.]*)\s*=\s*(\S+))");
  MeasurementParse out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto stop = text.find('\n', start);
    if (stop == std::string_view::npos) stop = text.size();
    std::string line(text.substr(start, stop - start));
    ++line_no;
    std::smatch m;
    if (std::regex_search(line, m, line_re)) {
      const std::string name = m[1].str();
      const std::string token = m[2].str();
      double v = 0.0;
      const char* first = token.data();
      const char* last = token.data() + token.size();
      if (*first == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || !std::isfinite(v))
        throw parse_error("unparsable value '" + token + "' for measurement '" + name + "'",
                          line_no);
      if (out.values.contains(name))
        out.warnings.push_back("line " + std::to_string(line_no) + ": duplicate measurement '" +
                               name + "', keeping last value");
      out.values[name] = v;
    }
    if (stop == text.size()) break;
    start = stop + 1;
  }
  if (out.values.empty()) throw parse_error("no measurements found in simulator output", 0);
  return out;
}

/// Map raw measurements through the backend's measurement->metric table into
/// topology metric order.
inline MetricVector map_measurements(const MeasurementParse& parsed, const CircuitTopology& t) {
  std::vector<double> y(t.k());
  std::vector<bool> filled(t.k(), false);
  for (const auto& [meas, metric] : t.backend.measurements) {
    auto idx = t.metric_index(metric);
    if (!idx) throw config_error("measurement map names unknown metric '" + metric + "'");
    auto it = parsed.values.find(meas);
    if (it == parsed.values.end()) continue;
    y[*idx] = it->second;
    filled[*idx] = true;
  }
  for (std::size_t i = 0; i < t.k(); ++i)
    if (!filled[i]) throw parse_error("missing measurement for metric '" + t.metrics[i].name + "'", 0);
  return MetricVector(std::move(y));
}

namespace detail {

inline bool executable_available(const std::string& exe) {
  if (exe.find('/') != std::string::npos) return ::access(exe.c_str(), X_OK) == 0;
  const char* path = std::getenv("PATH");
  if (!path) return false;
  std::string_view rest(path);
  while (!rest.empty()) {
    auto colon = rest.find(':');
    auto dir = rest.substr(0, colon);
    if (!dir.empty()) {
      auto candidate = std::filesystem::path(std::string(dir)) / exe;
      if (::access(candidate.c_str(), X_OK) == 0) return true;
    }
    if (colon == std::string_view::npos) break;
    rest.remove_prefix(colon + 1);
  }
  return false;
}

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

}  // namespace detail

/// Run the external simulator in batch mode on one parameter vector.
inline MetricVector run_spice(const CircuitTopology& t, const ParameterVector& x,
                              std::int64_t point_index = -1) {
  const auto& b = t.backend;
  if (!detail::executable_available(b.executable))
    throw simulation_failed("spice executable '" + b.executable + "' not found", point_index);

  const auto netlist =
      with_analyses(emit_netlist(NetlistTemplate::from_file(b.netlist_template), t.parameters, x),
                    b.analyses);

  static std::atomic<std::uint64_t> counter{0};
  const auto path = std::filesystem::temp_directory_path() /
                    ("cktdesign-" + std::to_string(::getpid()) + "-" +
                     std::to_string(counter.fetch_add(1)) + ".cir");
  {
    std::ofstream out(path);
    if (!out) throw simulation_failed("cannot write netlist " + path.string(), point_index);
    out << netlist;
  }

  const std::string cmd =
      detail::shell_quote(b.executable) + " -b " + detail::shell_quote(path.string()) + " 2>&1";
  std::string output;
  int status = -1;
  if (FILE* pipe = ::popen(cmd.c_str(), "r")) {
    std::array<char, 4096> buf{};
    std::size_t got;
    while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) output.append(buf.data(), got);
    status = ::pclose(pipe);
  }
  std::error_code ec;
  std::filesystem::remove(path, ec);
  if (status != 0)
    throw simulation_failed("spice exited with status " + std::to_string(status), point_index);

  try {
    return map_measurements(parse_measurements(output), t);
  } catch (const parse_error& e) {
    throw simulation_failed(std::string("spice output: ") + e.what(), point_index);
  }
}

}  // namespace cktdesign
