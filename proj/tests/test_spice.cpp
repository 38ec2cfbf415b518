#include <filesystem>
#include <fstream>

#include <catch_amalgamated.hpp>

#include "cktdesign/dataset_io.hpp"
#include "cktdesign/simulator.hpp"
#include "cktdesign/spice.hpp"
#include "cktdesign/topology.hpp"

using namespace cktdesign;

namespace {

ParameterSpec param(std::string name, std::string unit, double v) { return {std::move(name), std::move(unit), v, 1, v}; }

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cktdesign-spice-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("netlist placeholders are substituted with unit suffixes") {
  const std::vector<ParameterSpec> params{param("R_D", "Ohm", 620)};
  CHECK(emit_netlist(NetlistTemplate("R1 out vdd ${R_D}"), params, ParameterVector{620}) == "R1 out vdd 620");

  const std::vector<ParameterSpec> cs{param("W", "um", 2.8), param("R_D", "Ohm", 620)};
  const auto text = emit_netlist(NetlistTemplate("M1 d g 0 0 nmos W=${W} L=0.18u\nR1 d vdd ${R_D}\n* ${W} again\n"),
                                 cs, ParameterVector{2.8, 620});
  CHECK(text == "M1 d g 0 0 nmos W=2.8u L=0.18u\nR1 d vdd 620\n* 2.8u again\n");
  CHECK(text.find("${") == std::string::npos);

  const std::vector<ParameterSpec> ind{param("L", "nH", 3.6)};
  CHECK(emit_netlist(NetlistTemplate("L1 a b ${L}"), ind, ParameterVector{3.6}) == "L1 a b 3.6n");
}

TEST_CASE("placeholder mismatches name the offending parameters") {
  const std::vector<ParameterSpec> cs{param("W", "um", 4), param("R_D", "Ohm", 620)};
  try {
    (void)emit_netlist(NetlistTemplate("M1 ${W}\nR1 ${R_D}\nL1 ${Lg}\n"), cs, ParameterVector{4, 620});
    FAIL("expected template_error");
  } catch (const template_error& e) {
    CHECK(e.names() == std::vector<std::string>{"Lg"});
    CHECK(std::string(e.what()).find("Lg") != std::string::npos);
  }
  try {
    (void)emit_netlist(NetlistTemplate("M1 ${W}\n"), cs, ParameterVector{4, 620});
    FAIL("expected template_error");
  } catch (const template_error& e) {
    CHECK(e.names() == std::vector<std::string>{"R_D"});
  }
}

TEST_CASE("analysis cards go ahead of .end") {
  const std::vector<std::string> cards{".ac dec 10 1 1e12", ".meas ac gain max vdb(out)"};
  CHECK(with_analyses("R1 a b 1\n.end\n", cards) == "R1 a b 1\n.ac dec 10 1 1e12\n.meas ac gain max vdb(out)\n.end\n");
  CHECK(with_analyses("R1 a b 1", cards) == "R1 a b 1\n.ac dec 10 1 1e12\n.meas ac gain max vdb(out)\n.end\n");
  CHECK(with_analyses("R1 a b 1\n.END\n", {}) == "R1 a b 1\n.END\n");
}

TEST_CASE("measurement parsing") {
  const auto one = parse_measurements("gain = 1.514e+01");
  CHECK(one.values.at("gain") == 15.14);
  CHECK(one.warnings.empty());

  const auto noisy = parse_measurements(
      "Circuit: cs\n\nNo. of Data Rows : 1\nbw                  =  1.768388e+09 at= 1e9\n  power = 7.2e-04\n");
  CHECK(noisy.values.at("bw") == 1.768388e9);
  CHECK(noisy.values.at("power") == 7.2e-4);

  const auto dup = parse_measurements("gain = 1\ngain = 2\n");
  CHECK(dup.values.at("gain") == 2.0);
  REQUIRE(dup.warnings.size() == 1);
  CHECK(dup.warnings[0].find("gain") != std::string::npos);

  CHECK_THROWS_AS(parse_measurements(""), parse_error);
  try {
    (void)parse_measurements("ok = 1\nbroken = 1.2.3\n");
    FAIL("expected parse_error");
  } catch (const parse_error& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).starts_with("line 2: "));
  }
}

TEST_CASE("measurements map onto topology metrics") {
  CircuitTopology t;
  t.id = "mapped";
  t.parameters = {param("R", "", 1)};
  t.metrics = {{"gain", "", 1, 1}, {"bandwidth", "Hz", 1, 2}};
  t.backend.kind = BackendSpec::Kind::spice;
  t.backend.measurements = {{"gain_meas", "gain"}, {"bw_meas", "bandwidth"}};
  const auto y = map_measurements(parse_measurements("bw_meas = 5\ngain_meas = 3\n"), t);
  CHECK(y == MetricVector{3, 5});
  CHECK_THROWS_AS(map_measurements(parse_measurements("gain_meas = 3\n"), t), parse_error);
}

TEST_CASE("spice backend with a missing executable fails the simulation") {
  const auto dir = scratch("missing");
  write_file(dir / "t.cir", "R1 out vdd ${R}\n.end\n");
  const auto t = topology_from_json(json::parse(R"({
    "id": "mock", "parameters": [{"name": "R", "unit": "", "start": 1, "step": 1, "end": 2}],
    "metrics": [{"name": "gain", "unit": "", "direction": 1}],
    "backend": {"kind": "spice", "netlist": "t.cir", "executable": "/nonexistent/ngspice",
                "measurements": {"gain_meas": "gain"}}})"),
                                    dir);
  try {
    (void)simulate(t, ParameterVector{1.0}, {.point_index = 7});
    FAIL("expected simulation_failed");
  } catch (const simulation_failed& e) {
    CHECK(e.point_index() == 7);
  }
  CHECK_THROWS_AS(simulate_grid(t), simulation_failed);
}

TEST_CASE("spice backend drives an external batch simulator") {
  const auto dir = scratch("mock");
  write_file(dir / "amp.cir", "* mock amplifier\nR1 out vdd ${R}\nC1 out 0 ${C}\n.end\n");
  const auto exe = dir / "fake-spice";
  write_file(exe,
             "#!/bin/sh\n"
             "[ \"$1\" = \"-b\" ] || exit 2\n"
             "r=$(sed -n 's/^R1 out vdd \\([^ ]*\\)$/\\1/p' \"$2\")\n"
             "grep -q '^.op$' \"$2\" || exit 3\n"
             "if [ \"$r\" = \"0.5\" ]; then echo 'timestep too small'; exit 1; fi\n"
             "if [ \"$r\" = \"1.5\" ]; then echo 'gain_meas = garbage'; exit 0; fi\n"
             "echo 'Circuit: mock amplifier'\n"
             "echo \"gain_meas = $r\"\n"
             "echo 'bw_meas = 2.5e+09'\n");
  std::filesystem::permissions(exe, std::filesystem::perms::owner_all);

  auto j = json::parse(R"({
    "id": "mock",
    "parameters": [{"name": "R", "unit": "", "start": 0.5, "step": 0.5, "end": 2.5},
                   {"name": "C", "unit": "fF", "start": 1, "step": 1, "end": 1}],
    "metrics": [{"name": "gain", "unit": "", "direction": 1}, {"name": "bandwidth", "unit": "Hz", "direction": 1}],
    "backend": {"kind": "spice", "netlist": "amp.cir", "analyses": [".op"], "max_workers": 2,
                "measurements": {"gain_meas": "gain", "bw_meas": "bandwidth"}}})");
  j["backend"]["executable"] = exe.string();
  const auto t = topology_from_json(j, dir);

  CHECK(simulate(t, ParameterVector{2.0, 1.0}) == MetricVector{2.0, 2.5e9});

  const auto d0 = simulate_grid(t, 4);
  CHECK(d0.meta.skipped == std::vector<std::int64_t>{0, 2});
  REQUIRE(d0.size() == 3);
  CHECK(d0.points[0].source_index == 1);
  CHECK(d0.points[0].y == MetricVector{1.0, 2.5e9});
  CHECK(d0.points[2].y == MetricVector{2.5, 2.5e9});
  CHECK(to_csv(d0, t) == to_csv(simulate_grid(t, 1), t));
}

TEST_CASE("spice config must cover every metric") {
  CHECK_THROWS_AS(topology_from_json(json::parse(R"({
    "id": "mock", "parameters": [{"name": "R", "unit": "", "start": 1, "step": 1, "end": 2}],
    "metrics": [{"name": "gain", "unit": "", "direction": 1}, {"name": "bw", "unit": "", "direction": 1}],
    "backend": {"kind": "spice", "netlist": "t.cir", "measurements": {"gain_meas": "gain"}}})")),
                  config_error);
}
