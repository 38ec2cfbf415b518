#include <algorithm>
#include <numeric>
#include <random>

#include <catch_amalgamated.hpp>

#include "cktdesign/core.hpp"
#include "cktdesign/topology.hpp"

using namespace cktdesign;

namespace {

std::vector<MetricSpec> specs(std::vector<int> directions, std::vector<int> priorities = {}) {
  std::vector<MetricSpec> out;
  for (std::size_t i = 0; i < directions.size(); ++i)
    out.push_back({"m" + std::to_string(i), "", directions[i],
                   priorities.empty() ? static_cast<int>(i) + 1 : priorities[i]});
  return out;
}

MetricVector random_metrics(std::mt19937_64& g, std::size_t k, int levels) {
  std::uniform_int_distribution<int> d(1, levels);
  std::vector<double> v(k);
  for (auto& x : v) x = d(g);
  return MetricVector(v);
}

}  // namespace

TEST_CASE("meets_threshold examples") {
  const auto pm = specs({+1, -1});
  CHECK(meets_threshold({10, 2}, {10, 2}, pm));
  CHECK(meets_threshold({10, 2}, {8, 3}, pm));
  CHECK_FALSE(meets_threshold({10, 4}, {8, 3}, pm));
  CHECK_THROWS_AS(meets_threshold({1, 2, 3}, {1, 2}, pm), contract_violation);
}

TEST_CASE("lex_better examples") {
  const auto pm = specs({+1, -1});
  CHECK_FALSE(lex_better({5, 3}, {5, 3}, pm));
  CHECK(lex_better({5, 3}, {5, 4}, pm));
  CHECK_FALSE(lex_better({4, 0.1}, {5, 9}, pm));
  CHECK_THROWS_AS(lex_better({1}, {1, 2}, pm), contract_violation);
}

TEST_CASE("lex_better honours priority permutation") {
  const auto second_first = specs({+1, -1}, {2, 1});
  CHECK(lex_better({4, 0.1}, {5, 9}, second_first));
}

TEST_CASE("dominates examples") {
  const auto pp = specs({+1, +1});
  CHECK_FALSE(dominates({3, 3}, {3, 3}, pp));
  CHECK(dominates({3, 3}, {2, 3}, pp));
  CHECK_FALSE(dominates({3, 1}, {2, 3}, pp));
  CHECK_THROWS_AS(dominates({3}, {2, 3}, pp), contract_violation);
}

TEST_CASE("metric spec validation") {
  CHECK_THROWS_AS(MetricOrder(specs({+1, 0})), config_error);
  CHECK_THROWS_AS(MetricOrder(specs({+1, -1}, {1, 1})), config_error);
  CHECK_THROWS_AS(MetricOrder(specs({+1, -1}, {1, 3})), config_error);
}

TEST_CASE("lex_better is a strict total order on distinct vectors") {
  std::mt19937_64 g(11);
  const auto m = specs({+1, -1, +1});
  for (int trial = 0; trial < 2000; ++trial) {
    const auto a = random_metrics(g, 3, 4), b = random_metrics(g, 3, 4), c = random_metrics(g, 3, 4);
    CHECK_FALSE(lex_better(a, a, m));
    CHECK_FALSE((lex_better(a, b, m) && lex_better(b, a, m)));
    if (lex_better(a, b, m) && lex_better(b, c, m)) CHECK(lex_better(a, c, m));
    if (a != b) CHECK((lex_better(a, b, m) || lex_better(b, a, m)));
  }
}

TEST_CASE("dominance implies lex preference under every priority permutation") {
  std::mt19937_64 g(12);
  for (std::size_t k = 1; k <= 3; ++k) {
    std::vector<int> dirs(k);
    for (auto& d : dirs) d = (g() & 1) ? +1 : -1;
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 1);
    do {
      const auto m = specs(dirs, perm);
      for (int trial = 0; trial < 300; ++trial) {
        const auto a = random_metrics(g, k, 3), b = random_metrics(g, k, 3);
        if (dominates(a, b, m)) CHECK(lex_better(a, b, m));
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST_CASE("meets_threshold is reflexive, transitive and antisymmetric") {
  std::mt19937_64 g(13);
  const auto m = specs({-1, +1, -1});
  for (int trial = 0; trial < 2000; ++trial) {
    const auto a = random_metrics(g, 3, 3), b = random_metrics(g, 3, 3), c = random_metrics(g, 3, 3);
    CHECK(meets_threshold(a, a, m));
    if (meets_threshold(a, b, m) && meets_threshold(b, c, m)) CHECK(meets_threshold(a, c, m));
    if (meets_threshold(a, b, m) && meets_threshold(b, a, m)) CHECK(a == b);
  }
}

TEST_CASE("parameter spec grid counts") {
  CHECK(ParameterSpec{"W", "um", 2.8, 0.2, 6.6}.count() == 20);
  CHECK(ParameterSpec{"R_D", "Ohm", 620, 5, 1450}.count() == 167);
  CHECK(ParameterSpec{"x", "", 1, 1, 1}.count() == 1);
  CHECK(ParameterSpec{"x", "", 0, 0.1, 0.3}.count() == 4);
  CHECK_THROWS_AS((ParameterSpec{"x", "", 0, 0, 1}.validate()), config_error);
  CHECK_THROWS_AS((ParameterSpec{"x", "", 2, 1, 1}.validate()), config_error);
}

TEST_CASE("dataset metadata consistency") {
  Dataset d;
  d.provenance = Provenance::DmEps;
  d.points.push_back({ParameterVector{1.0}, MetricVector{2.0}, 0});
  CHECK_THROWS_AS(d.validate(1, 1), contract_violation);
  d.meta.epsilon = 0.2;
  CHECK_THROWS_AS(d.validate(1, 1), contract_violation);
  d.meta.replicates = 20;
  CHECK_NOTHROW(d.validate(1, 1));
  CHECK_THROWS_AS(d.validate(2, 1), contract_violation);
  d.provenance = Provenance::D0;
  CHECK_THROWS_AS(d.validate(1, 1), contract_violation);
}

TEST_CASE("provenance names round-trip") {
  for (auto p : {Provenance::D0, Provenance::Deps, Provenance::DstarZero, Provenance::DstarEps,
                 Provenance::DmEps, Provenance::DbarMEps})
    CHECK(provenance_from_string(to_string(p)) == p);
  CHECK_THROWS_AS(provenance_from_string("dstar"), contract_violation);
}

TEST_CASE("shipped topology configs load and validate") {
  const auto ids = list_topologies();
  CHECK(ids == std::vector<std::string>{"cascode", "cs", "lna", "mixer", "pa", "twin-ridge", "two-stage", "vco"});
  for (const auto& id : ids) {
    const auto t = find_topology(id);
    CHECK(t.id == id);
    CHECK_NOTHROW(t.validate());
    CHECK(t.backend.kind == BackendSpec::Kind::surrogate);
  }
}

TEST_CASE("CS config lists metrics in the default priority order") {
  const auto t = find_topology("cs");
  CHECK(t.priority_order() == std::vector<std::string>{"bandwidth", "gain", "power"});
  CHECK(t.metrics[*t.metric_index("power")].direction == -1);
  const std::vector<std::string> order{"power", "gain", "bandwidth"};
  const auto swapped = t.with_priority(order);
  CHECK(swapped.priority_order() == order);
  const std::vector<std::string> bad{"power", "power", "gain"};
  CHECK_THROWS_AS(t.with_priority(bad), contract_violation);
}

TEST_CASE("topology parsing rejects malformed configs") {
  auto base = json::parse(R"({
    "id": "toy",
    "parameters": [{"name": "a", "unit": "", "start": 1, "step": 1, "end": 2}],
    "metrics": [{"name": "output", "unit": "", "direction": "+1"}, {"name": "cost", "unit": "", "direction": -1}],
    "backend": {"kind": "surrogate", "model": "twin-ridge"}
  })");
  // twin-ridge needs two parameters
  CHECK_THROWS_AS(topology_from_json(base), config_error);

  base["parameters"].push_back({{"name", "b"}, {"unit", ""}, {"start", 0}, {"step", 1}, {"end", 1}});
  const auto t = topology_from_json(base);
  CHECK(t.metrics[0].priority == 1);
  CHECK(t.metrics[1].priority == 2);

  auto dup = base;
  dup["parameters"][1]["name"] = "a";
  CHECK_THROWS(topology_from_json(dup));

  auto unknown = base;
  unknown["backend"]["model"] = "nope";
  CHECK_THROWS_AS(topology_from_json(unknown), config_error);

  auto bad_dir = base;
  bad_dir["metrics"][0]["direction"] = 2;
  CHECK_THROWS(topology_from_json(bad_dir));

  CHECK_THROWS_AS(find_topology("no-such-circuit"), config_error);
}
