#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <catch_amalgamated.hpp>

#include "cktdesign/dataset_io.hpp"
#include "cktdesign/eval.hpp"
#include "cktdesign/filter.hpp"
#include "cktdesign/simulator.hpp"
#include "cktdesign/topology.hpp"
#include "oracles.hpp"

using namespace cktdesign;
using Catch::Matchers::WithinRel;

namespace {

// Threshold directions (+1,-1), priorities (1,2).
CircuitTopology toy_topology() {
  CircuitTopology t;
  t.id = "toy";
  t.parameters = {{"a", "", 0, 1, 10}};
  t.metrics = {{"gain", "", +1, 1}, {"power", "", -1, 2}};
  return t;
}

Dataset toy_dataset(std::vector<std::pair<double, double>> ys) {
  Dataset d;
  d.topology_id = "toy";
  for (std::size_t i = 0; i < ys.size(); ++i)
    d.points.push_back({ParameterVector{static_cast<double>(i)}, MetricVector{ys[i].first, ys[i].second},
                        static_cast<std::int64_t>(i)});
  return d;
}

const Dataset& cs_d0() {
  static const Dataset d = simulate_grid(find_topology("cs"));
  return d;
}

}  // namespace

TEST_CASE("perturb_query examples") {
  const std::vector<MetricSpec> plus{{"a", "", +1, 1}}, minus{{"a", "", -1, 1}};
  const std::vector<double> zero{0.0}, half{0.5};
  CHECK(perturb_query(MetricVector{100}, plus, 0.2, zero) == MetricVector{100});
  CHECK_THAT(perturb_query(MetricVector{100}, plus, 0.2, std::vector<double>{1.0 - 0x1p-53})[0], WithinRel(80.0, 1e-12));
  CHECK_THAT(perturb_query(MetricVector{10}, minus, 0.2, half)[0], WithinRel(11.0, 1e-12));
  CHECK_THROWS_AS(perturb_query(MetricVector{100}, plus, 1.0, zero), contract_violation);
  CHECK_THROWS_AS(perturb_query(MetricVector{100}, plus, -0.1, zero), contract_violation);
  CHECK_THROWS_AS(perturb_query(MetricVector{100}, plus, 0.2, std::vector<double>{1.0}), contract_violation);
}

TEST_CASE("deps: bounds, ordering and seeding") {
  const auto t = find_topology("cs");
  const auto& d0 = cs_d0();
  const auto none = build_deps(d0, t, {.epsilon = 0.0, .seed = 3});
  for (std::size_t i = 0; i < d0.size(); ++i) CHECK(none.points[i].y == d0.points[i].y);

  const auto d = build_deps(d0, t, {.epsilon = 0.2, .seed = 3});
  REQUIRE(d.size() == d0.size());
  for (std::size_t i = 0; i < d0.size(); ++i) {
    CHECK(d.points[i].x == d0.points[i].x);
    for (std::size_t m = 0; m < t.k(); ++m) {
      const double y = d0.points[i].y[m], yt = d.points[i].y[m];
      const double lambda = t.metrics[m].direction;
      REQUIRE(std::abs(yt - y) <= 0.2 * y * (1 + 1e-15));
      REQUIRE(lambda * yt <= lambda * y);
    }
  }
  CHECK(to_csv(d, t) == to_csv(build_deps(d0, t, {.epsilon = 0.2, .seed = 3}), t));
  CHECK(to_csv(d, t) != to_csv(build_deps(d0, t, {.epsilon = 0.2, .seed = 4}), t));
  CHECK(d.meta.epsilon == 0.2);
  CHECK_FALSE(d.meta.replicates.has_value());
  CHECK_NOTHROW(d.validate(t.n(), t.k()));
}

TEST_CASE("perturbation draws follow the point, not its position") {
  const auto t = find_topology("cs");
  const auto& d0 = cs_d0();
  std::vector<std::size_t> odd;
  for (std::size_t i = 1; i < d0.size(); i += 2) odd.push_back(i);
  const auto whole = build_deps(d0, t, {.seed = 9});
  const auto part = build_deps(d0.subset(odd), t, {.seed = 9});
  for (std::size_t j = 0; j < odd.size(); ++j) CHECK(part.points[j].y == whole.points[odd[j]].y);
}

TEST_CASE("feasible_set examples") {
  const auto t = toy_topology();
  const auto d = toy_dataset({{10, 5}, {12, 4}, {9, 1}});
  CHECK(feasible_set(MetricVector{10, 5}, d, t.metrics) == std::vector<std::size_t>{0, 1});
  CHECK(feasible_set(MetricVector{13, 0.5}, d, t.metrics).empty());
  for (std::size_t j = 0; j < d.size(); ++j) {
    const auto f = feasible_set(d.points[j].y, d, t.metrics);
    CHECK(std::find(f.begin(), f.end(), j) != f.end());
  }
}

TEST_CASE("lex_argmax examples") {
  const auto t = toy_topology();
  const auto d = toy_dataset({{10, 5}, {12, 4}, {12, 6}, {12, 4}});
  const std::vector<std::size_t> single{2}, three{0, 1, 2}, twins{3, 1};
  CHECK(lex_argmax(single, d, t.metrics) == 2);
  CHECK(lex_argmax(three, d, t.metrics) == 1);
  CHECK(lex_argmax(twins, d, t.metrics) == 1);
  CHECK_THROWS_AS(lex_argmax(std::vector<std::size_t>{}, d, t.metrics), contract_violation);
}

TEST_CASE("dstar0 on the toy set and on a single point") {
  const auto t = toy_topology();
  const auto d = toy_dataset({{10, 5}, {12, 4}, {9, 1}});
  const auto s = build_dstar0(d, t);
  REQUIRE(s.size() == 3);
  CHECK(s.points[0].y == d.points[0].y);
  CHECK(s.points[0].x == d.points[1].x);
  CHECK(s.points[0].source_index == 1);

  const auto one = toy_dataset({{3, 3}});
  const auto s1 = build_dstar0(one, t);
  REQUIRE(s1.size() == 1);
  CHECK(s1.points[0].x == one.points[0].x);
}

TEST_CASE("dbar-m-eps truncates at the feasible set size") {
  const auto t = toy_topology();
  // every query of point 0 under epsilon=0 is (10, 5); F = {0, 1, 3}
  const auto d = toy_dataset({{10, 5}, {12, 4}, {9, 1}, {11, 5}});
  const auto out = build_dbar_m_eps(d, t, {.epsilon = 0.0, .seed = 1, .replicates = 20});
  std::vector<std::int64_t> targets_of_first;
  for (const auto& p : out.points)
    if (p.y == d.points[0].y) targets_of_first.push_back(p.source_index);
  CHECK(targets_of_first == std::vector<std::int64_t>{1, 3, 0});
}

TEST_CASE("dataset sizes") {
  const auto t = find_topology("cs");
  const auto& d0 = cs_d0();
  const PerturbationConfig cfg{.epsilon = 0.2, .seed = 7, .replicates = 20};
  CHECK(build_dstar0(d0, t).size() == d0.size());
  CHECK(build_dstar_eps(d0, t, cfg).size() == d0.size());
  CHECK(build_dm_eps(d0, t, cfg).size() == 66800);
  const auto dbar = build_dbar_m_eps(d0, t, cfg);
  CHECK(dbar.size() <= 20 * d0.size());
  CHECK(dbar.size() >= d0.size());
  for (const auto& id : list_topologies()) {
    const auto ti = find_topology(id);
    const auto di = simulate_grid(ti);
    CHECK(build_dstar0(di, ti).size() == di.size());
  }
}

TEST_CASE("dbar-m-eps emits distinct circuits per query") {
  const auto t = find_topology("cs");
  const auto& d0 = cs_d0();
  const auto out = build_dbar_m_eps(d0, t, {.seed = 2, .replicates = 20});
  std::size_t start = 0;
  while (start < out.size()) {
    std::size_t end = start;
    std::set<std::int64_t> seen;
    while (end < out.size() && out.points[end].y == out.points[start].y) {
      CHECK(seen.insert(out.points[end].source_index).second);
      ++end;
    }
    CHECK(end - start <= 20);
    start = end;
  }
}

TEST_CASE("feasibility invariant holds under re-simulation") {
  const auto t = find_topology("cs");
  const auto& d0 = cs_d0();
  const PerturbationConfig cfg{.epsilon = 0.2, .seed = 11, .replicates = 20};
  const MetricOrder order(t.metrics);
  for (auto method : {Provenance::DstarZero, Provenance::DstarEps, Provenance::DmEps, Provenance::DbarMEps}) {
    const auto d = build_dataset(method, d0, t, cfg, 2);
    std::size_t violations = 0;
    for (const auto& p : d.points) violations += !order.meets(simulate(t, p.x).view(), p.y.view());
    INFO(to_string(method));
    CHECK(violations == 0);
  }
}

TEST_CASE("collapse identities") {
  const auto t = find_topology("cs");
  const auto& d0 = cs_d0();
  const PerturbationConfig eps0{.epsilon = 0.0, .seed = 5, .replicates = 20};
  CHECK(to_csv(build_dstar_eps(d0, t, eps0), t) == to_csv(build_dstar0(d0, t), t));
  const PerturbationConfig m1{.epsilon = 0.2, .seed = 5, .replicates = 1};
  CHECK(to_csv(build_dbar_m_eps(d0, t, m1), t) == to_csv(build_dstar_eps(d0, t, m1), t));
  CHECK(to_csv(build_dm_eps(d0, t, m1), t) == to_csv(build_deps(d0, t, m1), t));
}

TEST_CASE("builders are independent of the worker count") {
  const auto t = find_topology("cs");
  const auto& d0 = cs_d0();
  const PerturbationConfig cfg{.seed = 8};
  CHECK(to_csv(build_dstar_eps(d0, t, cfg, 1), t) == to_csv(build_dstar_eps(d0, t, cfg, 3), t));
  CHECK(to_csv(build_dbar_m_eps(d0, t, cfg, 1), t) == to_csv(build_dbar_m_eps(d0, t, cfg, 4), t));
}

TEST_CASE("lex selection agrees with a brute-force oracle") {
  const auto t = find_topology("cs");
  const auto& d0 = cs_d0();
  std::mt19937_64 g(21);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::size_t> pos(d0.size());
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    std::shuffle(pos.begin(), pos.end(), g);
    pos.resize(300);
    std::sort(pos.begin(), pos.end());
    const auto sub = d0.subset(pos);
    const auto queries = perturbed_queries(sub, t.metrics, {.seed = static_cast<std::uint64_t>(trial)}, 0);
    for (const auto& q : queries) {
      const auto mine = lex_argmax(feasible_set(q, sub, t.metrics), sub, t.metrics);
      REQUIRE(static_cast<std::ptrdiff_t>(mine) == oracle::best_feasible(sub, q, t.metrics));
    }
  }
}

TEST_CASE("dstar0 targets are Pareto-optimal") {
  for (const auto& id : list_topologies()) {
    const auto t = find_topology(id);
    const auto d0 = simulate_grid(t);
    std::vector<std::size_t> pos(d0.size());
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    std::shuffle(pos.begin(), pos.end(), std::mt19937_64(4));
    pos.resize(std::min<std::size_t>(500, pos.size()));
    const auto sub = d0.subset(pos);
    const auto filtered = build_dstar0(sub, t);
    std::set<std::int64_t> targets;
    for (const auto& p : filtered.points) targets.insert(p.source_index);
    INFO(id);
    std::map<std::int64_t, const DesignPoint*> by_source;
    for (const auto& p : sub.points) by_source[p.source_index] = &p;
    for (std::size_t i = 0; i < sub.size(); ++i) {
      const auto& p = sub.points[i];
      bool beaten = false;
      for (const auto& other : sub.points) beaten = beaten || dominates(other.y, p.y, t.metrics);
      if (beaten) CHECK_FALSE(targets.contains(p.source_index));
      // an undominated query can only be served by a circuit with identical metrics
      else CHECK(by_source.at(filtered.points[i].source_index)->y == p.y);
    }
  }
}

TEST_CASE("filtering leaves fewer distinct targets than grid points") {
  for (const auto& id : list_topologies()) {
    const auto t = find_topology(id);
    const auto d0 = simulate_grid(t);
    const auto filtered = build_dstar_eps(d0, t, {.seed = 1});
    INFO(id);
    CHECK(clustering_stats(filtered).distinct < d0.size());
  }
}

TEST_CASE("twin-ridge non-injectivity witness") {
  const auto t = find_topology("twin-ridge");
  const auto d0 = simulate_grid(t);
  const PerturbationConfig cfg{.epsilon = 0.2, .seed = 0, .replicates = 20};
  const auto dm = build_dm_eps(d0, t, cfg);
  const FeasibilityIndex index(d0, t.metrics);
  const double p_range = t.parameters[0].end - t.parameters[0].start;
  bool witnessed = false;
  for (std::size_t a = 0; a < dm.size() && !witnessed; ++a)
    for (std::size_t b = a + 1; b < dm.size() && !witnessed; ++b) {
      const auto& qa = dm.points[a].y;
      const auto& qb = dm.points[b].y;
      bool close = true;
      for (std::size_t m = 0; m < t.k(); ++m) close = close && std::abs(qa[m] - qb[m]) <= 0.01 * qb[m];
      if (!close) continue;
      if (std::abs(dm.points[a].x[0] - dm.points[b].x[0]) <= 0.25 * p_range) continue;
      witnessed = index.best_feasible(qa) == index.best_feasible(qb);
    }
  CHECK(witnessed);
}

TEST_CASE("normalization") {
  Dataset d = toy_dataset({{620, 1}, {1450, 1}, {1035, 1}});
  const auto s = fit_normalizer(d, Side::metrics);
  CHECK(s.apply(0, 620) == -1.0);
  CHECK(s.apply(0, 1450) == 1.0);
  CHECK(s.apply(0, 1035) == 0.0);
  CHECK(s.apply(1, 1) == 0.0);
  CHECK(s.invert(1, 0.0) == 1.0);
  CHECK(s.invert(1, 0.7) == 1.0);
  CHECK_THROWS_AS(s.apply(std::vector<double>{1.0}), contract_violation);
  CHECK_THROWS_AS(fit_normalizer(Dataset{}, Side::metrics), contract_violation);

  const auto& d0 = cs_d0();
  for (auto side : {Side::parameters, Side::metrics}) {
    const auto st = fit_normalizer(d0, side);
    std::mt19937_64 g(3);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<double> v(st.size());
      for (std::size_t f = 0; f < v.size(); ++f)
        v[f] = std::uniform_real_distribution<double>(st.min[f], st.max[f])(g);
      const auto back = st.invert(st.apply(v));
      for (std::size_t f = 0; f < v.size(); ++f) REQUIRE(std::abs(back[f] - v[f]) <= 1e-12 * std::abs(v[f]));
    }
  }
}
