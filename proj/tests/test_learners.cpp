#include <cstring>
#include <random>

#include <catch_amalgamated.hpp>

#include "cktdesign/model.hpp"
#include "cktdesign/simulator.hpp"
#include "cktdesign/topology.hpp"
#include "oracles.hpp"

using namespace cktdesign;

namespace {

CircuitTopology toy_topology(double lo = 0.0, double hi = 10.0) {
  CircuitTopology t;
  t.id = "toy";
  t.parameters = {{"a", "", lo, 1, hi}};
  t.metrics = {{"gain", "", +1, 1}, {"power", "", -1, 2}};
  return t;
}

Dataset toy_dataset(std::vector<std::pair<double, MetricVector>> rows) {
  Dataset d;
  d.topology_id = "toy";
  for (std::size_t i = 0; i < rows.size(); ++i)
    d.points.push_back({ParameterVector{rows[i].first}, rows[i].second, static_cast<std::int64_t>(i)});
  return d;
}

const Dataset& cs_d0() {
  static const Dataset d = simulate_grid(find_topology("cs"));
  return d;
}

Dataset every_nth(const Dataset& d, std::size_t step) {
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < d.size(); i += step) pos.push_back(i);
  return d.subset(pos);
}

TrainConfig quick(ModelKind kind, std::uint64_t seed = 1) {
  TrainConfig c;
  c.kind = kind;
  c.seed = seed;
  c.mlp.hidden = {16, 16};
  c.mlp.epochs = 5;
  c.forest.trees = 10;
  return c;
}

template <class Net>
bool same_weights(const Net& a, const Net& b) {
  if (a.sizes() != b.sizes()) return false;
  for (std::size_t l = 0; l < a.depth(); ++l) {
    const auto& la = a.layers()[l];
    const auto& lb = b.layers()[l];
    using S = typename Net::Matrix::Scalar;
    if (std::memcmp(la.weight.data(), lb.weight.data(), sizeof(S) * la.weight.size()) != 0) return false;
    if (std::memcmp(la.bias.data(), lb.bias.data(), sizeof(S) * la.bias.size()) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("zero-initialized MLP outputs zero") {
  const std::vector<int> sizes{3, 5, 4, 2};
  const Mlp<double> net(sizes);
  Mlp<double>::Matrix x = Mlp<double>::Matrix::Random(3, 7);
  CHECK(net.forward(x).isZero(0.0));
  CHECK(net.sizes() == sizes);
  CHECK_THROWS_AS(net.forward(Mlp<double>::Matrix::Zero(2, 1)), contract_violation);
  CHECK_THROWS_AS(net.loss(x, Mlp<double>::Matrix::Zero(3, 7)), contract_violation);
}

TEST_CASE("rectifier removes negative pre-activations") {
  const std::vector<int> sizes{1, 2, 1};
  Mlp<double> net(sizes);
  auto& l = net.layers();
  l[0].weight << 1.0, -1.0;
  l[1].weight << 1.0, 1.0;
  Mlp<double>::Matrix x(1, 2);
  x << 3.0, -2.0;
  const auto out = net.forward(x);
  CHECK(out(0, 0) == 3.0);
  CHECK(out(0, 1) == 2.0);
  l[0].weight << -1.0, -1.0;
  Mlp<double>::Matrix pos(1, 1);
  pos << 4.0;
  CHECK(net.forward(pos)(0, 0) == 0.0);
}

TEST_CASE("MLP gradient matches central differences on 100 random nets") {
  std::mt19937_64 g(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) worst = std::max(worst, oracle::gradient_check(g));
  INFO("worst relative error " << worst);
  CHECK(worst <= 1e-4);
}

TEST_CASE("L1 subgradient is zero at an exact fit") {
  const std::vector<int> sizes{1, 1};
  Mlp<double> net(sizes);
  net.layers()[0].weight << 2.0;
  Mlp<double>::Matrix x(1, 1), y(1, 1);
  x << 1.5;
  y << 3.0;
  const auto g = net.gradient(x, y);
  CHECK(g.loss == 0.0);
  CHECK(g.layers[0].weight(0, 0) == 0.0);
  CHECK(g.layers[0].bias(0) == 0.0);
}

TEST_CASE("MLP memorizes a repeated pair") {
  const std::vector<int> sizes{3, 200, 300, 500, 500, 300, 200, 2};
  Mlp<float> net(sizes);
  Rng init(5);
  net.init_uniform(init);
  Mlp<float>::Matrix x(3, 50), y(2, 50);
  for (int c = 0; c < 50; ++c) {
    x.col(c) << 0.3f, -0.2f, 0.5f;
    y.col(c) << 0.1f, -0.4f;
  }
  const auto history = train_mlp(net, x, y, MlpConfig{}, 9);
  CHECK(history.size() == 100);
  CHECK(net.loss(x, y) < 1e-2f);

  const auto t = find_topology("cs");
  Dataset copies;
  copies.topology_id = "cs";
  for (int i = 0; i < 50; ++i) copies.points.push_back(cs_d0().points[1234]);
  auto cfg = quick(ModelKind::mlp);
  cfg.mlp = MlpConfig{};
  const auto m = train(copies, t, cfg);
  CHECK(m.metadata.at("final_train_loss").get<double>() < 1e-2);
}

TEST_CASE("MLP training is byte-deterministic") {
  const auto t = find_topology("cs");
  const auto d = every_nth(cs_d0(), 7);
  const auto a = train(d, t, quick(ModelKind::mlp, 3));
  const auto b = train(d, t, quick(ModelKind::mlp, 3));
  const auto c = train(d, t, quick(ModelKind::mlp, 4));
  CHECK(same_weights(a.mlp, b.mlp));
  CHECK_FALSE(same_weights(a.mlp, c.mlp));
  CHECK(a.mlp.sizes() == std::vector<int>{3, 16, 16, 2});
}

TEST_CASE("training rejects empty or mismatched data") {
  const auto t = find_topology("cs");
  CHECK_THROWS_AS(train(Dataset{}, t, quick(ModelKind::forest)), contract_violation);
  auto d = toy_dataset({{1.0, MetricVector{1, 2}}});
  CHECK_THROWS_AS(train(d, t, quick(ModelKind::lookup)), contract_violation);
  auto bad = quick(ModelKind::forest);
  bad.forest.trees = 0;
  CHECK_THROWS_AS(train(every_nth(cs_d0(), 50), t, bad), contract_violation);
}

TEST_CASE("single unbootstrapped tree reproduces its training targets") {
  const auto t = find_topology("cs");
  const auto d = every_nth(cs_d0(), 3);
  auto cfg = quick(ModelKind::forest);
  cfg.forest.trees = 1;
  cfg.forest.bootstrap = false;
  const auto m = train(d, t, cfg);
  for (const auto& p : d.points) REQUIRE(predict(m, p.y) == p.x);
}

TEST_CASE("forest training is deterministic per seed") {
  const auto t = find_topology("cs");
  const auto d = every_nth(cs_d0(), 5);
  const auto a = train(d, t, quick(ModelKind::forest, 8));
  const auto b = train(d, t, quick(ModelKind::forest, 8));
  const auto c = train(d, t, quick(ModelKind::forest, 9));
  bool differs = false;
  for (std::size_t i = 0; i < d.size(); i += 11) {
    CHECK(predict(a, d.points[i].y) == predict(b, d.points[i].y));
    differs = differs || !(predict(a, d.points[i].y) == predict(c, d.points[i].y));
  }
  CHECK(differs);
  REQUIRE(a.forest.size() == 2);
  CHECK(a.forest[0].trees().size() == 10);
}

TEST_CASE("lookup examples") {
  const auto t = toy_topology();
  const auto one = train(toy_dataset({{4.0, MetricVector{7, 3}}}), t, quick(ModelKind::lookup));
  CHECK(predict(one, MetricVector{1, 100}) == ParameterVector{4.0});
  CHECK(predict(one, MetricVector{1e6, 1e-6}) == ParameterVector{4.0});

  // mean relative errors to query (10, 5): (0.1 + 0) / 2, (0 + 0.2) / 2, (1.0 + 0) / 2
  const auto three = train(toy_dataset({{1.0, MetricVector{11, 5}}, {2.0, MetricVector{10, 4}},
                                        {3.0, MetricVector{20, 5}}}),
                           t, quick(ModelKind::lookup));
  CHECK(predict(three, MetricVector{10, 5}) == ParameterVector{1.0});
  CHECK(predict(three, MetricVector{10, 4}) == ParameterVector{2.0});
  CHECK(predict(three, MetricVector{19, 5}) == ParameterVector{3.0});
  CHECK_THROWS_AS(predict(three, MetricVector{10}), contract_violation);
  CHECK_THROWS_AS(predict(three, MetricVector{10, 0}), contract_violation);

  // equal distances favour the earlier pair
  const auto tie = train(toy_dataset({{5.0, MetricVector{9, 5}}, {6.0, MetricVector{11, 5}}}), t,
                         quick(ModelKind::lookup));
  CHECK(predict(tie, MetricVector{10, 5}) == ParameterVector{5.0});
}

TEST_CASE("lookup self-retrieval on the CS grid") {
  const auto t = find_topology("cs");
  const auto m = train(cs_d0(), t, quick(ModelKind::lookup));
  for (std::size_t i = 0; i < cs_d0().size(); i += 3) REQUIRE(predict(m, cs_d0().points[i].y) == cs_d0().points[i].x);
}

TEST_CASE("predictions are clamped to the parameter box") {
  // training targets deliberately lie outside the box of the topology
  const auto t = toy_topology(0.0, 1.0);
  const auto d = toy_dataset({{5.0, MetricVector{1, 1}}, {-3.0, MetricVector{2, 2}}, {0.5, MetricVector{3, 1}}});
  for (auto kind : {ModelKind::mlp, ModelKind::forest, ModelKind::lookup}) {
    const auto m = train(d, t, quick(kind));
    for (const auto& p : d.points) {
      const auto x = predict(m, p.y);
      CHECK(x[0] >= 0.0);
      CHECK(x[0] <= 1.0);
    }
  }
  auto mlp = train(d, t, quick(ModelKind::mlp));
  mlp.mlp.layers().back().bias(0) = 1e6f;
  CHECK(predict(mlp, MetricVector{1, 1}) == ParameterVector{1.0});
  mlp.mlp.layers().back().bias(0) = -1e6f;
  CHECK(predict(mlp, MetricVector{1, 1}) == ParameterVector{0.0});

  auto exact = quick(ModelKind::forest);
  exact.forest.bootstrap = false;
  auto forest = train(d, t, exact);
  CHECK(predict(forest, MetricVector{1, 1}) == ParameterVector{1.0});

  const auto cs = find_topology("cs");
  std::mt19937_64 g(6);
  const auto m = train(every_nth(cs_d0(), 4), cs, quick(ModelKind::mlp));
  for (int trial = 0; trial < 500; ++trial) {
    MetricVector q{std::exp(std::uniform_real_distribution<double>(10, 30)(g)),
                   std::uniform_real_distribution<double>(-50, 50)(g),
                   std::exp(std::uniform_real_distribution<double>(-15, 0)(g))};
    REQUIRE(cs.in_box(predict(m, q)));
  }
}
