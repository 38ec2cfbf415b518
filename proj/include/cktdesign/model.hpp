#pragma once

// Inverse models g: Y -> X behind one train/predict interface, and the model
// artifact file.
//
// Artifact layout (all integers and reals little-endian):
//   bytes 0..7    magic "CKTMODEL"
//   u32           format version (1)
//   u64  H, H bytes   UTF-8 JSON header: kind, topology_id, metric names,
//                     parameter bounds, normalization stats, training config,
//                     metadata, and the body layout
//   u64  B, B bytes   body
// Body by kind:
//   mlp     per layer: weight (out x in, row-major f32), bias (out f32);
//           layer widths are header.layout.sizes
//   forest  per output parameter, per tree: u32 node count, then per node
//           i32 feature, f64 threshold, i32 left, i32 right, f64 value
//   lookup  u64 count, then per pair: i64 source index, n f64 parameters,
//           k f64 metrics

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "filter.hpp"
#include "forest.hpp"
#include "mlp.hpp"

namespace cktdesign {

class model_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelKind { mlp, forest, lookup };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::mlp: return "mlp";
    case ModelKind::forest: return "forest";
    case ModelKind::lookup: return "lookup";
  }
  return "?";
}

inline ModelKind model_kind_from_string(std::string_view s) {
  if (s == "mlp") return ModelKind::mlp;
  if (s == "forest") return ModelKind::forest;
  if (s == "lookup") return ModelKind::lookup;
  throw contract_violation("unknown model kind '" + std::string(s) + "'");
}

struct TrainConfig {
  ModelKind kind = ModelKind::mlp;
  std::uint64_t seed = 0;
  MlpConfig mlp;
  ForestConfig forest;
};

struct ParameterBound {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const ParameterBound&, const ParameterBound&) = default;
};

struct ModelArtifact {
  ModelKind kind = ModelKind::mlp;
  std::string topology_id;
  std::vector<std::string> metric_names;
  std::vector<ParameterBound> bounds;
  NormalizationStats parameter_stats;
  NormalizationStats metric_stats;
  TrainConfig config;
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

  Mlp<float> mlp;
  std::vector<ForestRegressor> forest;  // one ensemble per parameter
  std::vector<DesignPoint> memory;      // lookup pairs

  std::size_t n() const noexcept { return bounds.size(); }
  std::size_t k() const noexcept { return metric_names.size(); }
};

inline nlohmann::ordered_json config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(c.kind));
  j["seed"] = c.seed;
  j["mlp"] = {{"hidden", c.mlp.hidden},
              {"epochs", c.mlp.epochs},
              {"learning_rate", c.mlp.learning_rate},
              {"beta1", c.mlp.beta1},
              {"beta2", c.mlp.beta2},
              {"adam_epsilon", c.mlp.adam_epsilon},
              {"batch_size", c.mlp.batch_size},
              {"loss", "mean absolute error (mean over batch and outputs)"},
              {"init", "uniform fan-in U(-1/sqrt(in), 1/sqrt(in))"},
              {"shuffle", "seeded per-epoch permutation"}};
  j["forest"] = {{"trees", c.forest.trees},
                 {"bootstrap", c.forest.bootstrap},
                 {"min_samples_split", c.forest.min_samples_split},
                 {"multi_output", "one ensemble per parameter"}};
  return j;
}

inline TrainConfig config_from_json(const nlohmann::ordered_json& j) {
  TrainConfig c;
  c.kind = model_kind_from_string(j.at("kind").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& m = j.at("mlp");
  c.mlp.hidden = m.at("hidden").get<std::vector<int>>();
  c.mlp.epochs = m.at("epochs").get<int>();
  c.mlp.learning_rate = m.at("learning_rate").get<double>();
  c.mlp.beta1 = m.at("beta1").get<double>();
  c.mlp.beta2 = m.at("beta2").get<double>();
  c.mlp.adam_epsilon = m.at("adam_epsilon").get<double>();
  c.mlp.batch_size = m.at("batch_size").get<int>();
  const auto& f = j.at("forest");
  c.forest.trees = f.at("trees").get<int>();
  c.forest.bootstrap = f.at("bootstrap").get<bool>();
  c.forest.min_samples_split = f.at("min_samples_split").get<int>();
  return c;
}

namespace detail {

inline std::vector<double> normalized_rows(const Dataset& d, const NormalizationStats& s, bool metrics) {
  const auto width = s.size();
  std::vector<double> out(d.size() * width);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& v = metrics ? d.points[i].y.values : d.points[i].x.values;
    for (std::size_t f = 0; f < width; ++f) out[i * width + f] = s.apply(f, v[f]);
  }
  return out;
}

inline void check_query(const ModelArtifact& m, const MetricVector& q) {
  if (q.size() != m.k())
    throw contract_violation("query has " + std::to_string(q.size()) + " metrics, model '" +
                             m.topology_id + "' expects " + std::to_string(m.k()));
}

inline ParameterVector clamp_to_bounds(const ModelArtifact& m, std::vector<double> x) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i])) x[i] = m.bounds[i].lo;
    x[i] = std::clamp(x[i], m.bounds[i].lo, m.bounds[i].hi);
  }
  return ParameterVector(std::move(x));
}

/// Memorized pair minimizing the mean relative metric error to the query.
inline std::size_t lookup_nearest(const ModelArtifact& m, const MetricVector& q) {
  for (double v : q)
    if (!(v > 0.0)) throw contract_violation("lookup queries must be strictly positive");
  std::size_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m.memory.size(); ++j) {
    const auto& y = m.memory[j].y;
    double err = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) err += std::abs(q[i] - y[i]) / q[i];
    err /= static_cast<double>(q.size());
    if (err < best_err) {
      best_err = err;
      best = j;
    }
  }
  return best;
}

}  // namespace detail

inline ModelArtifact train(const Dataset& d, const CircuitTopology& t, const TrainConfig& cfg) {
  if (d.empty()) throw contract_violation("cannot train on an empty dataset");
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.points[i].x.size() != t.n() || d.points[i].y.size() != t.k())
      throw contract_violation("dataset point " + std::to_string(i) + " does not match topology '" +
                               t.id + "' (n=" + std::to_string(t.n()) + ", k=" +
                               std::to_string(t.k()) + ")");

  ModelArtifact m;
  m.kind = cfg.kind;
  m.topology_id = t.id;
  for (const auto& s : t.metrics) m.metric_names.push_back(s.name);
  for (const auto& p : t.parameters) m.bounds.push_back({p.name, p.start, p.end});
  m.parameter_stats = fit_normalizer(d, Side::parameters);
  m.metric_stats = fit_normalizer(d, Side::metrics);
  m.config = cfg;
  m.metadata["dataset"] = {{"provenance", std::string(to_string(d.provenance))},
                           {"size", d.size()}};
  if (d.meta.seed) m.metadata["dataset"]["seed"] = *d.meta.seed;
  if (d.meta.epsilon) m.metadata["dataset"]["epsilon"] = *d.meta.epsilon;
  if (d.meta.replicates) m.metadata["dataset"]["m"] = *d.meta.replicates;

  switch (cfg.kind) {
    case ModelKind::mlp: {
      std::vector<int> sizes{static_cast<int>(t.k())};
      sizes.insert(sizes.end(), cfg.mlp.hidden.begin(), cfg.mlp.hidden.end());
      sizes.push_back(static_cast<int>(t.n()));
      m.mlp = Mlp<float>(sizes);
      Rng init(derive_seed(cfg.seed, {0}));
      m.mlp.init_uniform(init);
      const auto in = detail::normalized_rows(d, m.metric_stats, true);
      const auto out = detail::normalized_rows(d, m.parameter_stats, false);
      Mlp<float>::Matrix X(t.k(), d.size()), Y(t.n(), d.size());
      for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t f = 0; f < t.k(); ++f) X(f, i) = static_cast<float>(in[i * t.k() + f]);
        for (std::size_t f = 0; f < t.n(); ++f) Y(f, i) = static_cast<float>(out[i * t.n() + f]);
      }
      const auto history = train_mlp(m.mlp, X, Y, cfg.mlp, derive_seed(cfg.seed, {1}));
      if (!history.empty()) m.metadata["final_train_loss"] = history.back();
      break;
    }
    case ModelKind::forest: {
      cfg.forest.validate();
      const auto in = detail::normalized_rows(d, m.metric_stats, true);
      const FeatureMatrix X{in, d.size(), t.k()};
      m.forest.resize(t.n());
      std::vector<double> target(d.size());
      for (std::size_t p = 0; p < t.n(); ++p) {
        for (std::size_t i = 0; i < d.size(); ++i) target[i] = d.points[i].x[p];
        m.forest[p].fit(X, target, cfg.forest, derive_seed(cfg.seed, {2, p}));
      }
      break;
    }
    case ModelKind::lookup:
      m.memory = d.points;
      break;
  }
  return m;
}

inline ParameterVector predict(const ModelArtifact& m, const MetricVector& q) {
  detail::check_query(m, q);
  switch (m.kind) {
    case ModelKind::mlp: {
      Mlp<float>::Matrix in(m.k(), 1);
      for (std::size_t f = 0; f < m.k(); ++f) in(f, 0) = static_cast<float>(m.metric_stats.apply(f, q[f]));
      const auto out = m.mlp.forward(in);
      std::vector<double> x(m.n());
      for (std::size_t p = 0; p < m.n(); ++p) x[p] = m.parameter_stats.invert(p, static_cast<double>(out(p, 0)));
      return detail::clamp_to_bounds(m, std::move(x));
    }
    case ModelKind::forest: {
      const auto in = m.metric_stats.apply(q.view());
      std::vector<double> x(m.n());
      for (std::size_t p = 0; p < m.n(); ++p) x[p] = m.forest[p].predict(in);
      return detail::clamp_to_bounds(m, std::move(x));
    }
    case ModelKind::lookup:
      if (m.memory.empty()) throw model_error("lookup model has no memorized pairs");
      return detail::clamp_to_bounds(m, m.memory[detail::lookup_nearest(m, q)].x.values);
  }
  throw model_error("unknown model kind");
}

inline std::vector<ParameterVector> predict_batch(const ModelArtifact& m,
                                                  std::span<const MetricVector> queries) {
  std::vector<ParameterVector> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(predict(m, q));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr char kModelMagic[8] = {'C', 'K', 'T', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    const auto bits = std::bit_cast<U>(v);
    for (std::size_t b = 0; b < sizeof(T); ++b) bytes_.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
  void raw(std::string_view s) { bytes_.append(s); }
  const std::string& bytes() const noexcept { return bytes_; }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  template <class T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(T));
    U bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b)
      bits |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const noexcept { return pos_ == data_.size(); }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw model_error("corrupt model artifact: truncated data");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline nlohmann::ordered_json stats_json(const NormalizationStats& s) {
  return {{"min", s.min}, {"max", s.max}};
}

}  // namespace detail

inline std::string serialize_model(const ModelArtifact& m) {
  nlohmann::ordered_json h;
  h["format"] = "cktdesign-model";
  h["kind"] = std::string(to_string(m.kind));
  h["topology_id"] = m.topology_id;
  h["metrics"] = m.metric_names;
  h["parameters"] = nlohmann::ordered_json::array();
  for (const auto& b : m.bounds) h["parameters"].push_back({{"name", b.name}, {"lo", b.lo}, {"hi", b.hi}});
  h["normalization"] = {{"parameters", detail::stats_json(m.parameter_stats)},
                        {"metrics", detail::stats_json(m.metric_stats)}};
  h["config"] = config_to_json(m.config);
  h["metadata"] = m.metadata;

  detail::ByteWriter body;
  switch (m.kind) {
    case ModelKind::mlp:
      h["layout"] = {{"sizes", m.mlp.sizes()}};
      for (const auto& layer : m.mlp.layers()) {
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
          for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) body.put<float>(layer.weight(r, c));
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) body.put<float>(layer.bias(r));
      }
      break;
    case ModelKind::forest: {
      std::vector<std::size_t> trees;
      for (const auto& f : m.forest) trees.push_back(f.trees().size());
      h["layout"] = {{"trees_per_output", trees}};
      for (const auto& f : m.forest)
        for (const auto& t : f.trees()) {
          body.put<std::uint32_t>(static_cast<std::uint32_t>(t.nodes().size()));
          for (const auto& n : t.nodes()) {
            body.put<std::int32_t>(n.feature);
            body.put<double>(n.threshold);
            body.put<std::int32_t>(n.left);
            body.put<std::int32_t>(n.right);
            body.put<double>(n.value);
          }
        }
      break;
    }
    case ModelKind::lookup:
      h["layout"] = {{"pairs", m.memory.size()}};
      body.put<std::uint64_t>(m.memory.size());
      for (const auto& p : m.memory) {
        body.put<std::int64_t>(p.source_index);
        for (double v : p.x) body.put<double>(v);
        for (double v : p.y) body.put<double>(v);
      }
      break;
  }

  const auto header = h.dump();
  detail::ByteWriter out;
  out.raw(std::string_view(kModelMagic, sizeof kModelMagic));
  out.put<std::uint32_t>(kModelFormatVersion);
  out.put<std::uint64_t>(header.size());
  out.raw(header);
  out.put<std::uint64_t>(body.bytes().size());
  out.raw(body.bytes());
  return out.bytes();
}

inline ModelArtifact deserialize_model(std::string_view data) {
  detail::ByteReader in(data);
  if (data.size() < sizeof kModelMagic || in.raw(sizeof kModelMagic) != std::string_view(kModelMagic, 8))
    throw model_error("not a model artifact (bad magic)");
  const auto version = in.get<std::uint32_t>();
  if (version != kModelFormatVersion)
    throw model_error("unsupported model format version " + std::to_string(version));
  const auto header_len = in.get<std::uint64_t>();
  if (header_len > in.remaining()) throw model_error("corrupt model artifact: header length");
  nlohmann::ordered_json h;
  try {
    h = nlohmann::ordered_json::parse(in.raw(header_len));
  } catch (const nlohmann::ordered_json::exception& e) {
    throw model_error(std::string("corrupt model artifact header: ") + e.what());
  }
  const auto body_len = in.get<std::uint64_t>();
  if (body_len != in.remaining()) throw model_error("corrupt model artifact: body length");
  detail::ByteReader body(in.raw(body_len));

  ModelArtifact m;
  try {
    m.kind = model_kind_from_string(h.at("kind").get<std::string>());
    m.topology_id = h.at("topology_id").get<std::string>();
    m.metric_names = h.at("metrics").get<std::vector<std::string>>();
    for (const auto& p : h.at("parameters"))
      m.bounds.push_back({p.at("name").get<std::string>(), p.at("lo").get<double>(), p.at("hi").get<double>()});
    const auto& norm = h.at("normalization");
    m.parameter_stats = {norm.at("parameters").at("min").get<std::vector<double>>(),
                         norm.at("parameters").at("max").get<std::vector<double>>()};
    m.metric_stats = {norm.at("metrics").at("min").get<std::vector<double>>(),
                      norm.at("metrics").at("max").get<std::vector<double>>()};
    m.config = config_from_json(h.at("config"));
    m.metadata = h.at("metadata");

    if (m.parameter_stats.max.size() != m.n() || m.parameter_stats.min.size() != m.n() ||
        m.metric_stats.min.size() != m.k() || m.metric_stats.max.size() != m.k())
      throw model_error("corrupt model artifact: normalization dimensions");

    switch (m.kind) {
      case ModelKind::mlp: {
        const auto sizes = h.at("layout").at("sizes").get<std::vector<int>>();
        if (sizes.size() < 2 || sizes.front() != static_cast<int>(m.k()) ||
            sizes.back() != static_cast<int>(m.n()))
          throw model_error("corrupt model artifact: layer sizes do not match the topology");
        m.mlp = Mlp<float>(sizes);
        for (auto& layer : m.mlp.layers()) {
          for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = body.get<float>();
          for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = body.get<float>();
        }
        break;
      }
      case ModelKind::forest: {
        const auto trees = h.at("layout").at("trees_per_output").get<std::vector<std::size_t>>();
        if (trees.size() != m.n()) throw model_error("corrupt model artifact: forest output count");
        for (auto count : trees) {
          std::vector<RegressionTree> ensemble;
          for (std::size_t t = 0; t < count; ++t) {
            const auto nodes = body.get<std::uint32_t>();
            if (static_cast<std::size_t>(nodes) * 28 > body.remaining())
              throw model_error("corrupt model artifact: truncated tree");
            std::vector<TreeNode> v(nodes);
            for (auto& n : v) {
              n.feature = body.get<std::int32_t>();
              n.threshold = body.get<double>();
              n.left = body.get<std::int32_t>();
              n.right = body.get<std::int32_t>();
              n.value = body.get<double>();
            }
            RegressionTree tree(std::move(v));
            tree.check(m.k());
            ensemble.push_back(std::move(tree));
          }
          m.forest.emplace_back(std::move(ensemble));
        }
        break;
      }
      case ModelKind::lookup: {
        const auto count = body.get<std::uint64_t>();
        if (count > body.remaining() / (8 * (1 + m.n() + m.k())))
          throw model_error("corrupt model artifact: truncated lookup table");
        m.memory.resize(count);
        for (auto& p : m.memory) {
          p.source_index = body.get<std::int64_t>();
          p.x.values.resize(m.n());
          p.y.values.resize(m.k());
          for (auto& v : p.x.values) v = body.get<double>();
          for (auto& v : p.y.values) v = body.get<double>();
        }
        break;
      }
    }
  } catch (const nlohmann::ordered_json::exception& e) {
    throw model_error(std::string("corrupt model artifact header: ") + e.what());
  } catch (const contract_violation& e) {
    throw model_error(std::string("corrupt model artifact: ") + e.what());
  }
  if (!body.done()) throw model_error("corrupt model artifact: trailing body bytes");
  return m;
}

inline void save_model(const std::filesystem::path& path, const ModelArtifact& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw model_error("cannot write " + path.string());
  const auto bytes = serialize_model(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw model_error("failed writing " + path.string());
}

inline ModelArtifact load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw model_error("cannot open model " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace cktdesign
