// cktdesign: command-line front end for dataset generation, filtering,
// training, evaluation and the design service.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cktdesign/dataset_io.hpp"
#include "cktdesign/eval.hpp"
#include "cktdesign/filter.hpp"
#include "cktdesign/http.hpp"
#include "cktdesign/model.hpp"
#include "cktdesign/service.hpp"
#include "cktdesign/simulator.hpp"
#include "cktdesign/topology.hpp"

namespace fs = std::filesystem;
using namespace cktdesign;
using ordered = nlohmann::ordered_json;

namespace {

class usage_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  unsigned threads = default_threads();
  std::string config_dir;
  std::string command;  // argv without --threads

  fs::path configs() const { return config_dir.empty() ? circuits_config_dir() : fs::path(config_dir); }
};

std::string recorded_command(int argc, char** argv) {
  std::string out = "cktdesign";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--threads") {
      ++i;
      continue;
    }
    if (a.starts_with("--threads=")) continue;
    out += ' ';
    out += a;
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_json(const fs::path& path, const ordered& j) { write_text(path, j.dump(2) + "\n"); }

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> parse_reals(const std::string& s, const std::string& flag) {
  std::vector<double> out;
  for (const auto& item : split_list(s, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw usage_error(flag + ": '" + item + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw usage_error(flag + ": expected a comma-separated list of numbers");
  return out;
}

/// Topology for a dataset file: --circuit when given, else the sidecar's id.
CircuitTopology topology_for(const std::string& circuit, const fs::path& data, const Common& c) {
  if (!circuit.empty()) return find_topology(circuit, c.configs());
  if (auto id = sidecar_topology(data)) return find_topology(*id, c.configs());
  throw usage_error("--circuit is required: " + data.string() + " has no sidecar naming its circuit");
}

CircuitTopology apply_order(const CircuitTopology& t, const std::string& order) {
  if (order.empty()) return t;
  return t.with_priority(split_list(order, ','));
}

// ---------------------------------------------------------------------------
// Shared option groups
// ---------------------------------------------------------------------------

struct PerturbOpts {
  double epsilon = 0.2;
  int m = 20;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--eps", epsilon, "Perturbation magnitude epsilon")->capture_default_str()->check(CLI::Range(0.0, 0.999999));
    app->add_option("--m", m, "Perturbed queries per point")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
  }
  PerturbationConfig config() const { return {.epsilon = epsilon, .seed = seed, .replicates = m}; }
};

struct ModelOpts {
  std::string kind = "mlp";
  std::optional<int> epochs;
  std::optional<int> trees;

  void add(CLI::App* app) {
    app->add_option("--model", kind, "Model kind")->capture_default_str()->check(CLI::IsMember({"mlp", "forest", "lookup"}));
    app->add_option("--epochs", epochs, "MLP training epochs (default 100)")->check(CLI::NonNegativeNumber);
    app->add_option("--trees", trees, "Forest size (default 100)")->check(CLI::PositiveNumber);
  }
  TrainConfig config(std::uint64_t seed) const {
    TrainConfig c;
    c.kind = model_kind_from_string(kind);
    c.seed = seed;
    if (epochs) c.mlp.epochs = *epochs;
    if (trees) c.forest.trees = *trees;
    return c;
  }
};

/// D0 from --data when given, otherwise simulated from the circuit's grid.
struct SourceOpts {
  std::string circuit;
  std::string data;
  std::string order;

  void add(CLI::App* app, bool circuit_required = true) {
    auto* opt = app->add_option("--circuit", circuit, "Circuit id");
    if (circuit_required) opt->required();
    app->add_option("--data", data, "D0 CSV (default: simulate the grid)")->check(CLI::ExistingFile);
    app->add_option("--order", order, "Metric priority order, comma-separated");
  }
  std::pair<CircuitTopology, Dataset> load(const Common& c) const {
    auto t = apply_order(find_topology(circuit, c.configs()), order);
    Dataset d0 = data.empty() ? simulate_grid(t, c.threads) : read_dataset(data, t);
    if (d0.provenance != Provenance::D0)
      throw usage_error("--data must be a D0 dataset, got " + std::string(to_string(d0.provenance)));
    return {std::move(t), std::move(d0)};
  }
};

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct GenCmd {
  std::string circuit, backend, out;

  void add(CLI::App& root, const Common& c) {
    auto* app = root.add_subcommand("gen", "Simulate the full parameter grid (D0)");
    app->add_option("--circuit", circuit, "Circuit id")->required();
    app->add_option("--backend", backend, "Expected backend")->check(CLI::IsMember({"surrogate", "spice"}));
    app->add_option("--out", out, "Output CSV")->required();
    app->callback([this, &c] { run(c); });
  }
  void run(const Common& c) const {
    const auto t = find_topology(circuit, c.configs());
    const auto kind = t.backend.kind == BackendSpec::Kind::spice ? "spice" : "surrogate";
    if (!backend.empty() && backend != kind)
      throw usage_error("--backend: circuit '" + circuit + "' is configured with the " + kind + " backend");
    auto d0 = simulate_grid(t, c.threads);
    d0.meta.command = c.command;
    write_dataset(out, d0, t);
    std::cout << "wrote " << d0.size() << " points to " << out;
    if (!d0.meta.skipped.empty()) std::cout << " (" << d0.meta.skipped.size() << " grid points failed to simulate)";
    std::cout << "\n";
  }
};

struct FilterCmd {
  std::string method, in, out, circuit, order;
  PerturbOpts p;

  void add(CLI::App& root, const Common& c) {
    auto* app = root.add_subcommand("filter", "Build a training dataset from D0");
    app->add_option("--method", method, "d0, deps, dstar-0, dstar-eps, dm-eps or dbar-m-eps")->required();
    app->add_option("--in", in, "Input D0 CSV")->required()->check(CLI::ExistingFile);
    app->add_option("--out", out, "Output CSV")->required();
    app->add_option("--circuit", circuit, "Circuit id (default: from the input sidecar)");
    app->add_option("--order", order, "Metric priority order, comma-separated");
    p.add(app);
    app->callback([this, &c] { run(c); });
  }
  void run(const Common& c) const {
    const auto m = provenance_from_string(method);
    const auto t = apply_order(topology_for(circuit, in, c), order);
    const auto d0 = read_dataset(in, t);
    if (d0.provenance != Provenance::D0)
      throw usage_error("--in must be a D0 dataset, got " + std::string(to_string(d0.provenance)));
    auto d = build_dataset(m, d0, t, p.config(), c.threads);
    d.meta.command = c.command;
    write_dataset(out, d, t);
    std::cout << "wrote " << d.size() << " " << method << " points to " << out << "\n";
  }
};

struct TrainCmd {
  std::string data, out, circuit;
  std::uint64_t seed = 0;
  ModelOpts model;

  void add(CLI::App& root, const Common& c) {
    auto* app = root.add_subcommand("train", "Train an agent on a dataset");
    app->add_option("--data", data, "Training CSV")->required()->check(CLI::ExistingFile);
    app->add_option("--out", out, "Output model artifact")->required();
    app->add_option("--circuit", circuit, "Circuit id (default: from the data sidecar)");
    app->add_option("--seed", seed, "Training seed")->capture_default_str();
    model.add(app);
    app->callback([this, &c] { run(c); });
  }
  void run(const Common& c) const {
    const auto t = topology_for(circuit, data, c);
    auto d = read_dataset(data, t);
    auto m = train(d, t, model.config(seed));
    m.metadata["command"] = c.command;
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    save_model(out, m);
    std::cout << "trained " << model.kind << " on " << d.size() << " points, wrote " << out << "\n";
  }
};

struct ProtocolOpts {
  std::string mode = "threshold";
  std::string protocol = "kfold10";
  std::string margins;
  int reps = 10;

  void add(CLI::App* app) {
    app->add_option("--mode", mode, "exact or threshold")->capture_default_str()->check(CLI::IsMember({"exact", "threshold"}));
    app->add_option("--protocol", protocol, "kfold<N> or fraction<F>")->capture_default_str();
    app->add_option("--margins", margins, "Comma-separated margins (default 0 to 0.1 step 0.005)");
    app->add_option("--reps", reps, "Repetitions")->capture_default_str()->check(CLI::PositiveNumber);
  }
  EvalProtocol build(std::uint64_t seed) const {
    EvalProtocol p;
    p.mode = eval_mode_from_string(mode);
    p.seed = seed;
    p.repetitions = reps;
    if (!margins.empty()) p.margins = parse_reals(margins, "--margins");
    if (protocol.starts_with("kfold")) {
      const auto rest = protocol.substr(5);
      if (rest.empty() || rest.find_first_not_of("0123456789") != std::string::npos)
        throw usage_error("--protocol: expected kfold<N>, got '" + protocol + "'");
      p.folds = std::stoi(rest);
    } else if (protocol.starts_with("fraction")) {
      p.fraction = parse_reals(protocol.substr(8), "--protocol").front();
    } else {
      throw usage_error("--protocol: expected kfold<N> or fraction<F>, got '" + protocol + "'");
    }
    p.validate();
    return p;
  }
};

struct EvalCmd {
  SourceOpts src;
  std::string method = "dstar-eps", out, csv;
  PerturbOpts p;
  ModelOpts model;
  ProtocolOpts proto;

  void add(CLI::App& root, const Common& c) {
    auto* app = root.add_subcommand("eval", "Cross-validate an agent on a circuit");
    src.add(app);
    app->add_option("--method", method, "Training dataset construction")->capture_default_str();
    app->add_option("--out", out, "Output report JSON")->required();
    app->add_option("--csv", csv, "Also write the success curve as CSV");
    p.add(app);
    model.add(app);
    proto.add(app);
    app->callback([this, &c] { run(c); });
  }
  void run(const Common& c) const {
    EvalSetup s;
    s.method = provenance_from_string(method);
    s.train = model.config(0);
    s.perturbation = p.config();
    s.protocol = proto.build(p.seed);
    s.threads = c.threads;
    const auto [t, d0] = src.load(c);
    auto rep = kfold_eval(d0, t, s);
    rep.command = c.command;
    write_json(out, report_to_json(rep));
    if (!csv.empty()) write_text(csv, report_curve_csv(rep));
    std::cout << t.id << " " << method << " " << model.kind << ": success at margin "
              << format_real(rep.protocol.margins.back()) << " = " << format_real(rep.success_mean.back())
              << " +/- " << format_real(rep.success_sem.back()) << "\n";
  }
};

struct SweepCmd {
  SourceOpts src;
  std::string method = "dstar-eps", out, fractions = "0.05,0.1,0.2,0.5,0.9", margins, mode = "threshold";
  std::optional<int> reps;
  PerturbOpts p;
  ModelOpts model;

  void add(CLI::App& root, const Common& c) {
    auto* app = root.add_subcommand("sweep", "Success curves over training-set fractions");
    src.add(app);
    app->add_option("--method", method, "Training dataset construction")->capture_default_str();
    app->add_option("--fractions", fractions, "Training fractions")->capture_default_str();
    app->add_option("--margins", margins, "Comma-separated margins");
    app->add_option("--mode", mode, "exact or threshold")->capture_default_str()->check(CLI::IsMember({"exact", "threshold"}));
    app->add_option("--reps", reps, "Runs per fraction (default: one full rotation)")->check(CLI::PositiveNumber);
    app->add_option("--out", out, "Output JSON")->required();
    p.add(app);
    model.add(app);
    app->callback([this, &c] { run(c); });
  }
  void run(const Common& c) const {
    EvalSetup s;
    s.method = provenance_from_string(method);
    s.train = model.config(0);
    s.perturbation = p.config();
    s.protocol.mode = eval_mode_from_string(mode);
    s.protocol.seed = p.seed;
    if (!margins.empty()) s.protocol.margins = parse_reals(margins, "--margins");
    s.threads = c.threads;
    const auto fr = parse_reals(fractions, "--fractions");
    for (double f : fr) {
      EvalProtocol check = s.protocol;
      check.fraction = f;
      check.validate();
    }
    const auto [t, d0] = src.load(c);
    const auto reports = datasize_sweep(d0, t, s, fr, reps);
    ordered j;
    j["circuit"] = t.id;
    j["method"] = method;
    j["model"] = model.kind;
    j["fractions"] = fr;
    j["reports"] = ordered::array();
    for (auto r : reports) {
      r.command = c.command;
      j["reports"].push_back(report_to_json(r));
    }
    j["command"] = c.command;
    write_json(out, j);
    for (std::size_t i = 0; i < fr.size(); ++i)
      std::cout << "fraction " << format_real(fr[i]) << ": success at margin "
                << format_real(reports[i].protocol.margins.back()) << " = "
                << format_real(reports[i].success_mean.back()) << "\n";
  }
};

struct ClusterCmd {
  SourceOpts src;
  std::string methods = "dstar-0,dstar-eps,dm-eps,dbar-m-eps", out;
  PerturbOpts p;

  void add(CLI::App& root, const Common& c) {
    auto* app = root.add_subcommand("cluster", "Distinct targets and perplexity per dataset construction");
    src.add(app);
    app->add_option("--methods", methods, "Dataset constructions")->capture_default_str();
    app->add_option("--out", out, "Output JSON")->required();
    p.add(app);
    app->callback([this, &c] { run(c); });
  }
  void run(const Common& c) const {
    std::vector<Provenance> ms;
    for (const auto& m : split_list(methods, ',')) ms.push_back(provenance_from_string(m));
    const auto [t, d0] = src.load(c);
    ordered j;
    j["circuit"] = t.id;
    j["metric_order"] = t.priority_order();
    j["d0_size"] = d0.size();
    j["epsilon"] = p.epsilon;
    j["m"] = p.m;
    j["seed"] = p.seed;
    j["datasets"] = ordered::array();
    for (auto m : ms) {
      const auto d = build_dataset(m, d0, t, p.config(), c.threads);
      const auto s = clustering_stats(d);
      j["datasets"].push_back({{"method", std::string(to_string(m))},
                               {"size", d.size()},
                               {"distinct_targets", s.distinct},
                               {"entropy_bits", s.entropy_bits},
                               {"perplexity", s.perplexity}});
      std::cout << to_string(m) << ": " << s.distinct << " distinct of " << d.size()
                << ", perplexity " << format_real(s.perplexity) << "\n";
    }
    j["command"] = c.command;
    write_json(out, j);
  }
};

struct OrderCmd {
  SourceOpts src;
  std::string orders, out, margins;
  PerturbOpts p;
  ModelOpts model;

  void add(CLI::App& root, const Common& c) {
    auto* app = root.add_subcommand("order", "Compare metric priority orders");
    src.add(app);
    app->add_option("--orders", orders,
                    "Priority orders separated by ';', metrics by ',' (default: configured order and its reverse)");
    app->add_option("--margins", margins, "Comma-separated margins");
    app->add_option("--out", out, "Output JSON")->required();
    p.add(app);
    model.add(app);
    app->callback([this, &c] { run(c); });
  }
  void run(const Common& c) const {
    if (!src.order.empty()) throw usage_error("--order does not apply to 'order'; use --orders");
    EvalSetup s;
    s.train = model.config(0);
    s.perturbation = p.config();
    s.protocol.seed = p.seed;
    if (!margins.empty()) s.protocol.margins = parse_reals(margins, "--margins");
    s.threads = c.threads;
    const auto [t, d0] = src.load(c);
    std::vector<std::vector<std::string>> os;
    if (orders.empty()) {
      os.push_back(t.priority_order());
      os.emplace_back(os.front().rbegin(), os.front().rend());
    } else {
      for (const auto& o : split_list(orders, ';')) os.push_back(split_list(o, ','));
    }
    auto rep = ordering_study(d0, t, os, s);
    rep.command = c.command;
    write_json(out, ordering_to_json(rep, t, s.protocol.margins));
    for (const auto& cmp : rep.comparisons)
      std::cout << cmp.metric << " first vs order " << cmp.b << ": "
                << (cmp.prioritized_weakly_better ? "weakly better" : "worse") << "\n";
  }
};

httplib::Server* g_server = nullptr;

struct ServeCmd {
  std::string model_dir = "models", host = "127.0.0.1";
  int port = 8080;

  void add(CLI::App& root, const Common& c) {
    auto* app = root.add_subcommand("serve", "Run the HTTP design service");
    app->add_option("--model-dir", model_dir, "Directory of *.bin artifacts")->capture_default_str();
    app->add_option("--port", port, "Listen port")->capture_default_str()->check(CLI::Range(1, 65535));
    app->add_option("--host", host, "Listen address")->capture_default_str();
    app->callback([this, &c] { run(c); });
  }
  void run(const Common& c) const {
    const DesignService service(model_dir, c.configs());
    httplib::Server server;
    server.new_task_queue = [n = c.threads] { return new httplib::ThreadPool(std::max(2u, n)); };
    bind_routes(server, service);
    g_server = &server;
    std::signal(SIGINT, [](int) {
      if (g_server) g_server->stop();
    });
    std::signal(SIGTERM, [](int) {
      if (g_server) g_server->stop();
    });
    if (!server.bind_to_port(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
    std::cout << "serving on http://" << host << ":" << port << "\n" << std::flush;
    server.listen_after_bind();
    g_server = nullptr;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Threshold-driven analog circuit design: datasets, agents and evaluation", "cktdesign");
  app.require_subcommand(1);
  Common common;
  common.command = recorded_command(argc, argv);
  app.add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--config-dir", common.config_dir, "Circuit config directory (default: $CIRCUITS_CONFIG_DIR)");

  GenCmd gen;
  FilterCmd filter;
  TrainCmd train_cmd;
  EvalCmd eval;
  SweepCmd sweep;
  ClusterCmd cluster;
  OrderCmd order;
  ServeCmd serve;
  gen.add(app, common);
  filter.add(app, common);
  train_cmd.add(app, common);
  eval.add(app, common);
  sweep.add(app, common);
  cluster.add(app, common);
  order.add(app, common);
  serve.add(app, common);
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}
