// Command-line driver: dataset generation and ingestion, training, the
// unlearning strategies, and the evaluation protocols. One experiment config
// (JSON) plus flag overrides; every artifact lands in the output directory.
//
// Exit codes: 0 success, 1 usage/config, 2 divergence, 3 incompatibility,
// 4 empty remaining set, 5 I/O.

#include "gul/eval.hpp"
#include "gul/io.hpp"
#include "gul/unlearn.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <iterator>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gul;

// ---------------------------------------------------------------------------
// Config schema. Validation errors name the offending field.
// ---------------------------------------------------------------------------

struct FileSource {
  std::string edges;
  std::string features;
  std::string labels;
  double train_fraction = 0.8;
};

struct CsbmSource {
  graph::NodeId n = 0;
  Eigen::Index d = 4;
  double p = 0.0;
  double q = 0.0;
  double separation = 1.5;
  double noise_std = 0.5;
  double train_fraction = 0.8;
};

struct DegreeRankSpec {
  bool largest = true;
  double fraction = 0.0;
};

/// Exactly one scheme: uniform draw from the training set, a literal id
/// list, or the top/bottom degree slice of the training set.
struct DeleteSpec {
  std::optional<double> random_fraction;
  std::optional<std::vector<graph::NodeId>> explicit_ids;
  std::optional<DegreeRankSpec> degree_rank;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::optional<FileSource> files;
  std::optional<CsbmSource> csbm;
  // propagation
  graph::PropagationMode mode = graph::PropagationMode::row;
  int hops = 2;
  bool self_loops = false;
  bool multi_hop = false;
  // model
  model::LossKind loss_kind = model::LossKind::logistic;
  double lambda = 1e-4;
  double eta = 0.1;
  int epochs = 100;
  Eigen::Index batch_size = 0;
  // unlearn
  unlearn::Strategy strategy = unlearn::Strategy::projector;
  std::optional<DeleteSpec> delete_spec;
  double noise_std = 0.0;
  int finetune_k = 0;
  double ridge_eps = -1.0;
  bool corrected = false;
  // inject
  std::optional<bool> inject_binary;
  std::vector<unlearn::Strategy> inject_strategies;  // empty selects the default set
  // sweep
  bool has_sweep = false;
  std::vector<double> sweep_ratios;
  std::vector<std::uint64_t> sweep_seeds;
  std::vector<unlearn::Strategy> sweep_strategies;
  // bound
  int bound_samples = 8;
};

std::string jpath(const std::string& scope, const char* key) {
  return scope.empty() ? std::string(key) : scope + "." + key;
}

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw UsageError("config field " + path + ": " + what);
}

const json* maybe(const json& obj, const char* key) {
  if (!obj.is_object()) return nullptr;
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double jnum(const json& obj, const char* key, const std::string& scope,
            std::optional<double> fallback = std::nullopt) {
  const json* v = maybe(obj, key);
  if (v == nullptr) {
    if (fallback) return *fallback;
    field_error(jpath(scope, key), "missing");
  }
  if (!v->is_number()) field_error(jpath(scope, key), "expected a number");
  return v->get<double>();
}

std::int64_t jint(const json& obj, const char* key, const std::string& scope,
                  std::optional<std::int64_t> fallback = std::nullopt) {
  const json* v = maybe(obj, key);
  if (v == nullptr) {
    if (fallback) return *fallback;
    field_error(jpath(scope, key), "missing");
  }
  if (!v->is_number_integer()) field_error(jpath(scope, key), "expected an integer");
  return v->get<std::int64_t>();
}

std::uint64_t juint(const json& obj, const char* key, const std::string& scope,
                    std::optional<std::uint64_t> fallback = std::nullopt) {
  const json* v = maybe(obj, key);
  if (v == nullptr) {
    if (fallback) return *fallback;
    field_error(jpath(scope, key), "missing");
  }
  if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() &&
                                  v->get<std::int64_t>() < 0))
    field_error(jpath(scope, key), "expected a non-negative integer");
  return v->get<std::uint64_t>();
}

bool jbool(const json& obj, const char* key, const std::string& scope, bool fallback) {
  const json* v = maybe(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_boolean()) field_error(jpath(scope, key), "expected a boolean");
  return v->get<bool>();
}

std::string jstr(const json& obj, const char* key, const std::string& scope,
                 std::optional<std::string> fallback = std::nullopt) {
  const json* v = maybe(obj, key);
  if (v == nullptr) {
    if (fallback) return *fallback;
    field_error(jpath(scope, key), "missing");
  }
  if (!v->is_string()) field_error(jpath(scope, key), "expected a string");
  return v->get<std::string>();
}

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) field_error(path, what);
}

unlearn::Strategy parse_strategy(const std::string& name, const std::string& path) {
  try {
    return unlearn::strategy_from_name(name);
  } catch (const UsageError&) {
    field_error(path, "unknown strategy '" + name + "'");
  }
}

std::vector<unlearn::Strategy> parse_strategies(const json& arr, const std::string& path) {
  if (!arr.is_array() || arr.empty()) field_error(path, "expected a non-empty array");
  std::vector<unlearn::Strategy> out;
  out.reserve(arr.size());
  for (const auto& item : arr) {
    if (!item.is_string()) field_error(path, "expected strategy names");
    out.push_back(parse_strategy(item.get<std::string>(), path));
  }
  return out;
}

graph::PropagationMode parse_mode(const std::string& name, const std::string& path) {
  if (name == "row") return graph::PropagationMode::row;
  if (name == "symmetric" || name == "sym") return graph::PropagationMode::symmetric;
  field_error(path, "expected 'row' or 'symmetric'");
}

DeleteSpec parse_delete(const json& obj, const std::string& scope) {
  const json* random = maybe(obj, "random_fraction");
  const json* ids = maybe(obj, "explicit_ids");
  const json* rank = maybe(obj, "degree_rank");
  const int present = (random != nullptr) + (ids != nullptr) + (rank != nullptr);
  require(present == 1, scope,
          "exactly one of random_fraction, explicit_ids, degree_rank");
  DeleteSpec spec;
  if (random != nullptr) {
    const double f = jnum(obj, "random_fraction", scope);
    require(f > 0.0 && f < 1.0, jpath(scope, "random_fraction"), "must lie in (0,1)");
    spec.random_fraction = f;
  } else if (ids != nullptr) {
    require(ids->is_array(), jpath(scope, "explicit_ids"), "expected an array of node ids");
    std::vector<graph::NodeId> parsed;
    parsed.reserve(ids->size());
    for (const auto& item : *ids) {
      if (!item.is_number_integer() || item.get<std::int64_t>() < 0)
        field_error(jpath(scope, "explicit_ids"), "node ids must be non-negative integers");
      parsed.push_back(static_cast<graph::NodeId>(item.get<std::int64_t>()));
    }
    spec.explicit_ids = std::move(parsed);
  } else {
    const std::string inner = jpath(scope, "degree_rank");
    DegreeRankSpec dr;
    const std::string order = jstr(*rank, "order", inner);
    require(order == "largest" || order == "smallest", jpath(inner, "order"),
            "expected 'largest' or 'smallest'");
    dr.largest = order == "largest";
    dr.fraction = jnum(*rank, "fraction", inner);
    require(dr.fraction > 0.0 && dr.fraction < 1.0, jpath(inner, "fraction"),
            "must lie in (0,1)");
    spec.degree_rank = dr;
  }
  return spec;
}

ExperimentConfig parse_config(const json& root) {
  if (!root.is_object()) throw UsageError("config: top-level JSON object expected");
  ExperimentConfig cfg;
  cfg.seed = juint(root, "seed", "", std::uint64_t{0});
  cfg.output_dir = jstr(root, "output_dir", "", std::string("out"));

  const json* dataset = maybe(root, "dataset");
  if (dataset == nullptr) field_error("dataset", "missing");
  const json* files = maybe(*dataset, "files");
  const json* csbm = maybe(*dataset, "csbm");
  require((files != nullptr) != (csbm != nullptr), "dataset",
          "exactly one of files, csbm");
  if (files != nullptr) {
    const std::string scope = "dataset.files";
    FileSource f;
    f.edges = jstr(*files, "edges", scope);
    f.features = jstr(*files, "features", scope);
    f.labels = jstr(*files, "labels", scope);
    require(fs::exists(f.edges), jpath(scope, "edges"), "file does not exist: " + f.edges);
    require(fs::exists(f.features), jpath(scope, "features"),
            "file does not exist: " + f.features);
    require(fs::exists(f.labels), jpath(scope, "labels"), "file does not exist: " + f.labels);
    f.train_fraction = jnum(*files, "train_fraction", scope, 0.8);
    require(f.train_fraction > 0.0 && f.train_fraction <= 1.0,
            jpath(scope, "train_fraction"), "must lie in (0,1]");
    cfg.files = f;
  } else {
    const std::string scope = "dataset.csbm";
    CsbmSource c;
    c.n = static_cast<graph::NodeId>(jint(*csbm, "n", scope));
    require(c.n >= 2, jpath(scope, "n"), "must be >= 2");
    c.d = static_cast<Eigen::Index>(jint(*csbm, "d", scope, std::int64_t{4}));
    require(c.d >= 1, jpath(scope, "d"), "must be >= 1");
    c.p = jnum(*csbm, "p", scope);
    require(c.p >= 0.0 && c.p <= 1.0, jpath(scope, "p"), "must lie in [0,1]");
    c.q = jnum(*csbm, "q", scope);
    require(c.q >= 0.0 && c.q <= 1.0, jpath(scope, "q"), "must lie in [0,1]");
    c.separation = jnum(*csbm, "separation", scope, 1.5);
    require(std::isfinite(c.separation), jpath(scope, "separation"), "must be finite");
    c.noise_std = jnum(*csbm, "noise_std", scope, 0.5);
    require(c.noise_std >= 0.0, jpath(scope, "noise_std"), "must be >= 0");
    c.train_fraction = jnum(*csbm, "train_fraction", scope, 0.8);
    require(c.train_fraction > 0.0 && c.train_fraction <= 1.0,
            jpath(scope, "train_fraction"), "must lie in (0,1]");
    cfg.csbm = c;
  }

  if (const json* prop = maybe(root, "propagation")) {
    const std::string scope = "propagation";
    cfg.mode = parse_mode(jstr(*prop, "mode", scope, std::string("row")), jpath(scope, "mode"));
    cfg.hops = static_cast<int>(jint(*prop, "L", scope, std::int64_t{2}));
    require(cfg.hops >= 1, jpath(scope, "L"), "must be >= 1");
    cfg.self_loops = jbool(*prop, "self_loops", scope, false);
    cfg.multi_hop = jbool(*prop, "multi_hop", scope, false);
  }

  if (const json* m = maybe(root, "model")) {
    const std::string scope = "model";
    const std::string kind = jstr(*m, "loss_kind", scope, std::string("logistic"));
    try {
      cfg.loss_kind = model::loss_kind_from_name(kind);
    } catch (const UsageError&) {
      field_error(jpath(scope, "loss_kind"), "unknown loss kind '" + kind + "'");
    }
    cfg.lambda = jnum(*m, "lambda", scope, 1e-4);
    require(cfg.lambda >= 0.0, jpath(scope, "lambda"), "must be >= 0");
    cfg.eta = jnum(*m, "eta", scope, 0.1);
    require(cfg.eta > 0.0, jpath(scope, "eta"), "must be > 0");
    cfg.epochs = static_cast<int>(jint(*m, "T", scope, std::int64_t{100}));
    require(cfg.epochs >= 0, jpath(scope, "T"), "must be >= 0");
    cfg.batch_size = static_cast<Eigen::Index>(jint(*m, "batch_size", scope, std::int64_t{0}));
    require(cfg.batch_size >= 0, jpath(scope, "batch_size"), "must be >= 0");
  }

  if (const json* u = maybe(root, "unlearn")) {
    const std::string scope = "unlearn";
    cfg.strategy = parse_strategy(jstr(*u, "strategy", scope, std::string("projector")),
                                  jpath(scope, "strategy"));
    if (const json* del = maybe(*u, "delete")) cfg.delete_spec = parse_delete(*del, "unlearn.delete");
    cfg.noise_std = jnum(*u, "noise_std", scope, 0.0);
    require(cfg.noise_std >= 0.0, jpath(scope, "noise_std"), "must be >= 0");
    cfg.finetune_k = static_cast<int>(jint(*u, "finetune_K", scope, std::int64_t{0}));
    require(cfg.finetune_k >= 0, jpath(scope, "finetune_K"), "must be >= 0");
    cfg.ridge_eps = jnum(*u, "ridge_eps", scope, -1.0);
    cfg.corrected = jbool(*u, "corrected", scope, false);
  }

  if (const json* i = maybe(root, "inject")) {
    const std::string scope = "inject";
    if (maybe(*i, "binary_mode") != nullptr)
      cfg.inject_binary = jbool(*i, "binary_mode", scope, false);
    if (const json* arr = maybe(*i, "strategies"))
      cfg.inject_strategies = parse_strategies(*arr, jpath(scope, "strategies"));
  }

  if (const json* s = maybe(root, "sweep")) {
    const std::string scope = "sweep";
    cfg.has_sweep = true;
    const json* ratios = maybe(*s, "ratios");
    require(ratios != nullptr && ratios->is_array() && !ratios->empty(),
            jpath(scope, "ratios"), "expected a non-empty array of numbers");
    for (const auto& r : *ratios) {
      if (!r.is_number() || r.get<double>() <= 0.0 || r.get<double>() >= 1.0)
        field_error(jpath(scope, "ratios"), "ratios must lie in (0,1)");
      cfg.sweep_ratios.push_back(r.get<double>());
    }
    const json* seeds = maybe(*s, "seeds");
    require(seeds != nullptr && seeds->is_array() && !seeds->empty(), jpath(scope, "seeds"),
            "expected a non-empty array of seeds");
    for (const auto& sd : *seeds) {
      if (!sd.is_number_integer() || sd.get<std::int64_t>() < 0)
        field_error(jpath(scope, "seeds"), "seeds must be non-negative integers");
      cfg.sweep_seeds.push_back(sd.get<std::uint64_t>());
    }
    const json* strategies = maybe(*s, "strategies");
    require(strategies != nullptr, jpath(scope, "strategies"), "missing");
    cfg.sweep_strategies = parse_strategies(*strategies, jpath(scope, "strategies"));
  }

  if (const json* b = maybe(root, "bound")) {
    cfg.bound_samples = static_cast<int>(jint(*b, "samples", "bound", std::int64_t{8}));
    require(cfg.bound_samples >= 1, "bound.samples", "must be >= 1");
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Dataset assembly and deletion resolution.
// ---------------------------------------------------------------------------

graph::CsbmParams csbm_params(const CsbmSource& c, std::uint64_t root_seed) {
  graph::CsbmParams params;
  params.n = c.n;
  params.p = c.p;
  params.q = c.q;
  params.mu_plus = Vector::Constant(c.d, c.separation / 2.0);
  params.mu_minus = Vector::Constant(c.d, -c.separation / 2.0);
  params.feature_noise_scale = c.noise_std;
  params.seed = split_seed(root_seed, seed_tag::csbm);
  return params;
}

void split_train_test(Dataset& data, double fraction, std::uint64_t root_seed) {
  const graph::NodeId n = data.graph.num_nodes;
  std::vector<graph::NodeId> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  auto rng = make_rng(split_seed(root_seed, seed_tag::split));
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto train_count = std::clamp<std::int64_t>(
      static_cast<std::int64_t>(fraction * static_cast<double>(n)), 1, n);
  std::vector<graph::NodeId> train(ids.begin(), ids.begin() + train_count);
  std::vector<graph::NodeId> test(ids.begin() + train_count, ids.end());
  data.train_set = graph::NodeSet(std::move(train));
  data.test_set = graph::NodeSet(std::move(test));
}

Dataset load_dataset(const ExperimentConfig& cfg, double jitter_std) {
  Dataset data;
  double train_fraction = 1.0;
  if (cfg.csbm) {
    auto draw = graph::generate_csbm(csbm_params(*cfg.csbm, cfg.seed));
    data.graph = std::move(draw.graph);
    data.x = std::move(draw.features);
    data.labels = std::move(draw.labels);
    train_fraction = cfg.csbm->train_fraction;
  } else {
    const FileSource& f = *cfg.files;
    data.x = io::read_features(f.features);
    data.graph = graph::build_graph(static_cast<graph::NodeId>(data.x.rows()),
                                    io::read_edge_list(f.edges));
    data.labels = io::read_labels(f.labels);
    train_fraction = f.train_fraction;
  }
  data.mode = cfg.mode;
  data.hops = cfg.hops;
  data.add_self_loops = cfg.self_loops;
  split_train_test(data, train_fraction, cfg.seed);
  if (jitter_std > 0.0)
    data.x = features::add_feature_jitter(data.x, jitter_std,
                                          split_seed(cfg.seed, seed_tag::jitter));
  validate_dataset(data);
  return data;
}

std::size_t pick_count(double fraction, std::size_t pool) {
  const auto raw = static_cast<std::size_t>(fraction * static_cast<double>(pool));
  return std::max<std::size_t>(std::size_t{1}, raw);
}

const DeleteSpec& require_delete(const ExperimentConfig& cfg) {
  if (!cfg.delete_spec)
    throw UsageError("config field unlearn.delete: required by this command");
  return *cfg.delete_spec;
}

graph::NodeSet resolve_delete(const DeleteSpec& spec, const Dataset& data,
                              std::uint64_t root_seed) {
  if (spec.explicit_ids) return graph::NodeSet(*spec.explicit_ids);
  const auto& train = data.train_set.ids();
  if (spec.random_fraction) {
    std::vector<graph::NodeId> picked;
    picked.reserve(pick_count(*spec.random_fraction, train.size()));
    auto rng = make_rng(split_seed(root_seed, seed_tag::delete_pick));
    std::sample(train.begin(), train.end(), std::back_inserter(picked),
                pick_count(*spec.random_fraction, train.size()), rng);
    return graph::NodeSet(std::move(picked));
  }
  const DegreeRankSpec& dr = *spec.degree_rank;
  std::vector<graph::NodeId> order(train);
  std::sort(order.begin(), order.end(), [&](graph::NodeId a, graph::NodeId b) {
    const auto da = data.graph.degrees[static_cast<std::size_t>(a)];
    const auto db = data.graph.degrees[static_cast<std::size_t>(b)];
    if (da != db) return dr.largest ? da > db : da < db;
    return a < b;
  });
  order.resize(pick_count(dr.fraction, train.size()));
  return graph::NodeSet(std::move(order));
}

graph::NodeSet set_difference(const graph::NodeSet& a, const graph::NodeSet& b) {
  std::vector<graph::NodeId> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return graph::NodeSet(std::move(out));
}

// ---------------------------------------------------------------------------
// Shared pieces.
// ---------------------------------------------------------------------------

Matrix classifier_input(const Dataset& data, bool multi_hop) {
  if (!multi_hop) return dataset_embeddings(data);
  const auto p = graph::build_propagation(data.graph, data.mode, data.add_self_loops);
  return graph::multi_hop_features(p, data.x, data.hops);
}

model::TrainConfig train_config(const ExperimentConfig& cfg) {
  model::TrainConfig tc;
  tc.lambda = cfg.lambda;
  tc.eta = cfg.eta;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.seed = split_seed(cfg.seed, seed_tag::train);
  return tc;
}

struct Trained {
  model::ModelWeights weights;
  model::TrainTrace trace;
  Matrix h;  // classifier input for every node
};

Trained fit_model(const ExperimentConfig& cfg, const Dataset& data) {
  Trained t;
  t.h = classifier_input(data, cfg.multi_hop);
  const auto init = model::zero_model(cfg.loss_kind, t.h.cols(), data.labels);
  auto [weights, trace] = model::train(init, t.h, data.labels, data.train_set,
                                       train_config(cfg));
  t.weights = std::move(weights);
  t.trace = std::move(trace);
  return t;
}

unlearn::UnlearnRequest base_request(const ExperimentConfig& cfg,
                                     const graph::NodeSet& deleted) {
  unlearn::UnlearnRequest req;
  req.deleted = deleted;
  req.hops_L = cfg.hops;
  req.strategy = cfg.strategy;
  req.noise_std = cfg.noise_std;
  req.finetune_K = cfg.finetune_k;
  req.noise_seed = split_seed(cfg.seed, seed_tag::noise);
  req.ridge_eps = cfg.ridge_eps;
  req.corrected = cfg.corrected;
  return req;
}

fs::path ensure_out(const ExperimentConfig& cfg) {
  fs::path out(cfg.output_dir);
  fs::create_directories(out);
  return out;
}

void write_json_file(const fs::path& path, const json& j) {
  io::write_text_file(path.string(), j.dump(2) + "\n");
}

std::int64_t undirected_edge_count(const graph::Graph& g) {
  std::int64_t count = 0;
  for (graph::NodeId i = 0; i < g.num_nodes; ++i)
    for (std::int64_t k = g.row_ptr[static_cast<std::size_t>(i)];
         k < g.row_ptr[static_cast<std::size_t>(i) + 1]; ++k)
      if (g.col_idx[static_cast<std::size_t>(k)] >= i) ++count;
  return count;
}

int component_count(const graph::Graph& g) {
  std::vector<char> seen(static_cast<std::size_t>(g.num_nodes), 0);
  std::vector<graph::NodeId> stack;
  int components = 0;
  for (graph::NodeId start = 0; start < g.num_nodes; ++start) {
    if (seen[static_cast<std::size_t>(start)]) continue;
    ++components;
    seen[static_cast<std::size_t>(start)] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const graph::NodeId v = stack.back();
      stack.pop_back();
      for (std::int64_t k = g.row_ptr[static_cast<std::size_t>(v)];
           k < g.row_ptr[static_cast<std::size_t>(v) + 1]; ++k) {
        const graph::NodeId u = g.col_idx[static_cast<std::size_t>(k)];
        if (!seen[static_cast<std::size_t>(u)]) {
          seen[static_cast<std::size_t>(u)] = 1;
          stack.push_back(u);
        }
      }
    }
  }
  return components;
}

bool labels_are_binary(const std::vector<int>& labels) {
  return std::any_of(labels.begin(), labels.end(), [](int y) { return y < 0; });
}

// Max absolute residual of the weight rows against the span of the training
// input rows; written into the train trace.
double trace_span_residual(const model::ModelWeights& w, const Matrix& h,
                           const graph::NodeSet& train) {
  Matrix h_train(static_cast<Eigen::Index>(train.size()), h.cols());
  Eigen::Index r = 0;
  for (graph::NodeId id : train) h_train.row(r++) = h.row(id);
  double worst = 0.0;
  for (Eigen::Index c = 0; c < w.weights.rows(); ++c) {
    const Vector row = w.weights.row(c).transpose();
    worst = std::max(worst, features::span_residual(row, h_train));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Commands.
// ---------------------------------------------------------------------------

int cmd_generate(const ExperimentConfig& cfg) {
  if (!cfg.csbm)
    throw UsageError("config field dataset.csbm: required by the generate command");
  const auto params = csbm_params(*cfg.csbm, cfg.seed);
  const auto data = graph::generate_csbm(params);
  const fs::path out = ensure_out(cfg);
  io::write_edge_list((out / "edges.tsv").string(), data.graph);
  io::write_features_csv((out / "features.csv").string(), data.features);
  io::write_labels((out / "labels.txt").string(), data.labels);

  json manifest;
  manifest["seed"] = cfg.seed;
  manifest["generator_seed"] = params.seed;
  manifest["n"] = data.graph.num_nodes;
  manifest["d"] = cfg.csbm->d;
  manifest["p"] = cfg.csbm->p;
  manifest["q"] = cfg.csbm->q;
  manifest["num_edges"] = undirected_edge_count(data.graph);
  manifest["num_components"] = component_count(data.graph);
  write_json_file(out / "manifest.json", manifest);
  std::cout << fmt::format("wrote {} nodes, {} edges, {} components to {}\n",
                           data.graph.num_nodes, undirected_edge_count(data.graph),
                           component_count(data.graph), out.string());
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, double jitter) {
  const Dataset data = load_dataset(cfg, jitter);
  const Trained t = fit_model(cfg, data);
  const fs::path out = ensure_out(cfg);
  const std::string model_path = (out / "model.bin").string();
  io::write_model(model_path, t.weights);

  json trace;
  trace["model_path"] = model_path;
  trace["epochs"] = cfg.epochs;
  trace["initial_objective"] = t.trace.objectives.front();
  trace["final_objective"] = t.trace.objectives.back();
  trace["final_grad_norm"] = t.trace.grad_norms.empty() ? 0.0 : t.trace.grad_norms.back();
  trace["weight_norm"] = t.weights.weights.norm();
  trace["span_residual"] = trace_span_residual(t.weights, t.h, data.train_set);
  trace["elapsed_seconds"] = t.trace.seconds.empty() ? 0.0 : t.trace.seconds.back();
  write_json_file(out / "train_trace.json", trace);
  std::cout << fmt::format("trained {}: objective {:.6g} -> {:.6g}, wrote {}\n",
                           model::loss_kind_name(cfg.loss_kind),
                           t.trace.objectives.front(), t.trace.objectives.back(),
                           model_path);
  return 0;
}

int cmd_unlearn(const ExperimentConfig& cfg, double jitter, const std::string& model_flag,
                const std::string& gram_flag) {
  const Dataset data = load_dataset(cfg, jitter);
  if (cfg.multi_hop && cfg.strategy != unlearn::Strategy::projector)
    throw UsageError("config field unlearn.strategy: only projector supports multi_hop inputs");
  if (cfg.multi_hop && cfg.finetune_k > 0)
    throw UsageError("config field unlearn.finetune_K: unsupported with multi_hop inputs");
  const fs::path out = ensure_out(cfg);
  const std::string model_path =
      model_flag.empty() ? (out / "model.bin").string() : model_flag;
  const auto weights = io::read_model(model_path);

  const auto deleted = resolve_delete(require_delete(cfg), data, cfg.seed);
  auto req = base_request(cfg, deleted);

  features::GramState gram;
  const features::GramState* precomputed = nullptr;
  if (!gram_flag.empty()) {
    if (fs::exists(gram_flag)) {
      gram = io::read_gram(gram_flag);
      if (gram.dim() != data.x.cols() || gram.source_rows != data.x.rows())
        throw IncompatibilityError(fmt::format(
            "precomputed gram {} does not match the dataset ({}x{} features)",
            gram_flag, data.x.rows(), data.x.cols()));
    } else {
      gram = features::gram_precompute(data.x, true, cfg.ridge_eps);
      io::write_gram(gram_flag, gram);
    }
    precomputed = &gram;
  }

  const auto res = unlearn::run_unlearn(weights, data, req, precomputed);
  const std::string out_model = (out / "unlearned_model.bin").string();
  io::write_model(out_model, res.weights_after);
  io::write_text_file((out / "unlearn_result.json").string(),
                      io::unlearn_result_json(res, out_model));
  std::cout << fmt::format("{}: removed {} nodes in {:.3g}s, wrote {}\n",
                           unlearn::strategy_name(res.strategy), deleted.size(),
                           res.elapsed_seconds, out_model);
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, double jitter) {
  if (cfg.multi_hop)
    throw UsageError("config field propagation.multi_hop: unsupported by the eval command");
  const Dataset data = load_dataset(cfg, jitter);
  const Trained t = fit_model(cfg, data);
  const auto deleted = resolve_delete(require_delete(cfg), data, cfg.seed);

  auto retrain_req = base_request(cfg, deleted);
  retrain_req.strategy = unlearn::Strategy::retrain;
  retrain_req.noise_std = 0.0;
  const auto w_u = unlearn::run_unlearn(t.weights, data, retrain_req);
  const auto w_p = unlearn::run_unlearn(t.weights, data, base_request(cfg, deleted));

  const Matrix h_post =
      deleted.empty() ? t.h : embeddings_on(data, graph::zero_out_nodes(data.graph, deleted));
  eval::NodeSubsets subsets;
  subsets.deleted = deleted;
  subsets.remaining = set_difference(data.train_set, deleted);
  subsets.test = data.test_set;
  const auto report = eval::closeness_report(t.weights, w_p.weights_after, w_u.weights_after,
                                             h_post, subsets);

  const fs::path out = ensure_out(cfg);
  io::write_text_file((out / "closeness.json").string(), io::closeness_report_json(report));
  const std::string text = io::closeness_report_text(report);
  io::write_text_file((out / "closeness.txt").string(), text);
  std::cout << text;
  return 0;
}

int cmd_inject(const ExperimentConfig& cfg, double jitter) {
  if (cfg.multi_hop)
    throw UsageError("config field propagation.multi_hop: unsupported by the inject command");
  const Dataset data = load_dataset(cfg, jitter);
  const DeleteSpec& del = require_delete(cfg);
  if (!del.random_fraction)
    throw UsageError(
        "config field unlearn.delete.random_fraction: the inject command deletes a random "
        "fraction of the training set");

  eval::InjectionOptions options;
  options.train = train_config(cfg);
  options.binary_mode = cfg.inject_binary.value_or(labels_are_binary(data.labels));
  options.noise_std = cfg.noise_std;
  options.noise_seed = split_seed(cfg.seed, seed_tag::noise);
  const std::vector<unlearn::Strategy> strategies =
      cfg.inject_strategies.empty()
          ? std::vector<unlearn::Strategy>{unlearn::Strategy::projector,
                                           unlearn::Strategy::influence_plus,
                                           unlearn::Strategy::fisher_plus,
                                           unlearn::Strategy::retrain}
          : cfg.inject_strategies;

  const auto report = eval::feature_injection_experiment(data, *del.random_fraction,
                                                         strategies, options, cfg.seed);
  const fs::path out = ensure_out(cfg);
  io::write_text_file((out / "injection.json").string(), io::injection_report_json(report));
  const std::string text = io::injection_report_text(report);
  io::write_text_file((out / "injection.txt").string(), text);
  std::cout << text;
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, double jitter, int jobs, bool csv) {
  if (cfg.multi_hop)
    throw UsageError("config field propagation.multi_hop: unsupported by the sweep command");
  if (!cfg.has_sweep)
    throw UsageError("config field sweep: required by the sweep command");
  const Dataset data = load_dataset(cfg, jitter);
  const auto rows = eval::robustness_sweep(data, cfg.sweep_ratios, cfg.sweep_strategies,
                                           cfg.sweep_seeds, train_config(cfg), jobs);
  const fs::path out = ensure_out(cfg);
  io::write_text_file((out / "sweep.json").string(), io::sweep_rows_json(rows));
  const std::string text = io::sweep_rows_text(rows);
  io::write_text_file((out / "sweep.txt").string(), text);
  if (csv) io::write_text_file((out / "sweep.csv").string(), io::sweep_rows_csv(rows));
  std::cout << text;
  return 0;
}

int cmd_delta(const ExperimentConfig& cfg, double jitter) {
  const Dataset data = load_dataset(cfg, jitter);
  const auto deleted = resolve_delete(require_delete(cfg), data, cfg.seed);
  const Matrix h = classifier_input(data, cfg.multi_hop);
  const double delta =
      deleted.empty() ? 0.0 : features::delta_measure(h, features::DeltaMode::against_set, deleted);

  json j;
  j["delta"] = delta;
  j["deleted_count"] = deleted.size();
  j["num_nodes"] = data.graph.num_nodes;
  const fs::path out = ensure_out(cfg);
  write_json_file(out / "delta.json", j);
  std::cout << fmt::format("delta = {}\n", delta);
  return 0;
}

int cmd_bound(const ExperimentConfig& cfg, double jitter) {
  if (cfg.multi_hop)
    throw UsageError("config field propagation.multi_hop: unsupported by the bound command");
  const Dataset data = load_dataset(cfg, jitter);
  const Trained t = fit_model(cfg, data);
  const auto deleted = resolve_delete(require_delete(cfg), data, cfg.seed);

  const auto constants = unlearn::estimate_constants(data, deleted, t.weights,
                                                     cfg.bound_samples,
                                                     split_seed(cfg.seed, seed_tag::constants));
  const double bound = unlearn::weight_gap_bound(constants);

  auto proj_req = base_request(cfg, deleted);
  proj_req.strategy = unlearn::Strategy::projector;
  proj_req.noise_std = 0.0;
  auto retrain_req = proj_req;
  retrain_req.strategy = unlearn::Strategy::retrain;
  const auto w_p = unlearn::run_unlearn(t.weights, data, proj_req);
  const auto w_u = unlearn::run_unlearn(t.weights, data, retrain_req);
  const double observed = (w_u.weights_after.weights - w_p.weights_after.weights).norm();

  const bool condition_applies = constants.deleted_count >= 1 && constants.lambda > 0.0 &&
                                 constants.eta > 0.0 && constants.t > 0;
  unlearn::DeltaCondition condition;
  if (condition_applies) condition = unlearn::delta_condition(constants);

  json j;
  j["bound"] = bound;
  j["observed_gap"] = observed;
  j["slack_ratio"] = observed > 0.0 ? json(bound / observed) : json(nullptr);
  json c;
  c["b_x"] = constants.b_x;
  c["b_w"] = constants.b_w;
  c["p_s"] = constants.p_s;
  c["p_d"] = constants.p_d;
  c["g_est"] = constants.g_est;
  c["delta"] = constants.delta;
  c["lambda"] = constants.lambda;
  c["eta"] = constants.eta;
  c["t"] = constants.t;
  c["deleted_count"] = constants.deleted_count;
  c["num_nodes"] = constants.num_nodes;
  j["constants"] = c;
  if (condition_applies) {
    j["condition"] = {{"holds", condition.holds}, {"threshold", condition.threshold}};
  } else {
    j["condition"] = nullptr;
  }
  const fs::path out = ensure_out(cfg);
  write_json_file(out / "bound.json", j);

  std::string text;
  text += fmt::format("bound         = {}\n", bound);
  text += fmt::format("observed_gap  = {}\n", observed);
  text += fmt::format("slack_ratio   = {}\n",
                      observed > 0.0 ? fmt::format("{}", bound / observed) : "n/a");
  text += fmt::format("delta         = {}\n", constants.delta);
  if (condition_applies)
    text += fmt::format("condition     = {} (threshold {})\n",
                        condition.holds ? "holds" : "violated", condition.threshold);
  else
    text += "condition     = not evaluated (needs a non-empty deletion and T > 0)\n";
  io::write_text_file((out / "bound.txt").string(), text);
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"linear graph model training with exact and approximate unlearning"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "experiment config (JSON)")->required();
  std::uint64_t seed_override = 0;
  auto* seed_opt = app.add_option("--seed", seed_override, "override config.seed");
  std::string out_override;
  auto* out_opt = app.add_option("--out", out_override, "override config.output_dir");
  int jobs = 1;
  app.add_option("--jobs", jobs, "worker threads for sweep cells")
      ->check(CLI::PositiveNumber);
  std::string gram_path;
  app.add_option("--precompute-gram", gram_path,
                 "gram-state file: loaded when present, otherwise computed and saved; "
                 "selects the downdate path of the projector");
  std::string model_path;
  app.add_option("--model", model_path,
                 "model file consumed by unlearn (default <output_dir>/model.bin)");
  bool csv = false;
  app.add_flag("--csv", csv, "also write the sweep table as CSV");
  double jitter = 0.0;
  app.add_option("--feature-jitter", jitter,
                 "add N(0, std^2) noise to the features before any command")
      ->check(CLI::NonNegativeNumber);

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  auto* train = app.add_subcommand("train", "train the linear model");
  auto* unlearn_cmd = app.add_subcommand("unlearn", "remove nodes from a trained model");
  auto* eval_cmd = app.add_subcommand("eval", "closeness report against retraining");
  auto* inject = app.add_subcommand("inject", "probe-channel removal experiment");
  auto* sweep = app.add_subcommand("sweep", "deletion-ratio robustness sweep");
  auto* delta = app.add_subcommand("delta", "span-distance of the deleted rows");
  auto* bound = app.add_subcommand("bound", "analytic weight-gap bound vs. observation");
  for (auto* sub : {gen, train, unlearn_cmd, eval_cmd, inject, sweep, delta, bound})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    json root;
    try {
      root = json::parse(io::read_text_file(config_path));
    } catch (const json::parse_error& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
    ExperimentConfig cfg = parse_config(root);
    if (seed_opt->count() > 0) cfg.seed = seed_override;
    if (out_opt->count() > 0) cfg.output_dir = out_override;

    if (gen->parsed()) return cmd_generate(cfg);
    if (train->parsed()) return cmd_train(cfg, jitter);
    if (unlearn_cmd->parsed()) return cmd_unlearn(cfg, jitter, model_path, gram_path);
    if (eval_cmd->parsed()) return cmd_eval(cfg, jitter);
    if (inject->parsed()) return cmd_inject(cfg, jitter);
    if (sweep->parsed()) return cmd_sweep(cfg, jitter, jobs, csv);
    if (delta->parsed()) return cmd_delta(cfg, jitter);
    if (bound->parsed()) return cmd_bound(cfg, jitter);
    throw UsageError("no command selected");
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << " (epoch " << e.epoch << ")\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const EmptyRemainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const features::CapacitanceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const IncompatibilityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const json::exception& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 1;
  }
}
