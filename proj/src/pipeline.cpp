#include "stagg/pipeline.hpp"

#include "stagg/csv.hpp"
#include "stagg/error.hpp"
#include "stagg/features.hpp"
#include "stagg/gep.hpp"
#include "stagg/ub.hpp"

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace stagg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kLossPresets{"PL", "PRL", "PHL", "PRHL"};

bool is_loss_preset(const std::string& s) {
  return std::find(kLossPresets.begin(), kLossPresets.end(), s) != kLossPresets.end();
}

bool is_baseline(const std::string& t) { return t == "raw" || t == "pca"; }

// ---------------------------------------------------------------------------
// YAML reading with line numbers

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
    throw ConfigError(source_ + ":" + std::to_string(n.Mark().line + 1) + ": " + msg);
  }

  void check_keys(const YAML::Node& map, const std::string& where, const std::set<std::string>& allowed) const {
    if (!map.IsMap()) fail(map, "'" + where + "' must be a mapping");
    for (const auto& kv : map) {
      const std::string k = kv.first.as<std::string>();
      if (!allowed.count(k)) fail(kv.first, "unknown key '" + (where.empty() ? k : where + "." + k) + "'");
    }
  }

  template <class T>
  T scalar(const YAML::Node& n, const std::string& key, const char* type) const {
    if (!n.IsScalar()) fail(n, "'" + key + "' must be " + type);
    try {
      return n.as<T>();
    } catch (const YAML::BadConversion&) {
      fail(n, "'" + key + "' must be " + type);
    }
  }

  template <class T>
  std::vector<T> list(const YAML::Node& n, const std::string& key, const char* type) const {
    if (!n.IsSequence()) fail(n, "'" + key + "' must be a list of " + type);
    std::vector<T> out;
    for (const auto& e : n) out.push_back(scalar<T>(e, key, type));
    return out;
  }

 private:
  std::string source_;
};

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? p : (fs::path(base) / path).lexically_normal().string();
}

// ---------------------------------------------------------------------------
// hashing and files

std::string sha256(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

std::string file_digest(const std::string& path) {
  if (!fs::exists(path)) throw InputError("input file not found: " + path);
  return sha256(read_file(path));
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path.string(), j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path.string()));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

/// Runs f(i) for i in [0, n) on up to `jobs` threads; rethrows the failure of the lowest index.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& f) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)), std::max<std::size_t>(n, 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// period features as JSON

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Eigen::MatrixXd json_matrix(const json& j, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  if (static_cast<Eigen::Index>(j.size()) != rows) throw ParseError("features: row count mismatch");
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& r = j[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(r.size()) != cols) throw ParseError("features: column count mismatch");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = r[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json features_json(const PeriodFeatures& f) {
  json periods = json::array();
  for (const auto& p : f.periods) {
    json blocks = json::array();
    for (const auto& b : p.blocks) blocks.push_back(matrix_json(b));
    periods.push_back(std::move(blocks));
  }
  return {{"aggregation_resolution", f.layout.aggregation_resolution},
          {"periods", f.layout.periods},
          {"classes", f.layout.classes},
          {"class_nodes", f.layout.class_nodes},
          {"class_dims", f.layout.class_dims},
          {"data", periods}};
}

PeriodFeatures json_features(const json& j) {
  PeriodFeatures f;
  f.layout.aggregation_resolution = j.at("aggregation_resolution").get<int>();
  f.layout.periods = j.at("periods").get<int>();
  f.layout.classes = j.at("classes").get<std::vector<std::string>>();
  f.layout.class_nodes = j.at("class_nodes").get<std::vector<Eigen::Index>>();
  f.layout.class_dims = j.at("class_dims").get<std::vector<Eigen::Index>>();
  const json& data = j.at("data");
  for (int t = 0; t < f.layout.periods; ++t) {
    PeriodFeatureMatrix p;
    p.t = t;
    for (std::size_t s = 0; s < f.layout.classes.size(); ++s) {
      p.blocks.push_back(json_matrix(data.at(static_cast<std::size_t>(t)).at(s), f.layout.class_nodes[s], f.layout.class_dims[s]));
    }
    f.periods.push_back(std::move(p));
  }
  return f;
}

// ---------------------------------------------------------------------------
// config serialization

json architecture_json(const ArchitectureConfig& a) {
  return {{"latent", a.latent},
          {"pool_widths", a.pool_widths},
          {"feature_widths", a.feature_widths},
          {"decoder_widths", a.decoder_widths},
          {"feature_block", to_string(a.feature_block)},
          {"decoder_block", to_string(a.decoder_block)},
          {"activation", to_string(a.activation)},
          {"one_hot", a.one_hot},
          {"epochs", a.epochs},
          {"learning_rate", a.learning_rate},
          {"patience", a.patience},
          {"plateau_tol", a.plateau_tol}};
}

json solver_json(const SolverOptions& s) {
  return {{"gap_tolerance", s.gap_tolerance},
          {"max_iterations", s.max_iterations},
          {"max_nodes", s.max_nodes},
          {"time_limit", s.time_limit}};
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& e : v) s += (s.empty() ? "" : ", ") + e;
  return s;
}

template <class T>
std::string yaml_list(const std::vector<T>& v) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << "]";
  return os.str();
}

std::string run_id(const std::string& spatial, const std::string& temporal, int K) {
  return spatial + "__" + temporal + "__K" + std::to_string(K);
}

struct RunLabels {
  std::string id, spatial, temporal;
  int K = 0;
};

std::vector<RunLabels> grid(const RunConfig& c) {
  std::vector<RunLabels> out;
  for (const auto& s : c.spatial_methods) {
    for (const auto& t : c.temporal_methods) {
      for (int K : c.k_list) out.push_back({run_id(s, t, K), s, t, K});
    }
  }
  return out;
}

NodeCatalog load_catalog(const fs::path& ingest_dir) { return NodeCatalog::read_csv((ingest_dir / "catalog.csv").string()); }

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::parse(const std::string& yaml_text, const std::string& base_dir, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  RunConfig c;
  if (!root || root.IsNull()) {
    c.validate();
    return c;
  }
  const Reader r(source);
  r.check_keys(root, "",
               {"dataset", "instance", "metadata", "out", "seed", "groups", "k_list", "spatial_methods",
                "temporal_methods", "spatial_features", "baseline_features", "temporal_preset", "pca_dims",
                "affinity", "architecture", "class_weights", "kmedoids", "solver", "ub", "exact"});
  auto has = [](const YAML::Node& n, const char* k) { return static_cast<bool>(n[k]); };
  if (has(root, "dataset")) c.dataset = resolve(base_dir, r.scalar<std::string>(root["dataset"], "dataset", "a path"));
  if (has(root, "instance")) c.instance = resolve(base_dir, r.scalar<std::string>(root["instance"], "instance", "a path"));
  if (has(root, "metadata") && !root["metadata"].IsNull()) {
    c.metadata = resolve(base_dir, r.scalar<std::string>(root["metadata"], "metadata", "a path"));
  }
  if (has(root, "out")) c.out = r.scalar<std::string>(root["out"], "out", "a path");
  if (has(root, "seed")) c.seed = r.scalar<std::uint64_t>(root["seed"], "seed", "a nonnegative integer");
  if (has(root, "groups")) c.groups = r.scalar<int>(root["groups"], "groups", "an integer");
  if (has(root, "k_list")) c.k_list = r.list<int>(root["k_list"], "k_list", "integers");
  if (has(root, "spatial_methods")) c.spatial_methods = r.list<std::string>(root["spatial_methods"], "spatial_methods", "names");
  if (has(root, "temporal_methods")) c.temporal_methods = r.list<std::string>(root["temporal_methods"], "temporal_methods", "names");
  if (has(root, "spatial_features")) c.spatial_features = r.scalar<std::string>(root["spatial_features"], "spatial_features", "a preset name");
  if (has(root, "baseline_features")) c.baseline_features = r.scalar<std::string>(root["baseline_features"], "baseline_features", "a preset name");
  if (has(root, "temporal_preset")) c.temporal_preset = r.scalar<std::string>(root["temporal_preset"], "temporal_preset", "a loss preset");
  if (has(root, "pca_dims")) c.pca_dims = r.scalar<int>(root["pca_dims"], "pca_dims", "an integer");
  if (has(root, "affinity")) {
    const YAML::Node a = root["affinity"];
    r.check_keys(a, "affinity", {"sigma"});
    if (a["sigma"] && !a["sigma"].IsNull()) c.affinity_sigma = r.scalar<double>(a["sigma"], "affinity.sigma", "a number or null");
  }
  if (has(root, "architecture")) {
    const YAML::Node a = root["architecture"];
    r.check_keys(a, "architecture",
                 {"latent", "pool_widths", "feature_widths", "decoder_widths", "feature_block", "decoder_block",
                  "activation", "one_hot", "epochs", "learning_rate", "patience", "plateau_tol"});
    ArchitectureConfig& x = c.architecture;
    if (a["latent"]) x.latent = r.scalar<int>(a["latent"], "architecture.latent", "an integer");
    if (a["pool_widths"]) x.pool_widths = r.list<int>(a["pool_widths"], "architecture.pool_widths", "integers");
    if (a["feature_widths"]) x.feature_widths = r.list<int>(a["feature_widths"], "architecture.feature_widths", "integers");
    if (a["decoder_widths"]) x.decoder_widths = r.list<int>(a["decoder_widths"], "architecture.decoder_widths", "integers");
    try {
      if (a["feature_block"]) x.feature_block = parse_block_kind(r.scalar<std::string>(a["feature_block"], "architecture.feature_block", "a block kind"));
      if (a["decoder_block"]) x.decoder_block = parse_block_kind(r.scalar<std::string>(a["decoder_block"], "architecture.decoder_block", "a block kind"));
      if (a["activation"]) x.activation = parse_activation(r.scalar<std::string>(a["activation"], "architecture.activation", "an activation"));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      r.fail(a, e.what());
    }
    if (a["one_hot"]) x.one_hot = r.scalar<bool>(a["one_hot"], "architecture.one_hot", "a boolean");
    if (a["epochs"]) x.epochs = r.scalar<int>(a["epochs"], "architecture.epochs", "an integer");
    if (a["learning_rate"]) x.learning_rate = r.scalar<double>(a["learning_rate"], "architecture.learning_rate", "a number");
    if (a["patience"]) x.patience = r.scalar<int>(a["patience"], "architecture.patience", "an integer");
    if (a["plateau_tol"]) x.plateau_tol = r.scalar<double>(a["plateau_tol"], "architecture.plateau_tol", "a number");
  }
  if (has(root, "class_weights")) c.class_weights = r.list<double>(root["class_weights"], "class_weights", "numbers");
  if (has(root, "kmedoids")) {
    const YAML::Node k = root["kmedoids"];
    r.check_keys(k, "kmedoids", {"restarts"});
    if (k["restarts"]) c.kmedoids.restarts = r.scalar<int>(k["restarts"], "kmedoids.restarts", "an integer");
  }
  if (has(root, "solver")) {
    const YAML::Node s = root["solver"];
    r.check_keys(s, "solver", {"gap_tolerance", "max_iterations", "max_nodes", "time_limit"});
    if (s["gap_tolerance"]) c.solver.gap_tolerance = r.scalar<double>(s["gap_tolerance"], "solver.gap_tolerance", "a number");
    if (s["max_iterations"]) c.solver.max_iterations = r.scalar<std::int64_t>(s["max_iterations"], "solver.max_iterations", "an integer");
    if (s["max_nodes"]) c.solver.max_nodes = r.scalar<std::int64_t>(s["max_nodes"], "solver.max_nodes", "an integer");
    if (s["time_limit"]) c.solver.time_limit = r.scalar<double>(s["time_limit"], "solver.time_limit", "a number");
  }
  if (has(root, "ub")) {
    const YAML::Node u = root["ub"];
    r.check_keys(u, "ub", {"step2_days"});
    if (u["step2_days"]) {
      c.step2_days.clear();
      for (int d : r.list<int>(u["step2_days"], "ub.step2_days", "integers")) {
        if (d < 1) r.fail(u["step2_days"], "'ub.step2_days' are 1-based day numbers");
        c.step2_days.push_back(d - 1);
      }
    }
  }
  if (has(root, "exact")) c.exact = r.scalar<bool>(root["exact"], "exact", "a boolean");

  try {
    c.validate();
  } catch (const ConfigError& e) {
    // point at the offending top-level key when there is one
    const std::string msg = e.what();
    for (const auto& kv : root) {
      const std::string k = kv.first.as<std::string>();
      if (msg.rfind(k, 0) == 0) r.fail(kv.first, msg);
    }
    throw ConfigError(source + ": " + msg);
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  return parse(read_file(path), fs::path(path).parent_path().string(), path);
}

void RunConfig::validate() const {
  auto unique = [](const auto& v) {
    auto s = v;
    std::sort(s.begin(), s.end());
    return std::adjacent_find(s.begin(), s.end()) == s.end();
  };
  if (groups < 1) throw ConfigError("groups must be at least 1");
  for (int K : k_list) {
    if (K < 1) throw ConfigError("k_list entries must be at least 1");
  }
  if (!unique(k_list)) throw ConfigError("k_list has duplicates");
  for (const auto& s : spatial_methods) {
    if (s != "label" && !is_loss_preset(s)) {
      throw ConfigError("spatial_methods: unknown method '" + s + "' (expected label, " + join(kLossPresets) + ")");
    }
  }
  if (!unique(spatial_methods)) throw ConfigError("spatial_methods has duplicates");
  for (const auto& t : temporal_methods) {
    if (t.empty() || t.find("__") != std::string::npos) throw ConfigError("temporal_methods: invalid name '" + t + "'");
  }
  if (!unique(temporal_methods)) throw ConfigError("temporal_methods has duplicates");
  if (!is_loss_preset(temporal_preset)) throw ConfigError("temporal_preset must be one of " + join(kLossPresets));
  if (pca_dims < 1) throw ConfigError("pca_dims must be at least 1");
  if (affinity_sigma && !(*affinity_sigma > 0.0)) throw ConfigError("affinity.sigma must be positive");
  const ArchitectureConfig& a = architecture;
  if (a.latent < 1) throw ConfigError("architecture.latent must be at least 1");
  for (int w : a.pool_widths) {
    if (w < 1) throw ConfigError("architecture.pool_widths must be positive");
  }
  for (int w : a.feature_widths) {
    if (w < 1) throw ConfigError("architecture.feature_widths must be positive");
  }
  for (int w : a.decoder_widths) {
    if (w < 1) throw ConfigError("architecture.decoder_widths must be positive");
  }
  if (a.epochs < 0) throw ConfigError("architecture.epochs must be nonnegative");
  if (!(a.learning_rate > 0.0)) throw ConfigError("architecture.learning_rate must be positive");
  if (a.patience < 1) throw ConfigError("architecture.patience must be at least 1");
  if (!(a.plateau_tol >= 0.0)) throw ConfigError("architecture.plateau_tol must be nonnegative");
  for (double w : class_weights) {
    if (!(w >= 0.0)) throw ConfigError("class_weights must be nonnegative");
  }
  if (kmedoids.restarts < 0) throw ConfigError("kmedoids.restarts must be nonnegative");
  if (!(solver.gap_tolerance >= 0.0)) throw ConfigError("solver.gap_tolerance must be nonnegative");
  if (solver.max_iterations < 1 || solver.max_nodes < 0) throw ConfigError("solver limits must be positive");
  if (!(solver.time_limit > 0.0)) throw ConfigError("solver.time_limit must be positive");
  if (!unique(step2_days)) throw ConfigError("ub.step2_days has duplicates");
}

json RunConfig::to_json() const {
  std::vector<int> days1;
  for (int d : step2_days) days1.push_back(d + 1);
  json presets = json::object();
  for (const auto& p : kLossPresets) {
    const LossWeights w = LossWeights::preset(p);
    presets[p] = {{"reconstruction", w.reconstruction}, {"pooling", w.pooling}, {"entropy", w.entropy}};
  }
  return {{"dataset", dataset},
          {"instance", instance},
          {"metadata", metadata},
          {"out", out},
          {"seed", seed},
          {"groups", groups},
          {"k_list", k_list},
          {"spatial_methods", spatial_methods},
          {"temporal_methods", temporal_methods},
          {"spatial_features", spatial_features},
          {"baseline_features", baseline_features},
          {"temporal_preset", temporal_preset},
          {"pca_dims", pca_dims},
          {"affinity", {{"sigma", affinity_sigma ? json(*affinity_sigma) : json(nullptr)}}},
          {"architecture", architecture_json(architecture)},
          {"class_weights", class_weights},
          {"kmedoids", {{"restarts", kmedoids.restarts}}},
          {"solver", solver_json(solver)},
          {"ub", {{"step2_days", days1}}},
          {"exact", exact},
          {"loss_presets", presets}};
}

std::string schema_reference() {
  const RunConfig d;
  const ArchitectureConfig& a = d.architecture;
  std::ostringstream os;
  // key and value, then the comment from column 40
  auto line = [&os](const std::string& entry, const std::string& comment = "") {
    os << entry;
    if (!comment.empty()) os << std::string(entry.size() < 39 ? 39 - entry.size() : 1, ' ') << "# " << comment;
    os << "\n";
  };
  auto num = [](auto v) {
    std::ostringstream s;
    s << v;
    return s.str();
  };
  os << "# stagg run configuration. Every key is optional except dataset and instance;\n"
     << "# the values below are the defaults. Relative paths resolve against this file.\n\n";
  line("dataset: data/synthetic/dataset.yaml", "feature manifest (catalog, series, presets)");
  line("instance: data/synthetic/instance", "planning instance directory");
  line("metadata: null", "planted partitions, scored by evaluate when given");
  line("out: " + d.out, "output root; --out and STAGG_OUT take precedence");
  line("seed: " + num(d.seed), "weight initialisation and k-medoids restarts");
  line("groups: " + num(d.groups), "pooled groups |N'| before class splitting");
  line("k_list: " + yaml_list(d.k_list), "representative-day counts");
  line("spatial_methods: " + yaml_list(d.spatial_methods));
  line("  # label groups by the catalog region column; a loss preset votes over its pooling output");
  line("temporal_methods: " + yaml_list(d.temporal_methods));
  line("  # raw and pca cluster flattened features; any other name is a dataset preset whose");
  line("  # autoencoder latents are clustered");
  line("spatial_features: " + d.spatial_features, "feature preset of the spatial autoencoders");
  line("baseline_features: " + d.baseline_features, "feature preset flattened for raw and pca");
  line("temporal_preset: " + d.temporal_preset, "loss preset of the temporal autoencoders");
  line("pca_dims: " + num(d.pca_dims), "at most this many principal components");
  line("affinity:");
  line("  sigma: null", "Gaussian width; null uses the std of pairwise distances");
  line("architecture:");
  line("  latent: " + num(a.latent), "d'");
  line("  pool_widths: " + yaml_list(a.pool_widths), "graph-conv widths before the softmax layer");
  line("  feature_widths: " + yaml_list(a.feature_widths), "hidden widths before the latent layer");
  line("  decoder_widths: " + yaml_list(a.decoder_widths), "hidden widths before the output layer");
  line("  feature_block: " + to_string(a.feature_block), "graph-conv or dense");
  line("  decoder_block: " + to_string(a.decoder_block), "graph-conv or dense");
  line("  activation: " + to_string(a.activation), "tanh, relu, sigmoid or identity");
  line(std::string("  one_hot: ") + (a.one_hot ? "true" : "false"), "append node identity columns");
  line("  epochs: " + num(a.epochs));
  line("  learning_rate: " + num(a.learning_rate));
  line("  patience: " + num(a.patience), "epochs in the plateau window");
  line("  plateau_tol: " + num(a.plateau_tol), "relative loss change that counts as a plateau");
  line("class_weights: []", "reconstruction weight per node class; empty means 1");
  line("kmedoids:");
  line("  restarts: " + num(d.kmedoids.restarts), "random restarts after the greedy start");
  line("solver:");
  line("  gap_tolerance: " + num(d.solver.gap_tolerance), "relative MILP gap");
  line("  max_iterations: " + num(d.solver.max_iterations), "simplex pivots per solve");
  line("  max_nodes: " + num(d.solver.max_nodes), "branch-and-bound nodes per solve");
  line("  time_limit: " + num(d.solver.time_limit), "seconds per solve");
  line("ub:");
  line("  step2_days: []", "1-based days of the disaggregation step; empty picks them");
  line("exact: false", "also solve the full model in evaluate");
  os << "\n"
     << "# loss presets (reconstruction, pooling, entropy):\n";
  for (const auto& p : kLossPresets) {
    const LossWeights w = LossWeights::preset(p);
    os << "#   " << p << ": " << w.reconstruction << ", " << w.pooling << ", " << w.entropy << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Pipeline

std::string to_string(Stage s) {
  switch (s) {
    case Stage::ingest: return "ingest";
    case Stage::train: return "train";
    case Stage::aggregate: return "aggregate";
    case Stage::build: return "build";
    case Stage::solve: return "solve";
    case Stage::evaluate: return "evaluate";
    case Stage::report: return "report";
  }
  return "?";
}

Experiment::Experiment(RunConfig config, int jobs, std::ostream* log)
    : config_(std::move(config)), jobs_(std::max(1, jobs)), log_(log) {
  config_.validate();
  if (config_.dataset.empty()) throw ConfigError("dataset is required");
  if (config_.instance.empty()) throw ConfigError("instance is required");
}

void Experiment::note(const std::string& msg) const {
  if (log_) *log_ << msg << "\n";
}

std::vector<std::string> Experiment::run_ids() const {
  std::vector<std::string> ids;
  for (const auto& r : grid(config_)) ids.push_back(r.id);
  return ids;
}

std::vector<std::string> Experiment::models() const {
  std::set<std::string> names;
  for (const auto& s : config_.spatial_methods) {
    if (is_loss_preset(s)) names.insert(s + "_" + config_.spatial_features);
  }
  for (const auto& t : config_.temporal_methods) {
    if (!is_baseline(t)) names.insert(config_.temporal_preset + "_" + t);
  }
  return {names.begin(), names.end()};
}

std::string Experiment::key(Stage s) const {
  const RunConfig& c = config_;
  json j;
  switch (s) {
    case Stage::ingest: {
      const DatasetManifest m = DatasetManifest::read(c.dataset);
      const fs::path base = fs::path(c.dataset).parent_path();
      j["manifest"] = file_digest(c.dataset);
      j["catalog"] = file_digest((base / m.catalog).string());
      for (const auto& f : m.features) j["features"][f.node_class + "/" + f.name] = file_digest((base / f.file).string());
      break;
    }
    case Stage::train:
      j = {{"ingest", key(Stage::ingest)},
           {"models", models()},
           {"groups", c.groups},
           {"seed", c.seed},
           {"affinity", c.affinity_sigma ? json(*c.affinity_sigma) : json(nullptr)},
           {"architecture", architecture_json(c.architecture)},
           {"class_weights", c.class_weights}};
      break;
    case Stage::aggregate:
      j = {{"train", key(Stage::train)},
           {"k_list", c.k_list},
           {"spatial_methods", c.spatial_methods},
           {"temporal_methods", c.temporal_methods},
           {"spatial_features", c.spatial_features},
           {"baseline_features", c.baseline_features},
           {"temporal_preset", c.temporal_preset},
           {"pca_dims", c.pca_dims},
           {"restarts", c.kmedoids.restarts},
           {"seed", c.seed}};
      break;
    case Stage::build: {
      j = {{"aggregate", key(Stage::aggregate)}};
      std::vector<std::string> files;
      for (const auto& e : fs::directory_iterator(c.instance)) {
        if (e.is_regular_file()) files.push_back(e.path().filename().string());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) j["instance"][f] = file_digest((fs::path(c.instance) / f).string());
      break;
    }
    case Stage::solve: {
      std::vector<int> days1;
      for (int d : c.step2_days) days1.push_back(d + 1);
      j = {{"build", key(Stage::build)}, {"solver", solver_json(c.solver)}, {"step2_days", days1}};
      break;
    }
    case Stage::evaluate:
      j = {{"solve", key(Stage::solve)},
           {"metadata", c.metadata.empty() ? json(nullptr) : json(file_digest(c.metadata))},
           {"exact", c.exact}};
      break;
    case Stage::report: j = {{"evaluate", key(Stage::evaluate)}}; break;
  }
  return sha256(to_string(s) + "\n" + j.dump());
}

std::string Experiment::stage_dir(Stage s) const {
  return (fs::path(config_.out) / (to_string(s) + "-" + key(s).substr(0, 16))).string();
}

std::string Experiment::require(Stage s) const {
  const std::string dir = stage_dir(s);
  if (!fs::exists(fs::path(dir) / "config.json")) {
    throw UsageError("missing " + to_string(s) + " artifacts for this configuration (" + dir + "); run `stagg " +
                     to_string(s) + "` first");
  }
  return dir;
}

namespace {

/// Stage output is assembled in a scratch directory and renamed into place.
class StageWriter {
 public:
  StageWriter(const std::string& final_dir, const json& config)
      : final_(final_dir), tmp_(final_dir + ".tmp-" + std::to_string(::getpid())) {
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
    // artifacts are relocatable, so the output root is not part of the record
    json recorded = config;
    recorded.erase("out");
    write_json(tmp_ / "config.json", recorded);
  }
  ~StageWriter() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(tmp_, ec);
    }
  }
  const fs::path& dir() const { return tmp_; }
  void commit() {
    fs::remove_all(final_);
    fs::rename(tmp_, final_);
    committed_ = true;
  }

 private:
  fs::path final_, tmp_;
  bool committed_ = false;
};

}  // namespace

void Experiment::ingest() {
  const std::string dir = stage_dir(Stage::ingest);
  if (fs::exists(fs::path(dir) / "config.json")) return note("ingest: up to date (" + dir + ")");
  const Dataset raw = stagg::ingest(config_.dataset);
  for (const auto& name : {config_.spatial_features, config_.baseline_features}) {
    if (!raw.presets.count(name)) throw ConfigError("feature preset '" + name + "' is not defined by the dataset");
  }
  for (const auto& t : config_.temporal_methods) {
    if (!is_baseline(t) && !raw.presets.count(t)) {
      throw ConfigError("temporal method '" + t + "' is neither raw, pca nor a dataset preset");
    }
  }
  const auto [data, scaling] = normalize(raw);
  StageWriter w(dir, config_.to_json());
  data.catalog.write_csv((w.dir() / "catalog.csv").string());
  json sc = json::object();
  for (const auto& [k, r] : scaling.ranges) sc[k] = {{"min", r.first}, {"max", r.second}};
  write_json(w.dir() / "scaling.json", sc);
  json summary = {{"days", data.days}, {"presets", data.presets}};
  for (const auto& t : data.tables) {
    json feats = json::array();
    for (const auto& f : t.features) feats.push_back(f.name);
    summary["classes"][t.node_class] = {{"resolution", t.resolution}, {"nodes", t.node_ids.size()}, {"features", feats}};
  }
  write_json(w.dir() / "dataset.json", summary);
  for (const auto& [name, feats] : data.presets) {
    write_json(w.dir() / ("features_" + name + ".json"), features_json(build_period_features(data.select(feats), 1)));
  }
  w.commit();
  note("ingest: " + dir);
}

void Experiment::train() {
  const std::string dir = stage_dir(Stage::train);
  if (fs::exists(fs::path(dir) / "config.json")) return note("train: up to date (" + dir + ")");
  const fs::path in = require(Stage::ingest);
  const NodeCatalog catalog = load_catalog(in);
  const auto lap = renormalized_laplacian(build_affinity(catalog, euclidean_distance, config_.affinity_sigma).A);
  const std::vector<std::string> names = models();
  StageWriter w(dir, config_.to_json());
  parallel_for(names.size(), jobs_, [&](std::size_t i) {
    const std::string& name = names[i];
    const auto cut = name.find('_');
    const std::string preset = name.substr(0, cut), features = name.substr(cut + 1);
    const PeriodFeatures data = json_features(read_json(in / ("features_" + features + ".json")));
    ArchitectureConfig arch = config_.architecture;
    arch.groups = config_.groups;
    arch.seed = config_.seed;
    LossWeights weights = LossWeights::preset(preset);
    weights.class_weights = config_.class_weights;
    const TrainedAutoencoder m = stagg::train(data, lap, arch, weights);
    const fs::path md = w.dir() / name;
    fs::create_directories(md);
    write_json(md / "model.json", m.to_json());
    write_file_atomic((md / "loss.csv").string(), m.loss_csv());
  });
  w.commit();
  note("train: " + std::to_string(names.size()) + " models in " + dir);
}

void Experiment::aggregate() {
  const std::string dir = stage_dir(Stage::aggregate);
  if (fs::exists(fs::path(dir) / "config.json")) return note("aggregate: up to date (" + dir + ")");
  const fs::path in = require(Stage::ingest);
  const fs::path tr = require(Stage::train);
  const NodeCatalog catalog = load_catalog(in);
  std::map<std::string, TrainedAutoencoder> trained;
  for (const auto& name : models()) trained.emplace(name, TrainedAutoencoder::from_json(read_json(tr / name / "model.json")));
  KMedoidsOptions kopt = config_.kmedoids;
  kopt.seed = config_.seed;

  std::map<std::string, SpatialAggregation> spatial;
  for (const auto& s : config_.spatial_methods) {
    if (s == "label") {
      spatial.emplace(s, SpatialAggregation::by_region(catalog));
    } else {
      std::vector<Eigen::MatrixXd> S;
      for (const auto& o : trained.at(s + "_" + config_.spatial_features).outputs) S.push_back(o.S);
      spatial.emplace(s, spatial_vote(S, catalog));
    }
  }
  Eigen::MatrixXd flat;
  bool need_flat = false;
  for (const auto& t : config_.temporal_methods) need_flat = need_flat || is_baseline(t);
  if (need_flat) flat = flatten_all(json_features(read_json(in / ("features_" + config_.baseline_features + ".json"))));

  std::map<std::pair<std::string, int>, TemporalAggregation> temporal;
  for (const auto& t : config_.temporal_methods) {
    for (int K : config_.k_list) {
      TemporalAggregation agg;
      if (t == "raw") {
        agg = temporal_baseline(flat, K, BaselineMode::raw, 0, kopt);
      } else if (t == "pca") {
        agg = temporal_baseline(flat, K, BaselineMode::pca, static_cast<int>(std::min<Eigen::Index>(config_.pca_dims, flat.cols())), kopt);
      } else {
        agg = temporal_from_latents(trained.at(config_.temporal_preset + "_" + t).outputs, K, kopt);
      }
      temporal.emplace(std::make_pair(t, K), std::move(agg));
    }
  }
  StageWriter w(dir, config_.to_json());
  for (const auto& r : grid(config_)) {
    json j = Aggregation{spatial.at(r.spatial), temporal.at({r.temporal, r.K})}.to_json();
    j["run_id"] = r.id;
    j["spatial_method"] = r.spatial;
    j["temporal_method"] = r.temporal;
    j["K"] = r.K;
    write_json(w.dir() / (r.id + ".json"), j);
  }
  w.commit();
  note("aggregate: " + std::to_string(grid(config_).size()) + " aggregations in " + dir);
}

namespace {

AggregatedInstance aggregated_for(const GEPInstance& instance, const NodeCatalog& catalog, const fs::path& agg_dir,
                                  const std::string& id) {
  const Aggregation a = Aggregation::from_json(read_json(agg_dir / (id + ".json")), catalog);
  return aggregate_instance(instance, a.spatial, a.temporal);
}

}  // namespace

void Experiment::build() {
  const std::string dir = stage_dir(Stage::build);
  if (fs::exists(fs::path(dir) / "config.json")) return note("build: up to date (" + dir + ")");
  const fs::path in = require(Stage::ingest);
  const fs::path ag = require(Stage::aggregate);
  const NodeCatalog catalog = load_catalog(in);
  const GEPInstance instance = GEPInstance::read(config_.instance);
  const auto runs = grid(config_);
  StageWriter w(dir, config_.to_json());
  parallel_for(runs.size(), jobs_, [&](std::size_t i) {
    const AggregatedInstance agg = aggregated_for(instance, catalog, ag, runs[i].id);
    const Milp m = build_full_gep(agg.instance);
    write_file_atomic((w.dir() / (runs[i].id + ".mps")).string(), to_mps(m));
    json groups = json::object();
    auto members = [](const std::vector<std::vector<int>>& lists, auto&& id_of) {
      json j = json::array();
      for (const auto& l : lists) {
        json g = json::array();
        for (int k : l) g.push_back(id_of(k));
        j.push_back(std::move(g));
      }
      return j;
    };
    json summary = {
        {"run_id", runs[i].id},
        {"variables", m.num_variables()},
        {"rows", m.rows().size()},
        {"power_groups", members(agg.power_members, [&](int k) { return instance.power_nodes[static_cast<std::size_t>(k)].id; })},
        {"gas_groups", members(agg.gas_members, [&](int k) { return instance.gas_nodes[static_cast<std::size_t>(k)].id; })},
        {"representative_days", agg.instance.rep_days},
        {"weights", agg.instance.weights}};
    write_json(w.dir() / (runs[i].id + ".json"), summary);
  });
  w.commit();
  note("build: " + std::to_string(runs.size()) + " models in " + dir);
}

void Experiment::solve() {
  const std::string dir = stage_dir(Stage::solve);
  if (fs::exists(fs::path(dir) / "config.json")) return note("solve: up to date (" + dir + ")");
  const fs::path in = require(Stage::ingest);
  const fs::path ag = require(Stage::aggregate);
  const fs::path bd = require(Stage::build);
  const NodeCatalog catalog = load_catalog(in);
  const GEPInstance instance = GEPInstance::read(config_.instance);
  const auto runs = grid(config_);
  UBOptions opt;
  opt.step1 = opt.step2 = opt.step3 = config_.solver;
  opt.step2_days = config_.step2_days;
  StageWriter w(dir, config_.to_json());
  std::vector<std::string> timing(runs.size());
  parallel_for(runs.size(), jobs_, [&](std::size_t i) {
    const RunLabels& r = runs[i];
    const AggregatedInstance agg = aggregated_for(instance, catalog, ag, r.id);
    if (read_file((bd / (r.id + ".mps")).string()) != to_mps(build_full_gep(agg.instance))) {
      throw UsageError("build artifact " + (bd / (r.id + ".mps")).string() + " is stale; rerun `stagg build`");
    }
    const std::map<std::string, std::string> labels{{"run_id", r.id},
                                                    {"spatial", r.spatial},
                                                    {"temporal", r.temporal},
                                                    {"K", std::to_string(r.K)},
                                                    {"groups", std::to_string(agg.instance.power_nodes.size() + agg.instance.gas_nodes.size())}};
    json j = {{"run_id", r.id}, {"spatial", r.spatial}, {"temporal", r.temporal}, {"K", r.K}};
    try {
      const UBReport rep = upper_bound(instance, agg, opt);
      j["report"] = rep.to_json(false);
      j["ledger"] = ledger_row(labels, rep);
      std::ostringstream t;
      t << r.id << " " << rep.step1.seconds << " " << rep.step2.seconds << " " << rep.step3.seconds;
      timing[i] = t.str();
    } catch (const HeuristicError& e) {
      j["error"] = e.what();
      timing[i] = r.id + " failed";
    }
    write_json(w.dir() / (r.id + ".json"), j);
  });
  std::string t = "run_id step1_seconds step2_seconds step3_seconds\n";
  for (const auto& line : timing) t += line + "\n";
  write_file_atomic((w.dir() / "timings.txt").string(), t);
  w.commit();
  note("solve: " + std::to_string(runs.size()) + " upper bounds in " + dir);
}

void Experiment::evaluate() {
  const std::string dir = stage_dir(Stage::evaluate);
  if (fs::exists(fs::path(dir) / "config.json")) return note("evaluate: up to date (" + dir + ")");
  const fs::path in = require(Stage::ingest);
  const fs::path ag = require(Stage::aggregate);
  const fs::path sv = require(Stage::solve);
  const NodeCatalog catalog = load_catalog(in);
  const auto runs = grid(config_);

  CsvTable ledger;
  ledger.header = ledger_header();
  CsvTable failures;
  failures.header = {"run_id", "error"};
  for (const auto& r : runs) {
    const json j = read_json(sv / (r.id + ".json"));
    if (j.contains("error")) {
      failures.rows.push_back({r.id, j.at("error").get<std::string>()});
      continue;
    }
    ledger.rows.push_back(j.at("ledger").get<std::vector<std::string>>());
  }

  StageWriter w(dir, config_.to_json());
  write_csv_file((w.dir() / "ledger.csv").string(), ledger);
  write_csv_file((w.dir() / "failures.csv").string(), failures);

  if (!config_.metadata.empty()) {
    const json meta = read_json(config_.metadata);
    std::vector<int> planted;
    for (const auto& n : catalog.nodes()) {
      const auto& comm = meta.at("communities");
      if (!comm.contains(n.id)) throw InputError("metadata: no community for node '" + n.id + "'");
      // groups never span classes, so the planted partition is split by class as well
      const auto cls = std::find(catalog.classes().begin(), catalog.classes().end(), n.node_class) - catalog.classes().begin();
      planted.push_back(static_cast<int>(cls) * 1'000'000 + comm.at(n.id).get<int>());
    }
    const auto archetypes = meta.at("archetypes").get<std::vector<int>>();
    CsvTable rec;
    rec.header = {"run_id", "spatial", "temporal", "K", "spatial_ari", "temporal_ari"};
    for (const auto& r : runs) {
      const Aggregation a = Aggregation::from_json(read_json(ag / (r.id + ".json")), catalog);
      rec.rows.push_back({r.id, r.spatial, r.temporal, std::to_string(r.K),
                          format_number(adjusted_rand_index(a.spatial.group, planted)),
                          format_number(adjusted_rand_index(a.temporal.cluster, archetypes))});
    }
    write_csv_file((w.dir() / "recovery.csv").string(), rec);
  }
  if (config_.exact) {
    const GEPInstance instance = GEPInstance::read(config_.instance);
    const Solution s = solve_milp(build_full_gep(instance), config_.solver);
    json j = {{"status", to_string(s.status)},
              {"objective", s.has_solution() ? json(s.objective) : json(nullptr)},
              {"bound", s.bound},
              {"gap", s.has_solution() ? json(s.gap) : json(nullptr)}};
    write_json(w.dir() / "exact.json", j);
  }
  w.commit();
  note("evaluate: ledger with " + std::to_string(ledger.rows.size()) + " rows in " + dir);
}

void Experiment::report() {
  const std::string dir = stage_dir(Stage::report);
  if (fs::exists(fs::path(dir) / "config.json")) return note("report: up to date (" + dir + ")");
  const fs::path ev = require(Stage::evaluate);
  const fs::path sv = require(Stage::solve);
  const CsvTable ledger = read_csv_file((ev / "ledger.csv").string());
  const std::size_t c_id = ledger.column("run_id"), c_s = ledger.column("spatial"), c_t = ledger.column("temporal"),
                    c_k = ledger.column("K"), c_ub = ledger.column("ub");

  // best UB per (method, K), ties to the first row in ledger order
  auto best = [&](std::size_t method_col, std::size_t other_col, const std::string& method_name,
                  const std::string& other_name) {
    std::map<std::pair<std::string, int>, std::size_t> pick;
    std::vector<std::pair<std::string, int>> order;
    for (std::size_t i = 0; i < ledger.rows.size(); ++i) {
      const auto k = std::make_pair(ledger.rows[i][method_col], std::stoi(ledger.rows[i][c_k]));
      const auto it = pick.find(k);
      if (it == pick.end()) {
        pick.emplace(k, i);
        order.push_back(k);
      } else if (ledger.number(i, c_ub) < ledger.number(it->second, c_ub)) {
        it->second = i;
      }
    }
    CsvTable t;
    t.header = {method_name, "K", "best_ub", "best_" + other_name, "run_id"};
    for (const auto& k : order) {
      const auto& row = ledger.rows[pick.at(k)];
      t.rows.push_back({k.first, std::to_string(k.second), row[c_ub], row[other_col], row[c_id]});
    }
    return t;
  };

  CsvTable plants;
  plants.header = {"run_id", "plant_type", "operating_plants", "capacity", "generation", "share"};
  CsvTable storage;
  storage.header = {"run_id", "storage_type", "power", "energy"};
  for (const auto& row : ledger.rows) {
    const json rep = read_json(sv / (row[c_id] + ".json")).at("report");
    const json& mix = rep.at("generation_mix");
    for (const auto& p : mix.at("plants")) {
      plants.rows.push_back({row[c_id], p.at("plant_type").get<std::string>(),
                             format_number(p.at("operating_plants").get<double>()),
                             format_number(p.at("capacity").get<double>()),
                             format_number(p.at("generation").get<double>()), format_number(p.at("share").get<double>())});
    }
    for (const auto& s : mix.at("storage")) {
      storage.rows.push_back({row[c_id], s.at("storage_type").get<std::string>(), format_number(s.at("power").get<double>()),
                              format_number(s.at("energy").get<double>())});
    }
  }

  StageWriter w(dir, config_.to_json());
  write_csv_file((w.dir() / "best_spatial.csv").string(), best(c_s, c_t, "spatial", "temporal"));
  write_csv_file((w.dir() / "best_temporal.csv").string(), best(c_t, c_s, "temporal", "spatial"));
  write_csv_file((w.dir() / "generation_mix.csv").string(), plants);
  write_csv_file((w.dir() / "storage_mix.csv").string(), storage);
  w.commit();
  note("report: " + dir);
}

void Experiment::run(Stage s) {
  switch (s) {
    case Stage::ingest: return ingest();
    case Stage::train: return train();
    case Stage::aggregate: return aggregate();
    case Stage::build: return build();
    case Stage::solve: return solve();
    case Stage::evaluate: return evaluate();
    case Stage::report: return report();
  }
}

void Experiment::all() {
  for (Stage s : {Stage::ingest, Stage::train, Stage::aggregate, Stage::build, Stage::solve, Stage::evaluate, Stage::report}) {
    run(s);
  }
}

}  // namespace stagg
