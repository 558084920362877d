#pragma once

// Experiment grid: ingest -> train -> aggregate -> build -> solve -> evaluate -> report.
//
// Every stage writes into <out>/<stage>-<key>, where the key is a SHA-256 over the
// stage's own settings and the keys (or input file contents) it depends on. A
// stage looks its inputs up by recomputing the upstream keys, so a missing
// directory means the producing subcommand has not run for this configuration.

#include "stagg/aggregation.hpp"
#include "stagg/autoencoder.hpp"
#include "stagg/milp.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace stagg {

struct RunConfig {
  std::string dataset;   // manifest path
  std::string instance;  // GEP instance directory
  std::string metadata;  // planted partitions; optional
  std::string out = "runs";
  std::uint64_t seed = 1;
  int groups = 6;
  std::vector<int> k_list{2, 4};
  std::vector<std::string> spatial_methods{"label", "PL", "PRL", "PHL", "PRHL"};
  std::vector<std::string> temporal_methods{"raw", "pca", "A1", "A2"};
  std::string spatial_features = "A2";
  std::string baseline_features = "A2";
  std::string temporal_preset = "PRHL";
  int pca_dims = 4;
  std::optional<double> affinity_sigma;
  ArchitectureConfig architecture;
  std::vector<double> class_weights;
  KMedoidsOptions kmedoids;
  SolverOptions solver;
  std::vector<int> step2_days;  // 1-based in the file, 0-based here
  bool exact = false;

  /// Relative paths resolve against `base_dir`; schema violations raise ConfigError with the line.
  static RunConfig parse(const std::string& yaml_text, const std::string& base_dir = ".",
                         const std::string& source = "<config>");
  static RunConfig load(const std::string& path);

  void validate() const;
  /// Resolved values, presets expanded to their loss weights.
  nlohmann::json to_json() const;
};

/// Documented YAML with every key at its default.
std::string schema_reference();

enum class Stage { ingest, train, aggregate, build, solve, evaluate, report };

std::string to_string(Stage s);

class Experiment {
 public:
  Experiment(RunConfig config, int jobs = 1, std::ostream* log = nullptr);

  const RunConfig& config() const { return config_; }

  void ingest();
  void train();
  void aggregate();
  void build();
  void solve();
  void evaluate();
  void report();
  void all();
  void run(Stage s);

  /// Output directory of a stage under the current configuration and inputs.
  std::string stage_dir(Stage s) const;
  std::string key(Stage s) const;

  /// Run ids of the grid: <spatial>__<temporal>__K<k>.
  std::vector<std::string> run_ids() const;
  /// Autoencoders the grid needs, named <preset>_<features>.
  std::vector<std::string> models() const;

 private:
  std::string require(Stage s) const;
  void note(const std::string& msg) const;

  RunConfig config_;
  int jobs_;
  std::ostream* log_;
};

}  // namespace stagg
