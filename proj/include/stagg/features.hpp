#pragma once

// Per-node time series ingestion and the per-period feature matrices fed to the
// autoencoder and to the clustering baselines.

#include "stagg/graph.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stagg {

enum class FeatureKind { parameter, derived, exogenous };

FeatureKind parse_feature_kind(const std::string& s);
std::string to_string(FeatureKind k);

struct FeatureSeries {
  std::string name;
  FeatureKind kind = FeatureKind::parameter;
  Eigen::MatrixXd values;  // class nodes x (days * resolution)
};

/// All series of one node class, sharing length and resolution.
struct TimeSeriesTable {
  std::string node_class;
  int resolution = 1;  // samples per day
  std::vector<std::string> node_ids;
  std::vector<FeatureSeries> features;

  int days() const;
  const FeatureSeries* find(const std::string& name) const;
};

struct Dataset {
  NodeCatalog catalog;
  int days = 0;
  std::vector<TimeSeriesTable> tables;  // in catalog class order
  std::map<std::string, std::vector<std::string>> presets;

  const TimeSeriesTable& table(const std::string& node_class) const;
  /// Copy restricted to the named features; classes keep their (possibly empty) tables.
  Dataset select(const std::vector<std::string>& feature_names) const;
};

struct ManifestFeature {
  std::string node_class;
  std::string name;
  FeatureKind kind = FeatureKind::parameter;
  std::string file;
};

struct DatasetManifest {
  std::string catalog;
  int days = 0;
  std::map<std::string, int> resolutions;  // class -> samples per day
  std::vector<ManifestFeature> features;
  std::map<std::string, std::vector<std::string>> presets;

  /// Paths in the manifest are resolved relative to its directory.
  static DatasetManifest read(const std::string& path);
  void write(const std::string& path) const;
};

/// Load and validate every table named by the manifest.
Dataset ingest(const std::string& manifest_path);
Dataset ingest(const DatasetManifest& manifest, const std::string& base_dir);

/// Per-feature min/max, keyed "class/feature".
struct ScalingRecord {
  std::map<std::string, std::pair<double, double>> ranges;

  double apply(const std::string& key, double v) const;
  double invert(const std::string& key, double v) const;
};

/// Min-max scaling per feature over all nodes and periods; constant features map to 0.
std::pair<Dataset, ScalingRecord> normalize(const Dataset& data);
Dataset denormalize(const Dataset& data, const ScalingRecord& scaling);

/// Column layout of the per-period class matrices.
struct FeatureLayout {
  int aggregation_resolution = 1;
  int periods = 0;
  std::vector<std::string> classes;
  std::vector<Eigen::Index> class_nodes;  // |N^s|
  std::vector<Eigen::Index> class_dims;   // d_s

  Eigen::Index total_nodes() const;
  Eigen::Index total_dims() const;
  Eigen::Index flat_size() const;  // sum_s |N^s| d_s
};

struct PeriodFeatureMatrix {
  int t = 0;
  std::vector<Eigen::MatrixXd> blocks;  // X_s^(t), one per class in layout order
};

struct PeriodFeatures {
  FeatureLayout layout;
  std::vector<PeriodFeatureMatrix> periods;
};

/// Split the tables into aggregation periods of `aggregation_resolution` samples per day.
PeriodFeatures build_period_features(const Dataset& data, int aggregation_resolution);

struct StackedInput {
  Eigen::MatrixXd X;  // |N| x (sum d_s [+ |N|])
  std::vector<Eigen::Index> band_start;
  bool one_hot = false;
};

/// Block-diagonal X^(t), optionally followed by an |N| identity block.
StackedInput assemble_stacked(const PeriodFeatureMatrix& period, const FeatureLayout& layout,
                              bool one_hot);

/// Class-major, node-major, feature-minor vectorization.
Eigen::VectorXd flatten(const PeriodFeatureMatrix& period, const FeatureLayout& layout);
PeriodFeatureMatrix unflatten(const Eigen::VectorXd& x, const FeatureLayout& layout, int t = 0);

/// Rows are periods, columns the flattened features.
Eigen::MatrixXd flatten_all(const PeriodFeatures& features);

}  // namespace stagg
