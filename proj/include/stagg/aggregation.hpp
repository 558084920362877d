#pragma once

// Spatial (node -> group) and temporal (period -> representative period)
// aggregations, and the clustering that produces them.

#include "stagg/autoencoder.hpp"
#include "stagg/graph.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace stagg {

struct TemporalAggregation {
  int K = 0;
  std::vector<int> medoids;     // period indices, ascending
  std::vector<double> weights;  // w_k = |C_k|
  std::vector<int> cluster;     // period -> k
  double objective = 0.0;       // sum of distances to the assigned medoid

  int periods() const { return static_cast<int>(cluster.size()); }
  /// Representative period of period t (phi).
  int representative(int t) const { return medoids[static_cast<std::size_t>(cluster[static_cast<std::size_t>(t)])]; }
  std::vector<int> phi() const;

  /// Every period its own representative with weight 1.
  static TemporalAggregation identity(int periods);
};

struct KMedoidsResult {
  TemporalAggregation aggregation;
  std::vector<double> trace;  // objective of the winning run at its start and after every accepted SWAP
  std::vector<std::vector<double>> run_traces;  // the same for every run, greedy start first
};

using PointMetric = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

inline double euclidean(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).norm(); }

struct KMedoidsOptions {
  int restarts = 10;       // extra SWAP runs from seeded random medoid sets
  std::uint64_t seed = 0;
};

/// PAM on a precomputed dissimilarity matrix: greedy BUILD then best-improvement
/// SWAP, repeated from `restarts` random starts; the lowest objective wins
/// (earlier run on ties). Deterministic given the seed.
KMedoidsResult kmedoids(const Eigen::MatrixXd& dissimilarity, int K, const KMedoidsOptions& options = {});

/// PAM over the rows of `points`.
KMedoidsResult kmedoids_points(const Eigen::MatrixXd& points, int K, const PointMetric& metric = euclidean,
                               const KMedoidsOptions& options = {});

/// Rows are the vectorized Z^(t) (group-major, latent-minor).
Eigen::MatrixXd latent_matrix(const std::vector<EncodedPeriod>& outputs);

/// k-medoids over the vectorized pooled latents.
TemporalAggregation temporal_from_latents(const std::vector<EncodedPeriod>& outputs, int K,
                                          const KMedoidsOptions& options = {});

enum class BaselineMode { raw, pca };

/// Principal-component scores of the rows of X on at most `dims` components.
/// Directions with zero variance are dropped; each direction's largest-magnitude
/// entry is made positive.
Eigen::MatrixXd pca_scores(const Eigen::MatrixXd& X, int dims);

/// k-medoids on the flattened x^(t) (raw) or on their PCA scores.
TemporalAggregation temporal_baseline(const Eigen::MatrixXd& X, int K, BaselineMode mode, int pca_dims = 0,
                                      const KMedoidsOptions& options = {});

struct SpatialAggregation {
  std::vector<std::string> node_ids;     // catalog order
  std::vector<std::string> node_class;   // catalog order
  std::vector<int> group;                // 1-based group of every node
  std::vector<std::string> group_class;  // class of group g at index g-1

  int groups() const { return static_cast<int>(group_class.size()); }
  /// Catalog indices of the members of group g (1-based).
  std::vector<std::size_t> members(int g) const;
  /// Groups of one class, ascending.
  std::vector<int> class_groups(const std::string& node_class) const;

  /// Class-pure regrouping of arbitrary labels: empty labels are dropped and a
  /// label spanning several classes is split. Ids are assigned class-major, then
  /// by ascending label.
  static SpatialAggregation from_labels(const NodeCatalog& catalog, const std::vector<int>& labels);
  static SpatialAggregation identity(const NodeCatalog& catalog);
  /// Groups by the catalog's region column.
  static SpatialAggregation by_region(const NodeCatalog& catalog);
  /// Uniformly random class-pure grouping with exactly `groups_per_class[s]` non-empty groups in class s.
  static SpatialAggregation random(const NodeCatalog& catalog, const std::vector<int>& groups_per_class,
                                   std::uint64_t seed);
};

/// Majority vote of argmax_g S^(t)[n, g]; ties go to the lowest group.
SpatialAggregation spatial_vote(const std::vector<Eigen::MatrixXd>& S, const NodeCatalog& catalog);

/// As spatial_vote, with period t's ballot weighted by w of its cluster.
SpatialAggregation weighted_spatial_vote(const std::vector<Eigen::MatrixXd>& S, const TemporalAggregation& temporal,
                                         const NodeCatalog& catalog);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct Aggregation {
  SpatialAggregation spatial;
  TemporalAggregation temporal;

  nlohmann::json to_json() const;
  /// `catalog` supplies node order and classes.
  static Aggregation from_json(const nlohmann::json& j, const NodeCatalog& catalog);
};

}  // namespace stagg
