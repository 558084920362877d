#include "stagg/aggregation.hpp"

#include "stagg/error.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace stagg {

std::vector<int> TemporalAggregation::phi() const {
  std::vector<int> out;
  out.reserve(cluster.size());
  for (int t = 0; t < periods(); ++t) out.push_back(representative(t));
  return out;
}

TemporalAggregation TemporalAggregation::identity(int periods) {
  TemporalAggregation a;
  a.K = periods;
  for (int t = 0; t < periods; ++t) {
    a.medoids.push_back(t);
    a.weights.push_back(1.0);
    a.cluster.push_back(t);
  }
  return a;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Nearest {
  std::vector<double> d1, d2;  // nearest and second-nearest medoid distance
  std::vector<int> slot;       // index into the medoid list of the nearest medoid
};

Nearest nearest_medoids(const Eigen::MatrixXd& D, const std::vector<int>& medoids) {
  const auto n = static_cast<std::size_t>(D.rows());
  Nearest r{std::vector<double>(n, kInf), std::vector<double>(n, kInf), std::vector<int>(n, -1)};
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t m = 0; m < medoids.size(); ++m) {
      const double d = D(static_cast<Eigen::Index>(j), medoids[m]);
      if (d < r.d1[j]) {
        r.d2[j] = r.d1[j];
        r.d1[j] = d;
        r.slot[j] = static_cast<int>(m);
      } else if (d < r.d2[j]) {
        r.d2[j] = d;
      }
    }
  }
  return r;
}

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

std::vector<int> build_medoids(const Eigen::MatrixXd& D, int K) {
  const Eigen::Index n = D.rows();
  std::vector<int> medoids;
  std::vector<bool> is_medoid(static_cast<std::size_t>(n), false);
  Eigen::Index first = 0;
  double best = kInf;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = D.row(i).sum();
    if (s < best) {
      best = s;
      first = i;
    }
  }
  medoids.push_back(static_cast<int>(first));
  is_medoid[static_cast<std::size_t>(first)] = true;
  std::vector<double> near(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) near[static_cast<std::size_t>(j)] = D(j, first);
  while (static_cast<int>(medoids.size()) < K) {
    Eigen::Index pick = -1;
    double best_gain = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (is_medoid[static_cast<std::size_t>(i)]) continue;
      double gain = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) gain += std::max(0.0, near[static_cast<std::size_t>(j)] - D(i, j));
      if (gain > best_gain) {
        best_gain = gain;
        pick = i;
      }
    }
    medoids.push_back(static_cast<int>(pick));
    is_medoid[static_cast<std::size_t>(pick)] = true;
    for (Eigen::Index j = 0; j < n; ++j) {
      near[static_cast<std::size_t>(j)] = std::min(near[static_cast<std::size_t>(j)], D(j, pick));
    }
  }
  return medoids;
}

// Best-improvement SWAP from `medoids`; returns the objective trace.
std::vector<double> swap_medoids(const Eigen::MatrixXd& D, std::vector<int>& medoids) {
  const Eigen::Index n = D.rows();
  std::vector<bool> is_medoid(static_cast<std::size_t>(n), false);
  for (int m : medoids) is_medoid[static_cast<std::size_t>(m)] = true;
  Nearest nr = nearest_medoids(D, medoids);
  double objective = total(nr.d1);
  std::vector<double> trace{objective};
  for (int iter = 0; iter < 100000; ++iter) {
    double best_delta = 0.0;
    int best_slot = -1;
    Eigen::Index best_h = -1;
    std::vector<int> order(medoids.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return medoids[a] < medoids[b]; });
    for (int m : order) {
      for (Eigen::Index h = 0; h < n; ++h) {
        if (is_medoid[static_cast<std::size_t>(h)]) continue;
        double delta = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          const auto ju = static_cast<std::size_t>(j);
          const double dh = D(j, h);
          const double next = nr.slot[ju] == m ? std::min(dh, nr.d2[ju]) : std::min(dh, nr.d1[ju]);
          delta += next - nr.d1[ju];
        }
        if (delta < best_delta) {
          best_delta = delta;
          best_slot = m;
          best_h = h;
        }
      }
    }
    if (best_slot < 0 || best_delta >= -1e-12 * std::max(1.0, objective)) break;
    is_medoid[static_cast<std::size_t>(medoids[static_cast<std::size_t>(best_slot)])] = false;
    medoids[static_cast<std::size_t>(best_slot)] = static_cast<int>(best_h);
    is_medoid[static_cast<std::size_t>(best_h)] = true;
    nr = nearest_medoids(D, medoids);
    objective = total(nr.d1);
    trace.push_back(objective);
  }
  return trace;
}

}  // namespace

KMedoidsResult kmedoids(const Eigen::MatrixXd& D, int K, const KMedoidsOptions& options) {
  const Eigen::Index n = D.rows();
  if (D.cols() != n) throw DimensionError("kmedoids: dissimilarity matrix not square");
  if (n == 0) throw ParameterError("kmedoids: no points");
  if (K < 1 || K > n) {
    throw ParameterError("kmedoids: K = " + std::to_string(K) + " must lie in [1, " + std::to_string(n) + "]");
  }
  if (options.restarts < 0) throw ParameterError("kmedoids: restarts must be >= 0");
  if (!D.allFinite() || (D.array() < 0.0).any()) throw InputError("kmedoids: dissimilarities must be finite and >= 0");

  KMedoidsResult out;
  std::vector<int> medoids = build_medoids(D, K);
  out.trace = swap_medoids(D, medoids);
  out.run_traces.push_back(out.trace);
  if (K < n) {
    std::mt19937_64 rng(options.seed);
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    for (int r = 0; r < options.restarts; ++r) {
      std::shuffle(all.begin(), all.end(), rng);
      std::vector<int> start(all.begin(), all.begin() + K);
      std::vector<double> trace = swap_medoids(D, start);
      out.run_traces.push_back(trace);
      if (trace.back() < out.trace.back()) {
        medoids = start;
        out.trace = std::move(trace);
      }
    }
  }

  std::sort(medoids.begin(), medoids.end());
  TemporalAggregation& agg = out.aggregation;
  agg.K = K;
  agg.medoids = medoids;
  agg.weights.assign(static_cast<std::size_t>(K), 0.0);
  agg.cluster.assign(static_cast<std::size_t>(n), 0);
  agg.objective = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    int best = 0;
    for (int k = 1; k < K; ++k) {
      if (D(j, medoids[static_cast<std::size_t>(k)]) < D(j, medoids[static_cast<std::size_t>(best)])) best = k;
    }
    agg.cluster[static_cast<std::size_t>(j)] = best;
  }
  for (int k = 0; k < K; ++k) agg.cluster[static_cast<std::size_t>(medoids[static_cast<std::size_t>(k)])] = k;
  for (Eigen::Index j = 0; j < n; ++j) {
    const int k = agg.cluster[static_cast<std::size_t>(j)];
    agg.weights[static_cast<std::size_t>(k)] += 1.0;
    agg.objective += D(j, medoids[static_cast<std::size_t>(k)]);
  }
  return out;
}

KMedoidsResult kmedoids_points(const Eigen::MatrixXd& points, int K, const PointMetric& metric,
                               const KMedoidsOptions& options) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      D(i, j) = D(j, i) = metric(points.row(i).transpose(), points.row(j).transpose());
    }
  }
  return kmedoids(D, K, options);
}

Eigen::MatrixXd latent_matrix(const std::vector<EncodedPeriod>& outputs) {
  if (outputs.empty()) throw InputError("latents: no periods");
  const Eigen::Index rows = outputs.front().Z.rows(), cols = outputs.front().Z.cols();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(outputs.size()), rows * cols);
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    const Eigen::MatrixXd& Z = outputs[t].Z;
    if (Z.rows() != rows || Z.cols() != cols) throw DimensionError("latents: Z shapes differ across periods");
    for (Eigen::Index g = 0; g < rows; ++g) {
      X.row(static_cast<Eigen::Index>(t)).segment(g * cols, cols) = Z.row(g);
    }
  }
  return X;
}

TemporalAggregation temporal_from_latents(const std::vector<EncodedPeriod>& outputs, int K,
                                          const KMedoidsOptions& options) {
  return kmedoids_points(latent_matrix(outputs), K, euclidean, options).aggregation;
}

Eigen::MatrixXd pca_scores(const Eigen::MatrixXd& X, int dims) {
  if (dims < 1 || dims > X.cols()) {
    throw ParameterError("pca: dimension " + std::to_string(dims) + " must lie in [1, " +
                         std::to_string(X.cols()) + "]");
  }
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const Eigen::MatrixXd Xc = X.rowwise() - mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Xc, Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  Eigen::Index rank = 0;
  const double top = s.size() ? s(0) : 0.0;
  while (rank < s.size() && s(rank) > 1e-10 * top && top > 0.0) ++rank;
  const Eigen::Index keep = std::min<Eigen::Index>(dims, rank);
  Eigen::MatrixXd V = svd.matrixV().leftCols(keep);
  for (Eigen::Index c = 0; c < keep; ++c) {
    Eigen::Index arg = 0;
    V.col(c).cwiseAbs().maxCoeff(&arg);
    if (V(arg, c) < 0.0) V.col(c) = -V.col(c);
  }
  return Xc * V;
}

TemporalAggregation temporal_baseline(const Eigen::MatrixXd& X, int K, BaselineMode mode, int pca_dims,
                                      const KMedoidsOptions& options) {
  if (mode == BaselineMode::raw) return kmedoids_points(X, K, euclidean, options).aggregation;
  return kmedoids_points(pca_scores(X, pca_dims), K, euclidean, options).aggregation;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> SpatialAggregation::members(int g) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group[i] == g) out.push_back(i);
  }
  return out;
}

std::vector<int> SpatialAggregation::class_groups(const std::string& c) const {
  std::vector<int> out;
  for (int g = 1; g <= groups(); ++g) {
    if (group_class[static_cast<std::size_t>(g - 1)] == c) out.push_back(g);
  }
  return out;
}

SpatialAggregation SpatialAggregation::from_labels(const NodeCatalog& catalog, const std::vector<int>& labels) {
  if (labels.size() != catalog.size()) throw DimensionError("spatial aggregation: one label per node required");
  SpatialAggregation out;
  out.group.assign(catalog.size(), 0);
  for (const auto& n : catalog.nodes()) {
    out.node_ids.push_back(n.id);
    out.node_class.push_back(n.node_class);
  }
  for (const auto& c : catalog.classes()) {
    const auto [first, last] = catalog.class_range(c);
    std::map<int, int> ids;
    for (std::size_t i = first; i < last; ++i) ids.emplace(labels[i], 0);
    for (auto& [label, id] : ids) {
      out.group_class.push_back(c);
      id = static_cast<int>(out.group_class.size());
    }
    for (std::size_t i = first; i < last; ++i) out.group[i] = ids.at(labels[i]);
  }
  return out;
}

SpatialAggregation SpatialAggregation::identity(const NodeCatalog& catalog) {
  std::vector<int> labels(catalog.size());
  std::iota(labels.begin(), labels.end(), 0);
  return from_labels(catalog, labels);
}

SpatialAggregation SpatialAggregation::by_region(const NodeCatalog& catalog) {
  std::map<std::string, int> regions;
  for (const auto& n : catalog.nodes()) {
    if (n.region.empty()) throw InputError("label-level grouping: node '" + n.id + "' has no region");
    regions.emplace(n.region, 0);
  }
  int next = 0;
  for (auto& [name, id] : regions) id = next++;
  std::vector<int> labels;
  for (const auto& n : catalog.nodes()) labels.push_back(regions.at(n.region));
  return from_labels(catalog, labels);
}

SpatialAggregation SpatialAggregation::random(const NodeCatalog& catalog, const std::vector<int>& groups_per_class,
                                              std::uint64_t seed) {
  const auto& classes = catalog.classes();
  if (groups_per_class.size() != classes.size()) {
    throw DimensionError("random grouping: one group count per class required");
  }
  std::mt19937_64 rng(seed);
  std::vector<int> labels(catalog.size(), 0);
  int offset = 0;
  for (std::size_t s = 0; s < classes.size(); ++s) {
    const auto [first, last] = catalog.class_range(classes[s]);
    const int n = static_cast<int>(last - first), g = groups_per_class[s];
    if (g < 1 || g > n) throw ParameterError("random grouping: group count out of range for class '" + classes[s] + "'");
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), first);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<int> pick(0, g - 1);
    for (int i = 0; i < n; ++i) {
      labels[order[static_cast<std::size_t>(i)]] = offset + (i < g ? i : pick(rng));
    }
    offset += g;
  }
  return from_labels(catalog, labels);
}

namespace {

SpatialAggregation vote(const std::vector<Eigen::MatrixXd>& S, const std::vector<double>& ballot,
                        const NodeCatalog& catalog) {
  if (S.empty()) throw InputError("vote: no assignment matrices");
  const Eigen::Index n = S.front().rows(), k = S.front().cols();
  if (n != static_cast<Eigen::Index>(catalog.size())) throw DimensionError("vote: S rows differ from node count");
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, k);
  for (std::size_t t = 0; t < S.size(); ++t) {
    if (S[t].rows() != n || S[t].cols() != k) throw DimensionError("vote: S shapes differ across periods");
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index arg = 0;
      for (Eigen::Index g = 1; g < k; ++g) {
        if (S[t](i, g) > S[t](i, arg)) arg = g;
      }
      counts(i, arg) += ballot[t];
    }
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg = 0;
    for (Eigen::Index g = 1; g < k; ++g) {
      if (counts(i, g) > counts(i, arg)) arg = g;
    }
    labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return SpatialAggregation::from_labels(catalog, labels);
}

}  // namespace

SpatialAggregation spatial_vote(const std::vector<Eigen::MatrixXd>& S, const NodeCatalog& catalog) {
  return vote(S, std::vector<double>(S.size(), 1.0), catalog);
}

SpatialAggregation weighted_spatial_vote(const std::vector<Eigen::MatrixXd>& S, const TemporalAggregation& temporal,
                                         const NodeCatalog& catalog) {
  if (temporal.periods() != static_cast<int>(S.size())) {
    throw InputError("weighted vote: temporal aggregation covers " + std::to_string(temporal.periods()) +
                     " periods, expected " + std::to_string(S.size()));
  }
  std::vector<double> ballot;
  for (int t = 0; t < temporal.periods(); ++t) {
    ballot.push_back(temporal.weights[static_cast<std::size_t>(temporal.cluster[static_cast<std::size_t>(t)])]);
  }
  return vote(S, ballot, catalog);
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw DimensionError("ARI: labelings differ in length");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [key, c] : joint) index += pairs(c);
  for (const auto& [key, c] : ra) sa += pairs(c);
  for (const auto& [key, c] : rb) sb += pairs(c);
  const double expected = sa * sb / pairs(n);
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

nlohmann::json Aggregation::to_json() const {
  nlohmann::json spatial_j = nlohmann::json::object();
  for (std::size_t i = 0; i < spatial.node_ids.size(); ++i) spatial_j[spatial.node_ids[i]] = spatial.group[i];
  return {{"spatial", spatial_j},
          {"temporal",
           {{"K", temporal.K},
            {"medoids", temporal.medoids},
            {"weights", temporal.weights},
            {"phi", temporal.phi()},
            {"objective", temporal.objective}}}};
}

Aggregation Aggregation::from_json(const nlohmann::json& j, const NodeCatalog& catalog) {
  Aggregation out;
  const auto& sp = j.at("spatial");
  std::vector<int> labels;
  for (const auto& n : catalog.nodes()) {
    if (!sp.contains(n.id)) throw InputError("aggregation: node '" + n.id + "' missing from spatial mapping");
    labels.push_back(sp.at(n.id).get<int>());
  }
  out.spatial = SpatialAggregation::from_labels(catalog, labels);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (out.spatial.group[i] != labels[i]) throw InputError("aggregation: spatial groups are not class-pure and dense");
  }
  const auto& tj = j.at("temporal");
  TemporalAggregation& t = out.temporal;
  t.medoids = tj.at("medoids").get<std::vector<int>>();
  t.weights = tj.at("weights").get<std::vector<double>>();
  t.K = static_cast<int>(t.medoids.size());
  t.objective = tj.value("objective", 0.0);
  std::map<int, int> slot;
  for (int k = 0; k < t.K; ++k) slot[t.medoids[static_cast<std::size_t>(k)]] = k;
  for (int p : tj.at("phi").get<std::vector<int>>()) {
    auto it = slot.find(p);
    if (it == slot.end()) throw InputError("aggregation: phi refers to a non-medoid period");
    t.cluster.push_back(it->second);
  }
  return out;
}

}  // namespace stagg
