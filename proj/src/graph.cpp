#include "stagg/graph.hpp"

#include "stagg/csv.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace stagg {

NodeCatalog::NodeCatalog(std::vector<GraphNode> nodes) {
  std::set<std::string> seen;
  for (const auto& n : nodes) {
    if (!seen.insert(n.id).second) throw InputError("catalog: duplicate node id '" + n.id + "'");
    if (n.node_class.empty()) throw InputError("catalog: node '" + n.id + "' has no class");
    if (std::find(classes_.begin(), classes_.end(), n.node_class) == classes_.end()) {
      classes_.push_back(n.node_class);
    }
  }
  for (const auto& c : classes_) {
    for (auto& n : nodes) {
      if (n.node_class == c) nodes_.push_back(n);
    }
  }
}

NodeCatalog NodeCatalog::read_csv(const std::string& path) {
  const CsvTable table = read_csv_file(path);
  const std::size_t c_id = table.column("id"), c_class = table.column("class");
  const std::size_t c_x = table.column("x"), c_y = table.column("y");
  const auto c_region = table.find_column("region");
  std::vector<GraphNode> nodes;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    GraphNode n;
    n.id = table.rows[r][c_id];
    n.node_class = table.rows[r][c_class];
    n.x = table.number(r, c_x);
    n.y = table.number(r, c_y);
    if (!std::isfinite(n.x) || !std::isfinite(n.y)) {
      throw InputError(path + ": non-finite coordinates for node '" + n.id + "'");
    }
    if (c_region) n.region = table.rows[r][*c_region];
    nodes.push_back(std::move(n));
  }
  return NodeCatalog(std::move(nodes));
}

void NodeCatalog::write_csv(const std::string& path) const {
  CsvTable table;
  table.header = {"id", "class", "x", "y", "region"};
  for (const auto& n : nodes_) {
    table.rows.push_back({n.id, n.node_class, format_number(n.x), format_number(n.y), n.region});
  }
  write_csv_file(path, table);
}

std::pair<std::size_t, std::size_t> NodeCatalog::class_range(const std::string& node_class) const {
  std::size_t first = nodes_.size(), last = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].node_class == node_class) {
      first = std::min(first, i);
      last = i + 1;
    }
  }
  if (last == 0) return {0, 0};
  return {first, last};
}

std::size_t NodeCatalog::class_size(const std::string& node_class) const {
  const auto [a, b] = class_range(node_class);
  return b - a;
}

std::optional<std::size_t> NodeCatalog::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].id == id) return i;
  }
  return std::nullopt;
}

Eigen::MatrixXd distance_matrix(const NodeCatalog& catalog, const DistanceMetric& metric) {
  const auto n = static_cast<Eigen::Index>(catalog.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& a = catalog[static_cast<std::size_t>(i)];
    if (!std::isfinite(a.x) || !std::isfinite(a.y)) {
      throw InputError("affinity: non-finite coordinates for node '" + a.id + "'");
    }
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = metric(a, catalog[static_cast<std::size_t>(j)]);
      if (!std::isfinite(v) || v < 0.0) throw InputError("affinity: invalid distance");
      d(i, j) = d(j, i) = v;
    }
  }
  return d;
}

AffinityMatrix<double> build_affinity(const NodeCatalog& catalog, const DistanceMetric& metric,
                                      std::optional<double> sigma) {
  if (catalog.size() < 2) throw InputError("affinity: need at least two nodes");
  const Eigen::MatrixXd d = distance_matrix(catalog, metric);
  double s = sigma ? *sigma : pairwise_distance_std(d);
  if (!sigma && !(s > 0.0)) {
    // equal pairwise distances: fall back to their common value, or 1 if all nodes coincide
    const double spread = d.maxCoeff();
    s = spread > 0.0 ? spread : 1.0;
  }
  if (!(s > 0.0)) throw ParameterError("affinity: sigma must be positive");
  return AffinityMatrix<double>{gaussian_affinity(d, s), s};
}

}  // namespace stagg
