#pragma once

#include "stagg/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stagg {

struct GraphNode {
  std::string id;
  std::string node_class;
  double x = 0.0;
  double y = 0.0;
  std::string region;  // optional label, used by the label-level baseline
};

/// Ordered, class-contiguous node list shared by every matrix in the pipeline.
class NodeCatalog {
 public:
  NodeCatalog() = default;
  /// Nodes are stably grouped by class in order of first appearance.
  explicit NodeCatalog(std::vector<GraphNode> nodes);

  static NodeCatalog read_csv(const std::string& path);
  void write_csv(const std::string& path) const;

  std::size_t size() const { return nodes_.size(); }
  const GraphNode& operator[](std::size_t i) const { return nodes_[i]; }
  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::vector<std::string>& classes() const { return classes_; }

  /// Half-open index range [first, second) of a class.
  std::pair<std::size_t, std::size_t> class_range(const std::string& node_class) const;
  std::size_t class_size(const std::string& node_class) const;
  std::optional<std::size_t> index_of(const std::string& id) const;

 private:
  std::vector<GraphNode> nodes_;
  std::vector<std::string> classes_;
};

using DistanceMetric = std::function<double(const GraphNode&, const GraphNode&)>;

inline double euclidean_distance(const GraphNode& a, const GraphNode& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

template <class Scalar>
struct AffinityMatrix {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> A;
  Scalar sigma{};
};

template <class Scalar>
struct RenormalizedLaplacian {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  MatrixType L;                                   // D~^{-1/2} A~ D~^{-1/2}
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> degree;  // diagonal of D~ = I + D
  MatrixType A_tilde;                             // I + A

  MatrixType degree_matrix() const { return degree.asDiagonal(); }
};

/// Population standard deviation of the strictly-upper-triangular entries of a distance matrix.
template <class Derived>
typename Derived::Scalar pairwise_distance_std(const Eigen::MatrixBase<Derived>& dist) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = dist.rows();
  Scalar mean = 0, sq = 0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      mean += dist(i, j);
      ++count;
    }
  }
  if (count == 0) return Scalar(0);
  mean /= Scalar(count);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) sq += (dist(i, j) - mean) * (dist(i, j) - mean);
  }
  return std::sqrt(sq / Scalar(count));
}

/// A_ij = exp(-d_ij^2 / sigma^2) off the diagonal, zero on it.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> gaussian_affinity(
    const Eigen::MatrixBase<Derived>& dist, typename Derived::Scalar sigma) {
  using Scalar = typename Derived::Scalar;
  if (!(sigma > Scalar(0)) || !std::isfinite(static_cast<double>(sigma))) {
    throw ParameterError("affinity: sigma must be positive and finite");
  }
  if (dist.rows() != dist.cols()) throw DimensionError("affinity: distance matrix not square");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> A =
      (-(dist.array().square()) / (sigma * sigma)).exp().matrix();
  A.diagonal().setZero();
  // exact symmetry regardless of how the distances were accumulated
  A = (A + A.transpose()).eval() / Scalar(2);
  return A;
}

/// Pairwise distance matrix of the catalog nodes under `metric`.
Eigen::MatrixXd distance_matrix(const NodeCatalog& catalog,
                                const DistanceMetric& metric = euclidean_distance);

/// Gaussian affinity over the catalog; `sigma` empty means the std of pairwise distances.
AffinityMatrix<double> build_affinity(const NodeCatalog& catalog,
                                      const DistanceMetric& metric = euclidean_distance,
                                      std::optional<double> sigma = std::nullopt);

template <class Derived>
RenormalizedLaplacian<typename Derived::Scalar> renormalized_laplacian(
    const Eigen::MatrixBase<Derived>& A) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = A.rows();
  if (A.cols() != n) throw DimensionError("laplacian: affinity not square");
  if ((A.array() < Scalar(0)).any()) throw InputError("laplacian: negative affinity");
  if (n > 0 && (A - A.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12)) {
    throw InputError("laplacian: affinity not symmetric");
  }
  RenormalizedLaplacian<Scalar> out;
  using MatrixType = typename RenormalizedLaplacian<Scalar>::MatrixType;
  out.A_tilde = MatrixType::Identity(n, n) + A;
  out.degree = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Ones(n) + A.rowwise().sum();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_sqrt = out.degree.array().rsqrt().matrix();
  out.L = inv_sqrt.asDiagonal() * out.A_tilde * inv_sqrt.asDiagonal();
  out.L = (out.L + out.L.transpose()).eval() / Scalar(2);
  return out;
}

}  // namespace stagg
