#include "doctest.h"
#include "oracles.hpp"

#include "stagg/error.hpp"
#include "stagg/graph.hpp"

#include <random>

using namespace stagg;

namespace {

NodeCatalog random_catalog(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<GraphNode> nodes;
  for (int i = 0; i < n; ++i) {
    nodes.push_back({"n" + std::to_string(i), i % 3 == 0 ? "gas" : "power", u(rng), u(rng), ""});
  }
  return NodeCatalog(nodes);
}

}  // namespace

TEST_CASE("catalog groups classes contiguously and rejects duplicates") {
  NodeCatalog c({{"a", "power", 0, 0, ""}, {"b", "gas", 1, 0, ""}, {"c", "power", 2, 0, ""}});
  CHECK(c.classes() == std::vector<std::string>{"power", "gas"});
  CHECK(c[0].id == "a");
  CHECK(c[1].id == "c");
  CHECK(c[2].id == "b");
  CHECK(c.class_range("gas") == std::pair<std::size_t, std::size_t>{2, 3});
  CHECK(c.index_of("c") == 1);
  CHECK_FALSE(c.index_of("zzz").has_value());
  CHECK_THROWS_AS(NodeCatalog({{"a", "power", 0, 0, ""}, {"a", "gas", 0, 0, ""}}), InputError);
}

TEST_CASE("affinity of coincident nodes and at distance sigma") {
  NodeCatalog same({{"a", "p", 1, 1, ""}, {"b", "p", 1, 1, ""}});
  CHECK(build_affinity(same, euclidean_distance, 1.0).A(0, 1) == 1.0);

  NodeCatalog apart({{"a", "p", 0, 0, ""}, {"b", "p", 3, 4, ""}});
  const auto aff = build_affinity(apart, euclidean_distance, 5.0);
  CHECK(aff.A(0, 1) == doctest::Approx(0.367879441171).epsilon(1e-10));
  CHECK(aff.A(0, 0) == 0.0);
  CHECK_THROWS_AS(build_affinity(apart, euclidean_distance, 0.0), ParameterError);
  CHECK_THROWS_AS(build_affinity(NodeCatalog({{"a", "p", 0, 0, ""}})), InputError);
  NodeCatalog bad({{"a", "p", 0, 0, ""}, {"b", "p", std::nan(""), 0, ""}});
  CHECK_THROWS_AS(build_affinity(bad), InputError);
}

TEST_CASE("automatic sigma is the population std of pairwise distances") {
  NodeCatalog c({{"a", "p", 0, 0, ""}, {"b", "p", 1, 0, ""}, {"c", "p", 3, 0, ""}});
  // distances 1, 3, 2 -> mean 2, variance 2/3
  CHECK(build_affinity(c).sigma == doctest::Approx(std::sqrt(2.0 / 3.0)));
}

TEST_CASE("affinity is symmetric with entries in [0,1] on random node sets") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto aff = build_affinity(random_catalog(2 + trial % 9, rng));
    CHECK(aff.A == aff.A.transpose());
    CHECK((aff.A.array() >= 0.0).all());
    CHECK((aff.A.array() <= 1.0).all());
    CHECK(aff.A.diagonal().isZero(0.0));
  }
}

TEST_CASE("renormalized laplacian hand cases") {
  const auto iso = renormalized_laplacian(Eigen::MatrixXd::Zero(3, 3));
  CHECK(iso.L == Eigen::MatrixXd::Identity(3, 3));

  Eigen::MatrixXd A(2, 2);
  A << 0, 1, 1, 0;
  const auto lap = renormalized_laplacian(A);
  CHECK(lap.degree_matrix() == Eigen::Matrix2d(Eigen::Vector2d(2, 2).asDiagonal()));
  CHECK(lap.A_tilde == Eigen::MatrixXd::Ones(2, 2));
  CHECK(lap.L.isApprox(Eigen::MatrixXd::Constant(2, 2, 0.5)));

  Eigen::MatrixXd asym(2, 2);
  asym << 0, 1, 0.5, 0;
  CHECK_THROWS_AS(renormalized_laplacian(asym), InputError);
  CHECK_THROWS_AS(renormalized_laplacian(-A), InputError);
}

TEST_CASE("renormalized laplacian is symmetric with spectral radius at most one") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto lap = renormalized_laplacian(build_affinity(random_catalog(3 + trial % 8, rng)).A);
    CHECK((lap.L - lap.L.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((lap.degree.array() >= 1.0).all());
    CHECK(oracle::spectral_radius(lap.L) <= 1.0 + 1e-9);
  }
}
