#pragma once

// Independent reference computations used only by the test suites. Nothing in
// here calls into the code paths it is used to check.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

/// Central finite differences of f at x with step h.
inline Eigen::MatrixXd central_difference(const std::function<double(const Eigen::MatrixXd&)>& f,
                                          const Eigen::MatrixXd& x, double h = 1e-6) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  Eigen::MatrixXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp(i);
    xp(i) = orig + h;
    const double fp = f(xp);
    xp(i) = orig - h;
    const double fm = f(xp);
    xp(i) = orig;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Largest violation of |a - b| <= max(rel * max(|a|,|b|), abs_floor); <= 0 means pass.
inline double gradient_mismatch(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric,
                                double rel = 1e-4, double abs_floor = 1e-8) {
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic(i), b = numeric(i);
    const double allowed = std::max(rel * std::max(std::abs(a), std::abs(b)), abs_floor);
    worst = std::max(worst, std::abs(a - b) - allowed);
  }
  return worst;
}

/// Dominant eigenvalue magnitude by power iteration.
inline double spectral_radius(const Eigen::MatrixXd& M, int iterations = 2000) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(M.rows()).normalized();
  double lambda = 0.0;
  for (int k = 0; k < iterations; ++k) {
    Eigen::VectorXd w = M * v;
    const double n = w.norm();
    if (n == 0.0) return 0.0;
    lambda = n;
    v = w / n;
  }
  return lambda;
}

/// Random row-stochastic matrix with strictly positive entries.
inline Eigen::MatrixXd random_row_stochastic(Eigen::Index n, Eigen::Index k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Eigen::MatrixXd S(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) S(i, j) = std::pow(u(rng), 3.0);
    S.row(i) /= S.row(i).sum();
  }
  return S;
}

/// Exhaustive k-medoids: minimum over all K-subsets of sum of distances to nearest medoid.
inline double brute_force_kmedoids(const Eigen::MatrixXd& D, int K) {
  const int n = static_cast<int>(D.rows());
  std::vector<int> pick(K);
  std::iota(pick.begin(), pick.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
      double m = std::numeric_limits<double>::infinity();
      for (int k : pick) m = std::min(m, D(i, k));
      cost += m;
    }
    best = std::min(best, cost);
    int i = K - 1;
    while (i >= 0 && pick[i] == n - K + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int j = i + 1; j < K; ++j) pick[j] = pick[j - 1] + 1;
  }
  return best;
}

/// Adjusted Rand index between two labelings.
inline double adjusted_rand(const std::vector<int>& a, const std::vector<int>& b) {
  const int n = static_cast<int>(a.size());
  const int ka = *std::max_element(a.begin(), a.end()) + 1;
  const int kb = *std::max_element(b.begin(), b.end()) + 1;
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(ka, kb);
  for (int i = 0; i < n; ++i) table(a[i], b[i]) += 1.0;
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double sum_ij = 0, sum_a = 0, sum_b = 0;
  for (int i = 0; i < ka; ++i) {
    for (int j = 0; j < kb; ++j) sum_ij += c2(table(i, j));
  }
  for (int i = 0; i < ka; ++i) sum_a += c2(table.row(i).sum());
  for (int j = 0; j < kb; ++j) sum_b += c2(table.col(j).sum());
  const double expected = sum_a * sum_b / c2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_ij - expected) / (max_index - expected);
}

/// min c^T x s.t. A x <= b, x >= 0 by enumerating every basic solution of the
/// inequality system. Returns +inf when infeasible. Unbounded instances are
/// the caller's responsibility to avoid (keep the feasible set bounded).
inline double vertex_enumeration(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                 const Eigen::VectorXd& c, Eigen::VectorXd* argmin = nullptr) {
  const int m = static_cast<int>(A.rows()), n = static_cast<int>(A.cols());
  // constraints: A x <= b (m rows) and -x <= 0 (n rows)
  Eigen::MatrixXd G(m + n, n);
  Eigen::VectorXd h(m + n);
  G.topRows(m) = A;
  h.head(m) = b;
  G.bottomRows(n) = -Eigen::MatrixXd::Identity(n, n);
  h.tail(n).setZero();
  const int total = m + n;
  std::vector<int> pick(n);
  std::iota(pick.begin(), pick.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    Eigen::MatrixXd M(n, n);
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) {
      M.row(i) = G.row(pick[i]);
      r(i) = h(pick[i]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (lu.rank() == n) {
      const Eigen::VectorXd x = lu.solve(r);
      if (((G * x - h).array() <= 1e-9).all()) {
        const double v = c.dot(x);
        if (v < best) {
          best = v;
          if (argmin) *argmin = x;
        }
      }
    }
    int i = n - 1;
    while (i >= 0 && pick[i] == total - n + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int j = i + 1; j < n; ++j) pick[j] = pick[j - 1] + 1;
  }
  return best;
}

/// min c^T x over integer points of the box [lo, hi] with A x <= b, by visiting
/// every lattice point. Returns +inf when no point is feasible.
inline double lattice_enumeration(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                                  const std::vector<int>& lo, const std::vector<int>& hi,
                                  Eigen::VectorXd* argmin = nullptr) {
  const int n = static_cast<int>(c.size());
  std::vector<int> x(lo);
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd v(n);
  while (true) {
    for (int j = 0; j < n; ++j) v(j) = x[j];
    if (((A * v - b).array() <= 1e-9).all()) {
      const double f = c.dot(v);
      if (f < best) {
        best = f;
        if (argmin) *argmin = v;
      }
    }
    int j = 0;
    while (j < n && x[j] == hi[j]) {
      x[j] = lo[j];
      ++j;
    }
    if (j == n) break;
    ++x[j];
  }
  return best;
}

}  // namespace oracle
