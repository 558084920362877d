#pragma once

// Bounded revised primal simplex over [A, -I] (x, s) with l <= (x, s) <= u.
// Composite phase 1: while some basic variable is out of bounds, the objective is
// the sum of infeasibilities; the true costs take over once it reaches zero.

#include "stagg/milp.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <chrono>
#include <cstdint>
#include <vector>

namespace stagg::detail {

enum class VarState : std::int8_t { basic, lower, upper, free };

struct Basis {
  std::vector<int> head;          // variable basic in each row position
  std::vector<VarState> state;    // per structural and slack variable
};

enum class LpStatus { optimal, infeasible, unbounded, limit };

using Clock = std::chrono::steady_clock;

class BoundedSimplex {
 public:
  BoundedSimplex(const Milp& model, const SolverOptions& options);

  /// Bounds of structural j in model units.
  void set_bounds(int j, double lo, double hi);
  void reset_bounds();

  LpStatus solve(std::int64_t max_iterations, Clock::time_point deadline, const Basis* warm = nullptr);

  double objective() const;  // model units, constant included
  std::vector<double> primal() const;
  const Basis& basis() const { return basis_; }
  std::int64_t iterations() const { return iterations_; }

 private:
  using SparseLU = Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>;

  struct Eta {
    int r;
    double pivot;
    std::vector<int> idx;
    std::vector<double> val;
  };

  double ftol(double b) const { return options_.feasibility_tolerance * (1.0 + std::abs(b)); }
  void slack_basis();
  void place_nonbasic(int j);
  bool factor();
  void recompute_basics();
  Eigen::VectorXd column(int j) const;
  Eigen::VectorXd ftran(Eigen::VectorXd v) const;
  Eigen::VectorXd btran(Eigen::VectorXd c) const;
  double infeasibility(int j) const;

  SolverOptions options_;
  int m_ = 0, n_ = 0;
  Eigen::SparseMatrix<double> A_;  // scaled, column-major
  Eigen::VectorXd row_scale_, col_scale_;
  double obj_scale_ = 1.0;
  double constant_ = 0.0;
  std::vector<double> cost_, lo_, hi_, lo0_, hi0_;

  Basis basis_;
  std::vector<double> x_;
  mutable SparseLU lu_;  // transpose() is non-const in Eigen
  std::vector<Eta> etas_;
  std::int64_t iterations_ = 0;
};

}  // namespace stagg::detail
