#pragma once

// Mixed-integer linear programs: model container, bounded primal simplex,
// best-bound branch-and-bound, and fixed-format MPS I/O.

#include <Eigen/SparseCore>

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace stagg {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Variable {
  std::string name;
  double lo = 0.0;
  double hi = kInf;
  double cost = 0.0;
  bool integer = false;
};

enum class RowSense { le, ge, eq, ranged };

/// lo <= sum coef * x <= hi. lo == hi is an equality; one infinite side gives <= or >=.
struct Row {
  std::string name;
  std::vector<std::pair<int, double>> coefs;  // (column, coefficient), columns ascending, no zeros
  double lo = -kInf;
  double hi = kInf;

  RowSense sense() const;
};

/// Minimization model. Names are unique; a row's family is its name up to the first '['.
class Milp {
 public:
  std::string name = "STAGG";
  double objective_constant = 0.0;

  int add_variable(const std::string& name, double lo, double hi, double cost, bool integer = false);
  int add_binary(const std::string& name, double cost) { return add_variable(name, 0.0, 1.0, cost, true); }
  /// Duplicate columns in `coefs` are summed; zero coefficients are dropped.
  int add_row(const std::string& name, std::vector<std::pair<int, double>> coefs, double lo, double hi);
  int add_le(const std::string& name, std::vector<std::pair<int, double>> coefs, double rhs) {
    return add_row(name, std::move(coefs), -kInf, rhs);
  }
  int add_ge(const std::string& name, std::vector<std::pair<int, double>> coefs, double rhs) {
    return add_row(name, std::move(coefs), rhs, kInf);
  }
  int add_eq(const std::string& name, std::vector<std::pair<int, double>> coefs, double rhs) {
    return add_row(name, std::move(coefs), rhs, rhs);
  }

  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<Row>& rows() const { return rows_; }
  Variable& variable(int j) { return vars_.at(static_cast<std::size_t>(j)); }
  Row& row(int i) { return rows_.at(static_cast<std::size_t>(i)); }
  int num_variables() const { return static_cast<int>(vars_.size()); }
  int num_rows() const { return static_cast<int>(rows_.size()); }
  int num_integer() const;

  std::optional<int> find_variable(const std::string& name) const;
  std::optional<int> find_row(const std::string& name) const;
  int variable_index(const std::string& name) const;  // UsageError when absent

  /// Row count per family, in first-appearance order.
  std::vector<std::pair<std::string, int>> family_counts() const;

  Eigen::SparseMatrix<double> matrix() const;  // rows x variables
  double objective(const std::vector<double>& x) const;
  std::vector<double> activities(const std::vector<double>& x) const;

 private:
  std::vector<Variable> vars_;
  std::vector<Row> rows_;
  std::unordered_map<std::string, int> var_index_;
  std::unordered_map<std::string, int> row_index_;
};

std::string row_family(const std::string& row_name);

/// Same names, bounds, integrality, costs, senses and coefficients (exact comparison).
bool structurally_equal(const Milp& a, const Milp& b, std::string* difference = nullptr);

enum class SolveStatus { optimal, gap_feasible, infeasible, unbounded, limit };
std::string to_string(SolveStatus s);

struct SolverOptions {
  double gap_tolerance = 0.01;
  std::int64_t max_iterations = 1'000'000;  // simplex pivots, summed over all nodes
  std::int64_t max_nodes = 100'000;
  double time_limit = 300.0;  // seconds
  double integrality_tolerance = 1e-6;
  double feasibility_tolerance = 1e-9;
  double optimality_tolerance = 1e-9;
  int refactor_interval = 50;
  int stall_threshold = 50;  // consecutive degenerate pivots before switching to Bland's rule
};

struct Solution {
  SolveStatus status = SolveStatus::limit;
  std::vector<double> x;  // empty when no feasible point is known
  double objective = kInf;
  double bound = -kInf;
  double gap = kInf;
  std::int64_t iterations = 0;
  std::int64_t nodes = 0;  // branch-and-bound nodes solved, root excluded

  bool has_solution() const { return !x.empty(); }
};

/// LP relaxation (integrality ignored).
Solution solve_lp(const Milp& model, const SolverOptions& options = {});
Solution solve_milp(const Milp& model, const SolverOptions& options = {});

double relative_gap(double objective, double bound);

/// Largest violation of any row or bound at x, and the family it occurs in.
struct Violation {
  double amount = 0.0;
  std::string where;
};
std::map<std::string, double> family_violations(const Milp& model, const std::vector<double>& x);
Violation max_violation(const Milp& model, const std::vector<double>& x);

/// Writes `path` and `path + ".names.csv"` (mangled,original). Names become R#######/C#######.
void export_mps(const Milp& model, const std::string& path);
std::string to_mps(const Milp& model);
/// Restores original names from `path + ".names.csv"` when present.
Milp import_mps(const std::string& path);
Milp parse_mps(const std::string& text, const std::unordered_map<std::string, std::string>& names = {});

void write_solution_csv(const std::string& path, const Milp& model, const Solution& solution);
std::vector<double> read_solution_csv(const std::string& path, const Milp& model);

}  // namespace stagg
