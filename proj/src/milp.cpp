#include "stagg/milp.hpp"

#include "simplex.hpp"
#include "stagg/error.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <queue>
#include <sstream>

namespace stagg {

RowSense Row::sense() const {
  if (lo == hi) return RowSense::eq;
  if (lo == -kInf) return RowSense::le;
  if (hi == kInf) return RowSense::ge;
  return RowSense::ranged;
}

std::string row_family(const std::string& row_name) { return row_name.substr(0, row_name.find('[')); }

int Milp::add_variable(const std::string& name, double lo, double hi, double cost, bool integer) {
  if (name.empty()) throw UsageError("milp: empty variable name");
  if (var_index_.count(name)) throw UsageError("milp: duplicate variable '" + name + "'");
  if (std::isnan(lo) || std::isnan(hi) || lo == kInf || hi == -kInf || !std::isfinite(cost)) {
    throw UsageError("milp: invalid bounds or cost for '" + name + "'");
  }
  const int j = num_variables();
  vars_.push_back({name, lo, hi, cost, integer});
  var_index_.emplace(name, j);
  return j;
}

int Milp::add_row(const std::string& name, std::vector<std::pair<int, double>> coefs, double lo, double hi) {
  if (name.empty()) throw UsageError("milp: empty row name");
  if (row_index_.count(name)) throw UsageError("milp: duplicate row '" + name + "'");
  if (std::isnan(lo) || std::isnan(hi) || lo == kInf || hi == -kInf) {
    throw UsageError("milp: invalid bounds for row '" + name + "'");
  }
  std::sort(coefs.begin(), coefs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<int, double>> merged;
  for (const auto& [j, a] : coefs) {
    if (j < 0 || j >= num_variables()) throw UsageError("milp: row '" + name + "' references an unknown column");
    if (!std::isfinite(a)) throw UsageError("milp: non-finite coefficient in row '" + name + "'");
    if (!merged.empty() && merged.back().first == j) {
      merged.back().second += a;
    } else {
      merged.emplace_back(j, a);
    }
  }
  merged.erase(std::remove_if(merged.begin(), merged.end(), [](const auto& p) { return p.second == 0.0; }),
               merged.end());
  const int i = num_rows();
  rows_.push_back({name, std::move(merged), lo, hi});
  row_index_.emplace(name, i);
  return i;
}

int Milp::num_integer() const {
  return static_cast<int>(std::count_if(vars_.begin(), vars_.end(), [](const Variable& v) { return v.integer; }));
}

std::optional<int> Milp::find_variable(const std::string& name) const {
  const auto it = var_index_.find(name);
  if (it == var_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> Milp::find_row(const std::string& name) const {
  const auto it = row_index_.find(name);
  if (it == row_index_.end()) return std::nullopt;
  return it->second;
}

int Milp::variable_index(const std::string& name) const {
  const auto j = find_variable(name);
  if (!j) throw UsageError("milp: no variable named '" + name + "'");
  return *j;
}

std::vector<std::pair<std::string, int>> Milp::family_counts() const {
  std::vector<std::pair<std::string, int>> out;
  std::unordered_map<std::string, std::size_t> at;
  for (const Row& r : rows_) {
    const std::string f = row_family(r.name);
    const auto it = at.find(f);
    if (it == at.end()) {
      at.emplace(f, out.size());
      out.emplace_back(f, 1);
    } else {
      ++out[it->second].second;
    }
  }
  return out;
}

Eigen::SparseMatrix<double> Milp::matrix() const {
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < num_rows(); ++i) {
    for (const auto& [j, a] : rows_[static_cast<std::size_t>(i)].coefs) t.emplace_back(i, j, a);
  }
  Eigen::SparseMatrix<double> A(num_rows(), num_variables());
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

double Milp::objective(const std::vector<double>& x) const {
  if (x.size() != vars_.size()) throw DimensionError("milp: solution length does not match the variable count");
  double v = objective_constant;
  for (std::size_t j = 0; j < vars_.size(); ++j) v += vars_[j].cost * x[j];
  return v;
}

std::vector<double> Milp::activities(const std::vector<double>& x) const {
  if (x.size() != vars_.size()) throw DimensionError("milp: solution length does not match the variable count");
  std::vector<double> out(rows_.size(), 0.0);
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    for (const auto& [j, a] : rows_[i].coefs) out[i] += a * x[static_cast<std::size_t>(j)];
  }
  return out;
}

bool structurally_equal(const Milp& a, const Milp& b, std::string* difference) {
  auto fail = [&](const std::string& what) {
    if (difference) *difference = what;
    return false;
  };
  if (a.num_variables() != b.num_variables()) return fail("variable count");
  if (a.num_rows() != b.num_rows()) return fail("row count");
  if (a.objective_constant != b.objective_constant) return fail("objective constant");
  for (int j = 0; j < a.num_variables(); ++j) {
    const Variable& u = a.variables()[static_cast<std::size_t>(j)];
    const Variable& v = b.variables()[static_cast<std::size_t>(j)];
    if (u.name != v.name || u.lo != v.lo || u.hi != v.hi || u.cost != v.cost || u.integer != v.integer) {
      return fail("variable " + u.name);
    }
  }
  for (int i = 0; i < a.num_rows(); ++i) {
    const Row& r = a.rows()[static_cast<std::size_t>(i)];
    const Row& s = b.rows()[static_cast<std::size_t>(i)];
    if (r.name != s.name || r.lo != s.lo || r.hi != s.hi || r.coefs != s.coefs) return fail("row " + r.name);
  }
  return true;
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::gap_feasible: return "gap-feasible";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::limit: return "limit";
  }
  return "unknown";
}

double relative_gap(double objective, double bound) {
  if (!std::isfinite(objective)) return kInf;
  if (!std::isfinite(bound)) return kInf;
  return std::max(0.0, (objective - bound) / std::max(std::abs(objective), 1e-9));
}

std::map<std::string, double> family_violations(const Milp& model, const std::vector<double>& x) {
  std::map<std::string, double> out;
  const std::vector<double> act = model.activities(x);
  for (int i = 0; i < model.num_rows(); ++i) {
    const Row& r = model.rows()[static_cast<std::size_t>(i)];
    const double a = act[static_cast<std::size_t>(i)];
    const double v = std::max({0.0, r.lo - a, a - r.hi});
    double& slot = out[row_family(r.name)];
    slot = std::max(slot, v);
  }
  for (int j = 0; j < model.num_variables(); ++j) {
    const Variable& var = model.variables()[static_cast<std::size_t>(j)];
    const double xj = x[static_cast<std::size_t>(j)];
    double v = std::max({0.0, var.lo - xj, xj - var.hi});
    if (var.integer) v = std::max(v, std::abs(xj - std::round(xj)));
    if (v > 0.0) {
      double& slot = out["bounds:" + row_family(var.name)];
      slot = std::max(slot, v);
    }
  }
  return out;
}

Violation max_violation(const Milp& model, const std::vector<double>& x) {
  Violation worst;
  for (const auto& [family, v] : family_violations(model, x)) {
    if (v > worst.amount) worst = {v, family};
  }
  return worst;
}

namespace {

using detail::Basis;
using detail::BoundedSimplex;
using detail::Clock;
using detail::LpStatus;

Clock::time_point deadline_after(double seconds) {
  const auto capped = std::min(seconds, 1e7);
  return Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(capped));
}

struct Node {
  double bound;
  int depth;
  std::int64_t seq;
  std::vector<std::tuple<int, double, double>> changes;  // (column, lo, hi), later entries override
  std::shared_ptr<const Basis> basis;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.seq > b.seq;
  }
};

}  // namespace

Solution solve_lp(const Milp& model, const SolverOptions& options) {
  BoundedSimplex lp(model, options);
  const LpStatus st = lp.solve(options.max_iterations, deadline_after(options.time_limit));
  Solution s;
  s.iterations = lp.iterations();
  switch (st) {
    case LpStatus::optimal:
      s.status = SolveStatus::optimal;
      s.x = lp.primal();
      s.objective = lp.objective();
      s.bound = s.objective;
      s.gap = 0.0;
      break;
    case LpStatus::infeasible: s.status = SolveStatus::infeasible; break;
    case LpStatus::unbounded:
      s.status = SolveStatus::unbounded;
      s.objective = -kInf;
      break;
    case LpStatus::limit: s.status = SolveStatus::limit; break;
  }
  return s;
}

Solution solve_milp(const Milp& model, const SolverOptions& options) {
  const auto deadline = deadline_after(options.time_limit);
  const double itol = options.integrality_tolerance;
  std::vector<int> ints;
  for (int j = 0; j < model.num_variables(); ++j) {
    if (model.variables()[static_cast<std::size_t>(j)].integer) ints.push_back(j);
  }

  BoundedSimplex lp(model, options);
  Solution out;
  auto budget = [&] { return std::max<std::int64_t>(0, options.max_iterations - out.iterations); };
  auto run = [&](const Basis* warm) {
    const LpStatus st = lp.solve(budget(), deadline, warm);
    out.iterations += lp.iterations();
    return st;
  };
  auto apply = [&](const std::vector<std::tuple<int, double, double>>& changes) {
    lp.reset_bounds();
    for (const auto& [j, lo, hi] : changes) lp.set_bounds(j, lo, hi);
  };

  const LpStatus root = run(nullptr);
  if (root == LpStatus::infeasible) {
    out.status = SolveStatus::infeasible;
    return out;
  }
  if (root == LpStatus::unbounded) {
    out.status = SolveStatus::unbounded;
    out.objective = -kInf;
    return out;
  }
  if (root == LpStatus::limit) return out;

  double incumbent = kInf;
  auto most_fractional = [&](const std::vector<double>& x) {
    int pick = -1;
    double best = itol;
    for (int j : ints) {
      const double v = x[static_cast<std::size_t>(j)];
      const double f = std::min(v - std::floor(v), std::ceil(v) - v);
      if (f > best + 1e-12) {
        best = f;
        pick = j;
      }
    }
    return pick;
  };
  // Fix the integer columns at the rounded x and re-solve the continuous part.
  auto try_incumbent = [&](const std::vector<std::tuple<int, double, double>>& changes, const std::vector<double>& x,
                           const Basis& basis) {
    std::vector<std::tuple<int, double, double>> fixed = changes;
    for (int j : ints) {
      const double r = std::round(x[static_cast<std::size_t>(j)]);
      fixed.emplace_back(j, r, r);
    }
    apply(fixed);
    if (run(&basis) != LpStatus::optimal) return;
    const double v = lp.objective();
    if (v < incumbent) {
      incumbent = v;
      out.x = lp.primal();
      for (int j : ints) out.x[static_cast<std::size_t>(j)] = std::round(out.x[static_cast<std::size_t>(j)]);
    }
  };

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  std::int64_t seq = 0;
  double pruned_bound = kInf;
  const double root_bound = lp.objective();
  {
    const std::vector<double> x = lp.primal();
    const auto basis = std::make_shared<const Basis>(lp.basis());
    const int j = most_fractional(x);
    if (j < 0) {
      try_incumbent({}, x, *basis);
      if (out.has_solution()) {
        out.objective = incumbent;
        out.bound = std::min(root_bound, incumbent);
        out.gap = relative_gap(incumbent, out.bound);
        out.status = SolveStatus::optimal;
        return out;
      }
    }
    if (j >= 0) {
      const double v = x[static_cast<std::size_t>(j)];
      const Variable& var = model.variables()[static_cast<std::size_t>(j)];
      open.push({root_bound, 1, seq++, {{j, var.lo, std::floor(v)}}, basis});
      open.push({root_bound, 1, seq++, {{j, std::ceil(v), var.hi}}, basis});
    }
  }

  auto prune_threshold = [&] {
    if (incumbent == kInf) return kInf;
    const double tol = std::max(options.gap_tolerance * std::max(std::abs(incumbent), 1e-9),
                                1e-9 * (1.0 + std::abs(incumbent)));
    return incumbent - tol;
  };

  bool hit_limit = false;
  while (!open.empty()) {
    if (incumbent < kInf && relative_gap(incumbent, std::min(open.top().bound, pruned_bound)) <= options.gap_tolerance) {
      break;
    }
    if (out.nodes >= options.max_nodes || budget() == 0 || Clock::now() > deadline) {
      hit_limit = true;
      break;
    }
    Node node = open.top();
    open.pop();
    if (node.bound >= prune_threshold()) {
      pruned_bound = std::min(pruned_bound, node.bound);
      continue;
    }
    apply(node.changes);
    ++out.nodes;
    const LpStatus st = run(node.basis.get());
    if (st == LpStatus::limit) {
      open.push(std::move(node));
      hit_limit = true;
      break;
    }
    if (st != LpStatus::optimal) continue;
    const double value = lp.objective();
    if (value >= prune_threshold()) {
      pruned_bound = std::min(pruned_bound, value);
      continue;
    }
    const std::vector<double> x = lp.primal();
    const auto basis = std::make_shared<const Basis>(lp.basis());
    const int j = most_fractional(x);
    if (j < 0) {
      try_incumbent(node.changes, x, *basis);
      continue;
    }
    const double v = x[static_cast<std::size_t>(j)];
    double lo = model.variables()[static_cast<std::size_t>(j)].lo;
    double hi = model.variables()[static_cast<std::size_t>(j)].hi;
    for (const auto& [c, l, h] : node.changes) {
      if (c == j) {
        lo = l;
        hi = h;
      }
    }
    Node down{value, node.depth + 1, seq++, node.changes, basis};
    down.changes.emplace_back(j, lo, std::floor(v));
    Node up{value, node.depth + 1, seq++, std::move(node.changes), basis};
    up.changes.emplace_back(j, std::ceil(v), hi);
    open.push(std::move(down));
    open.push(std::move(up));
  }

  double bound = std::min(pruned_bound, incumbent);
  if (!open.empty()) bound = std::min(bound, open.top().bound);
  out.bound = std::max(bound, root_bound);
  if (out.has_solution()) {
    out.objective = incumbent;
    out.bound = std::min(out.bound, incumbent);
    out.gap = relative_gap(incumbent, out.bound);
    if (hit_limit) {
      out.status = SolveStatus::limit;
    } else {
      out.status = out.gap <= 1e-9 ? SolveStatus::optimal : SolveStatus::gap_feasible;
    }
  } else {
    out.status = hit_limit ? SolveStatus::limit : SolveStatus::infeasible;
    if (!hit_limit) out.bound = kInf;
  }
  return out;
}

}  // namespace stagg
