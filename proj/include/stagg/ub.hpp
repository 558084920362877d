#pragma once

// Three-step upper bound: solve the aggregated model, disaggregate its
// investments on the full network over two days under group budgets, then fix
// them and re-solve the operations of the full year.

#include "stagg/gep.hpp"
#include "stagg/milp.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

namespace stagg {

struct UBOptions {
  SolverOptions step1;
  SolverOptions step2;
  SolverOptions step3;
  std::vector<int> step2_days;  // 0-based; empty selects them by the default rule
  double feasibility_tolerance = 1e-6;
};

struct StepOutcome {
  SolveStatus status = SolveStatus::limit;
  double objective = 0.0;
  double bound = 0.0;
  double gap = 0.0;
  std::int64_t iterations = 0;
  std::int64_t nodes = 0;
  double seconds = 0.0;

  nlohmann::json to_json(bool timing) const;
};

struct UBReport {
  StepOutcome step1, step2, step3;
  std::map<std::string, double> group_plan;  // investment variables of the aggregated model
  std::vector<int> step2_days;               // 0-based
  std::vector<double> step2_weights;
  std::map<std::string, double> node_plan;   // investment variables of the two-day model
  double ub = 0.0;
  FeasibilityReport feasibility;
  nlohmann::json generation_mix;
  std::vector<double> solution;  // full-year solution of step 3

  /// Timings are left out unless asked for, so the report is reproducible byte for byte.
  nlohmann::json to_json(bool timing = false) const;
};

/// The largest-weight representative day plus the day of peak total power demand;
/// if they coincide, the second largest-weight representative day (earlier day on ties).
std::vector<int> select_step2_days(const GEPInstance& full, const GEPInstance& aggregated);

/// Investment variables (x_op, x_est, x_dec, y_cd, y_lev, z) by name.
std::map<std::string, double> investment_plan(const Milp& model, const std::vector<double>& x);

/// Full-network model over `days` with each day weighted |T| / |days| and the group budget
/// rows: a member sum may not exceed the group's step-1 value, and single-member groups
/// reproduce it exactly.
Milp build_step2_model(const GEPInstance& full, const AggregatedInstance& aggregated,
                       const std::map<std::string, double>& group_plan, const std::vector<int>& days);

/// Plant count, capacity and weighted output per plant type, and storage sizes.
nlohmann::json generation_mix(const GEPInstance& instance, const Milp& model, const std::vector<double>& x);

/// Throws HeuristicError when a step ends without a solution.
UBReport upper_bound(const GEPInstance& full, const AggregatedInstance& aggregated, const UBOptions& options = {});

/// Ledger columns and one row per report.
std::vector<std::string> ledger_header();
std::vector<std::string> ledger_row(const std::map<std::string, std::string>& labels, const UBReport& report);

}  // namespace stagg
