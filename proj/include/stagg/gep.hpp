#pragma once

// Joint power / natural-gas generation expansion problem: instance data, the
// MILP builder, spatio-temporal reduction of an instance, the class-block view
// of the model, and solution feasibility reports.

#include "stagg/aggregation.hpp"
#include "stagg/milp.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <map>
#include <string>
#include <vector>

namespace stagg {

inline const std::string kPowerClass = "power";
inline const std::string kGasClass = "gas";

struct PlantType {
  std::string name;
  bool vre = false;        // renewable with a capacity-factor profile; thermal otherwise
  bool gas_fired = false;  // burns pipeline gas (thermal only)
  double inv_cost = 0.0;   // per plant
  double dec_cost = 0.0;   // per plant
  double fix_cost = 0.0;   // per operating plant and year
  double var_cost = 0.0;   // per MWh
  double fuel_price = 0.0; // per MMBtu, non-gas fuels only
  double heat_rate = 0.0;  // MMBtu per MWh
  double capture_rate = 0.0;
  double capacity = 0.0;    // MW per plant
  double min_output = 0.0;  // fraction of capacity
  double ramp_limit = 1.0;  // fraction of capacity per hour
};

struct StorageType {
  std::string name;
  double energy_inv_cost = 0.0;  // per MWh
  double energy_fix_cost = 0.0;
  double power_inv_cost = 0.0;   // per MW
  double power_fix_cost = 0.0;
  double charge_eff = 1.0;
  double discharge_eff = 1.0;
};

struct PowerNode {
  std::string id;
  std::vector<int> storage;    // storage type indices, ascending
  std::vector<int> gas_links;  // gas node indices that can feed this node, ascending
};

struct GasNode {
  std::string id;
  double inj_max = 0.0;  // MMBtu per day
  double inj_min = 0.0;
};

struct Pipeline {
  std::string id;
  int from = 0, to = 0;  // gas node indices; flow is one-directional
  bool existing = true;
  double initial_capacity = 0.0;    // existing lines
  double candidate_capacity = 0.0;  // candidate lines
  double cost = 0.0;                // build cost of a candidate
};

struct GEPInstance {
  std::string name = "gep";
  int hours_per_day = 24;
  int days = 0;
  std::vector<PlantType> plant_types;
  std::vector<StorageType> storage_types;
  std::vector<PowerNode> power_nodes;
  std::vector<GasNode> gas_nodes;
  std::vector<Pipeline> pipelines;
  Eigen::MatrixXd initial_plants;                          // power nodes x plant types
  Eigen::MatrixXd power_demand;                            // power nodes x (days * hours_per_day), MWh
  std::map<std::string, Eigen::MatrixXd> capacity_factors; // VRE type -> power nodes x (days * hours_per_day)
  Eigen::MatrixXd gas_demand;                              // gas nodes x days, MMBtu

  double shed_cost = 0.0;      // per MWh of unserved power
  double ng_price = 0.0;       // per MMBtu
  double rng_price = 0.0;      // per MMBtu
  double gas_shed_cost = 0.0;  // per MMBtu of unserved gas
  double ng_emission_factor = 0.0;  // t CO2 per MMBtu
  double power_emission_baseline = 0.0;
  double gas_emission_baseline = 0.0;
  double rps = 0.0;                 // minimum renewable share of demand
  double emission_reduction = 0.0;  // zeta
  bool emissions_cap = true;

  // Representative days (ascending) and their weights; empty means every day with weight 1.
  std::vector<int> rep_days;
  std::vector<double> weights;

  std::vector<int> operated_days() const;
  std::vector<double> operated_weights() const;
  int plant_index(const std::string& name) const;  // BuildError when absent
  bool has_gas_fired() const;

  /// Throws BuildError on inconsistent index sets and InputError on out-of-range parameters.
  void validate() const;

  /// Directory layout: instance.json plus the CSV tables it names.
  static GEPInstance read(const std::string& dir);
  void write(const std::string& dir) const;
};

/// Variable and row names of the built model.
namespace gep_names {
std::string x_op(const std::string& n, const std::string& i);
std::string x_est(const std::string& n, const std::string& i);
std::string x_dec(const std::string& n, const std::string& i);
std::string y_cd(const std::string& n, const std::string& r);
std::string y_lev(const std::string& n, const std::string& r);
std::string z(const std::string& l);
std::string p(const std::string& n, int day, int hour, const std::string& i);
std::string s_lev(const std::string& n, int day, int hour, const std::string& r);  // hour 0 = start of day
}  // namespace gep_names

/// Full MILP over the instance's operated days. Deterministic names `kind[indices]`
/// with 1-based day and hour numbers.
Milp build_full_gep(const GEPInstance& instance);

/// Expected row count of every constraint family, from the index sets alone.
std::map<std::string, int> expected_family_counts(const GEPInstance& instance);

struct AggregatedInstance {
  GEPInstance instance;
  std::vector<std::vector<int>> power_members;     // original power node indices per aggregated node
  std::vector<std::vector<int>> gas_members;       // original gas node indices per aggregated node
  std::vector<std::vector<int>> pipeline_members;  // original pipeline indices per aggregated pipeline
};

/// Group-level instance: sums of demands, initial plants and injection bounds;
/// capacity factors averaged with initial-capacity weights; intra-group pipelines
/// dropped and parallel ones merged; representative days from `temporal`.
AggregatedInstance aggregate_instance(const GEPInstance& instance, const SpatialAggregation& spatial,
                                      const TemporalAggregation& temporal);

/// Catalog of the instance's nodes (power first), with zero coordinates.
std::vector<std::pair<std::string, std::string>> instance_nodes(const GEPInstance& instance);

/// One node class of the block form: investments (integer, then continuous),
/// operations, and the class's own rows.
struct ClassBlock {
  std::string node_class;
  std::vector<Variable> investment;  // integer first
  int integer_dims = 0;
  std::vector<Variable> operational;
  std::vector<std::string> row_names;
  Eigen::SparseMatrix<double> A;  // class rows x investment
  Eigen::SparseMatrix<double> B;  // class rows x operational
  std::vector<double> row_lo, row_hi;
  Eigen::SparseMatrix<double> C;  // coupling rows x operational
};

struct GenericCEPHN {
  std::vector<ClassBlock> classes;
  std::vector<std::string> coupling_names;
  std::vector<double> coupling_lo, coupling_hi;
  double objective_constant = 0.0;

  /// Columns class by class (investment then operational); class rows, then coupling rows.
  Milp to_milp() const;
};

/// Splits a built GEP model into power and gas blocks plus coupling rows.
GenericCEPHN to_generic(const Milp& model);
GenericCEPHN to_generic(const GEPInstance& instance);

/// Same variables and rows, compared by name regardless of order.
bool equal_after_normalization(const Milp& a, const Milp& b, std::string* difference = nullptr);

struct FeasibilityReport {
  double max_violation = 0.0;  // absolute
  std::string worst_family;
  std::map<std::string, double> families;  // largest absolute violation per row family (and per bound family)
  double max_scaled_violation = 0.0;       // violation / max(1, |violated bound|)
  bool feasible = true;                    // max_scaled_violation <= tolerance
};

FeasibilityReport check_feasibility(const Milp& model, const std::vector<double>& x, double tolerance = 1e-6);
FeasibilityReport check_feasibility(const GEPInstance& instance, const std::vector<double>& x,
                                    double tolerance = 1e-6);

}  // namespace stagg
