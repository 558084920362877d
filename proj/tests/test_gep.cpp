#include "doctest.h"
#include "gep_fixture.hpp"
#include "test_util.hpp"

#include "stagg/error.hpp"
#include "stagg/gep.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

using namespace stagg;
using testutil::small_gep;

namespace {

std::map<std::string, int> as_map(const std::vector<std::pair<std::string, int>>& v) { return {v.begin(), v.end()}; }

// One node, one thermal type, no gas side, a single day.
GEPInstance single_thermal(const std::vector<double>& demand) {
  GEPInstance g;
  g.days = 1;
  g.hours_per_day = static_cast<int>(demand.size());
  g.plant_types = {PlantType{"coal", false, false, 10.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 1.0}};
  g.power_nodes = {PowerNode{"n1", {}, {}}};
  g.initial_plants = Eigen::MatrixXd::Zero(1, 1);
  g.power_demand = Eigen::Map<const Eigen::RowVectorXd>(demand.data(), static_cast<Eigen::Index>(demand.size()));
  g.gas_demand = Eigen::MatrixXd(0, 1);
  g.shed_cost = 1000.0;
  g.emissions_cap = false;
  return g;
}

double value(const Milp& m, const Solution& s, const std::string& name) {
  return s.x[static_cast<std::size_t>(m.variable_index(name))];
}

double sum_family(const Milp& m, const Solution& s, const std::string& kind) {
  double total = 0.0;
  for (int j = 0; j < m.num_variables(); ++j) {
    if (row_family(m.variables()[static_cast<std::size_t>(j)].name) == kind) total += s.x[static_cast<std::size_t>(j)];
  }
  return total;
}

}  // namespace

TEST_CASE("gep: instance validation") {
  CHECK_NOTHROW(small_gep().validate());
  auto g = small_gep();
  g.power_demand.resize(2, 5);
  CHECK_THROWS_AS(g.validate(), BuildError);
  g = small_gep();
  g.capacity_factors.clear();
  CHECK_THROWS_WITH_AS(g.validate(), doctest::Contains("capacity_factors.solar"), BuildError);
  g = small_gep();
  g.rps = 1.5;
  CHECK_THROWS_AS(g.validate(), InputError);
  g = small_gep();
  g.pipelines[0].to = 0;
  CHECK_THROWS_AS(g.validate(), BuildError);
  g = small_gep();
  g.rep_days = {2, 1};
  g.weights = {1.0, 2.0};
  CHECK_THROWS_AS(g.validate(), BuildError);
}

TEST_CASE("gep: directory round trip and missing tables") {
  testutil::TempDir dir("gep_io");
  auto g = small_gep();
  g.rep_days = {0, 2};
  g.weights = {2.0, 1.0};
  g.write(dir.path.string());
  const GEPInstance back = GEPInstance::read(dir.path.string());
  std::string diff;
  CHECK_MESSAGE(equal_after_normalization(build_full_gep(g), build_full_gep(back), &diff), diff);

  std::filesystem::remove(dir.file("gas_demand.csv"));
  CHECK_THROWS_AS(GEPInstance::read(dir.path.string()), Error);
  g.write(dir.path.string());
  testutil::write(dir.file("instance.json"), R"({"days": 3, "hours_per_day": 4, "tables": {}, "parameters": {}})");
  CHECK_THROWS_WITH_AS(GEPInstance::read(dir.path.string()), doctest::Contains("plant_types"), BuildError);
}

TEST_CASE("gep: family counts match the index sets") {
  const auto g = small_gep();
  const Milp m = build_full_gep(g);
  CHECK(as_map(m.family_counts()) == expected_family_counts(g));
  // hand count: 2 nodes x 3 days x 4 hours, two thermal types, one battery
  const auto c = as_map(m.family_counts());
  CHECK(c.at("thermal_max") == 48);
  CHECK(c.at("vre_cap") == 24);
  CHECK(c.at("power_balance") == 12);
  CHECK(c.at("storage_level") == 12);
  CHECK(c.at("storage_wrap") == 3);
  CHECK(c.at("gas_balance") == 6);
  CHECK(c.at("pipe_candidate") == 3);
  CHECK(c.at("gas_to_power") == 6);
  CHECK(c.at("emissions") == 1);

  auto r = g;
  r.rep_days = {1};
  r.weights = {3.0};
  CHECK(as_map(build_full_gep(r).family_counts()) == expected_family_counts(r));
  CHECK(expected_family_counts(r).at("power_balance") == 4);
  r.emissions_cap = false;
  CHECK(expected_family_counts(r).count("emissions") == 0);
}

TEST_CASE("gep: zero demand costs nothing") {
  auto g = small_gep();
  g.power_demand.setZero();
  g.gas_demand.setZero();
  g.initial_plants.setZero();
  const Solution s = solve_milp(build_full_gep(g), SolverOptions{});
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(std::abs(s.objective) <= 1e-9);
}

TEST_CASE("gep: single thermal node builds ceil(peak / capacity) plants") {
  const std::vector<double> demand{3.0, 7.0, 5.0};
  const GEPInstance g = single_thermal(demand);
  const Milp m = build_full_gep(g);
  SolverOptions opt;
  opt.gap_tolerance = 0.0;
  const Solution s = solve_milp(m, opt);
  REQUIRE(s.status == SolveStatus::optimal);
  // oracle: for each plant count, dispatch is the closed-form merit order
  double best = std::numeric_limits<double>::infinity();
  int best_n = -1;
  for (int n = 0; n <= 5; ++n) {
    double cost = n * (10.0 + 1.0);
    for (double d : demand) cost += std::min(d, 2.0 * n) * 1.0 + std::max(0.0, d - 2.0 * n) * 1000.0;
    if (cost < best) {
      best = cost;
      best_n = n;
    }
  }
  CHECK(best_n == 4);
  CHECK(s.objective == doctest::Approx(best).epsilon(1e-9));
  CHECK(value(m, s, gep_names::x_op("n1", "coal")) == doctest::Approx(4.0));
}

TEST_CASE("gep: full emission reduction forbids gas-fired output") {
  GEPInstance g = single_thermal({4.0, 6.0});
  g.plant_types[0] = PlantType{"ccgt", false, true, 10.0, 0.0, 1.0, 1.0, 0.0, 7.0, 0.0, 5.0, 0.0, 1.0};
  g.power_nodes[0].gas_links = {0};
  g.gas_nodes = {GasNode{"k1", 1000.0, 0.0}};
  g.gas_demand = Eigen::MatrixXd::Constant(1, 1, 30.0);
  g.ng_price = 1.0;
  g.rng_price = 2.0;
  g.gas_shed_cost = 100.0;
  g.ng_emission_factor = 0.05;
  g.power_emission_baseline = 10.0;
  g.gas_emission_baseline = 5.0;
  g.emission_reduction = 1.0;
  g.emissions_cap = true;
  const Milp m = build_full_gep(g);
  const Solution s = solve_milp(m, SolverOptions{});
  if (s.status == SolveStatus::infeasible) return;
  REQUIRE(s.has_solution());
  CHECK(sum_family(m, s, "p") == doctest::Approx(0.0).scale(1.0));
  CHECK(sum_family(m, s, "a_e") == doctest::Approx(10.0));
  CHECK(sum_family(m, s, "a_rng") + sum_family(m, s, "a_g") == doctest::Approx(30.0));
}

TEST_CASE("gep: identity aggregation reproduces the full model") {
  const auto g = small_gep();
  std::vector<GraphNode> nodes;
  for (const auto& [id, cls] : instance_nodes(g)) nodes.push_back(GraphNode{id, cls, 0.0, 0.0, ""});
  const NodeCatalog catalog(nodes);
  const auto agg = aggregate_instance(g, SpatialAggregation::identity(catalog), TemporalAggregation::identity(g.days));
  std::string diff;
  CHECK_MESSAGE(equal_after_normalization(build_full_gep(agg.instance), build_full_gep(g), &diff), diff);
  CHECK(agg.power_members == std::vector<std::vector<int>>{{0}, {1}});
  CHECK(agg.pipeline_members == std::vector<std::vector<int>>{{0}, {1}});
}

TEST_CASE("gep: aggregation sums and capacity-weighted factors") {
  auto g = small_gep();
  g.power_demand.row(0).setConstant(3.0);
  g.power_demand.row(1).setConstant(5.0);
  g.plant_types[2].capacity = 1.0;
  g.initial_plants(0, 2) = 1.0;
  g.initial_plants(1, 2) = 3.0;
  g.capacity_factors["solar"].row(0).setConstant(0.2);
  g.capacity_factors["solar"].row(1).setConstant(0.6);
  SpatialAggregation s;
  s.node_ids = {"p1", "p2", "g1", "g2"};
  s.node_class = {kPowerClass, kPowerClass, kGasClass, kGasClass};
  s.group = {1, 1, 2, 3};
  s.group_class = {kPowerClass, kGasClass, kGasClass};
  TemporalAggregation t;
  t.K = 2;
  t.medoids = {0, 2};
  t.weights = {2.0, 1.0};
  t.cluster = {0, 0, 1};
  const auto agg = aggregate_instance(g, s, t);
  const GEPInstance& a = agg.instance;
  REQUIRE(a.power_nodes.size() == 1);
  CHECK(a.power_nodes[0].id == "G1");
  CHECK(a.gas_nodes[0].id == "g1");
  CHECK(a.power_demand(0, 0) == doctest::Approx(8.0));
  CHECK(a.capacity_factors.at("solar")(0, 5) == doctest::Approx(0.5));
  CHECK(a.initial_plants(0, 1) == doctest::Approx(2.0));
  CHECK(a.power_nodes[0].storage == std::vector<int>{0});
  CHECK(a.power_nodes[0].gas_links == std::vector<int>{0, 1});
  CHECK(a.rep_days == std::vector<int>{0, 2});
  CHECK(a.weights == std::vector<double>{2.0, 1.0});
  CHECK(a.pipelines.size() == 2);

  // merging both gas nodes drops the pipelines
  s.group = {1, 1, 2, 2};
  s.group_class = {kPowerClass, kGasClass};
  const auto b = aggregate_instance(g, s, t);
  CHECK(b.instance.pipelines.empty());
  CHECK(b.instance.gas_nodes[0].inj_max == doctest::Approx(450.0));
  CHECK(b.instance.gas_demand(0, 1) == doctest::Approx(165.0));

  // parallel candidates merge with summed capacity and the cheaper cost
  g.pipelines.push_back(Pipeline{"l3", 0, 1, false, 0.0, 50.0, 10.0});
  s.group = {1, 1, 2, 3};
  s.group_class = {kPowerClass, kGasClass, kGasClass};
  const auto c = aggregate_instance(g, s, t);
  REQUIRE(c.instance.pipelines.size() == 2);
  const Pipeline& merged = c.instance.pipelines[1];
  CHECK_FALSE(merged.existing);
  CHECK(merged.candidate_capacity == doctest::Approx(250.0));
  CHECK(merged.cost == doctest::Approx(10.0));
  CHECK(c.pipeline_members[1] == std::vector<int>{1, 2});
}

TEST_CASE("gep: class-block form round trips") {
  const Milp m = build_full_gep(small_gep());
  const GenericCEPHN gen = to_generic(m);
  REQUIRE(gen.classes.size() == 2);
  std::string diff;
  CHECK_MESSAGE(equal_after_normalization(gen.to_milp(), m, &diff), diff);
  const ClassBlock& power = gen.classes[0];
  const ClassBlock& gas = gen.classes[1];
  CHECK(power.integer_dims == 12);  // x_op, x_est, x_dec for two thermal types at two nodes
  CHECK(gas.integer_dims == 1);
  CHECK(gen.coupling_names.size() == 7);
  CHECK(power.C.rows() == 7);
  CHECK(power.C.nonZeros() > 0);
  CHECK(gas.C.nonZeros() > 0);
  for (int i = 0; i < power.integer_dims; ++i) CHECK(power.investment[static_cast<std::size_t>(i)].integer);

  Milp bad = m;
  bad.add_le("power_balance[bad]", {{bad.variable_index("g[g1,1]"), 1.0}}, 1.0);
  CHECK_THROWS_AS(to_generic(bad), BuildError);
  Milp bad2 = m;
  bad2.add_le("emissions[bad]", {{bad2.variable_index(gep_names::x_op("p1", "coal")), 1.0}}, 1.0);
  CHECK_THROWS_AS(to_generic(bad2), BuildError);
}

TEST_CASE("gep: feasibility reports") {
  const auto g = small_gep();
  const Milp m = build_full_gep(g);
  const Solution s = solve_milp(m, SolverOptions{});
  REQUIRE(s.has_solution());
  const auto ok = check_feasibility(m, s.x);
  CHECK(ok.feasible);
  CHECK(ok.max_scaled_violation < 1e-6);

  // shift one intermediate storage level
  auto x = s.x;
  const int j = m.variable_index(gep_names::s_lev("p1", 2, 2, "battery"));
  x[static_cast<std::size_t>(j)] += 0.5;
  const auto bad = check_feasibility(m, x);
  CHECK_FALSE(bad.feasible);
  CHECK(bad.worst_family == "storage_level");
  CHECK(bad.families.at("storage_level") == doctest::Approx(0.5));
  for (const auto& [family, v] : bad.families) {
    if (family != "storage_level" && family != "storage_energy_cap") CHECK_MESSAGE(v < 1e-9, family);
  }

  // all zeros: every hour sheds its full demand
  const auto zero = check_feasibility(m, std::vector<double>(static_cast<std::size_t>(m.num_variables()), 0.0));
  CHECK(zero.families.at("power_balance") == doctest::Approx(g.power_demand.colwise().sum().maxCoeff()));
}

TEST_CASE("gep: model survives an MPS round trip") {
  testutil::TempDir dir("gep_mps");
  const Milp m = build_full_gep(small_gep());
  export_mps(m, dir.file("gep.mps"));
  const Milp back = import_mps(dir.file("gep.mps"));
  std::string diff;
  CHECK_MESSAGE(equal_after_normalization(m, back, &diff), diff);
}
