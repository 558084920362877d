#include "doctest.h"

#include "stagg/aggregation.hpp"
#include "stagg/error.hpp"
#include "stagg/synth.hpp"
#include "stagg/ub.hpp"

#include <cmath>

using namespace stagg;

namespace {

SynthResult tiny(std::uint64_t seed, int nodes = 3, int days = 6) {
  SynthConfig c;
  c.power_nodes = nodes;
  c.days = days;
  c.archetypes = std::min(3, days);
  c.seed = seed;
  return synthesize(c);
}

// Per-day power demand of every node, hours concatenated.
Eigen::MatrixXd daily_demand(const GEPInstance& g) {
  const auto N = static_cast<Eigen::Index>(g.power_nodes.size());
  Eigen::MatrixXd X(g.days, N * g.hours_per_day);
  for (int d = 0; d < g.days; ++d) {
    for (Eigen::Index n = 0; n < N; ++n) {
      for (int h = 0; h < g.hours_per_day; ++h) X(d, n * g.hours_per_day + h) = g.power_demand(n, d * g.hours_per_day + h);
    }
  }
  return X;
}

SpatialAggregation lump_power(const NodeCatalog& catalog) {
  std::vector<int> labels;
  for (const auto& n : catalog.nodes()) labels.push_back(n.node_class == kPowerClass ? 0 : 1);
  return SpatialAggregation::from_labels(catalog, labels);
}

}  // namespace

TEST_CASE("ub: disaggregation days") {
  auto r = tiny(3);
  GEPInstance& g = r.instance;
  const int H = g.hours_per_day;
  g.power_demand.middleCols(4 * H, H).array() += 100.0;  // day 4 becomes the peak
  g.power_demand.middleCols(5 * H, H).array() += 50.0;   // and day 5 the runner-up
  GEPInstance agg = g;
  agg.rep_days = {1, 4};
  agg.weights = {4.0, 2.0};
  CHECK(select_step2_days(g, agg) == std::vector<int>{1, 4});
  agg.weights = {2.0, 4.0};  // the peak day is also the heaviest: take the next representative
  CHECK(select_step2_days(g, agg) == std::vector<int>{1, 4});
  agg.rep_days = {2, 4};
  agg.weights = {3.0, 3.0};  // tie goes to the earlier day
  CHECK(select_step2_days(g, agg) == std::vector<int>{2, 4});
  agg.rep_days = {4};
  agg.weights = {6.0};
  const auto one = select_step2_days(g, agg);
  CHECK(one == std::vector<int>{4, 5});  // the next-highest demand day joins the only representative
}

TEST_CASE("ub: identity aggregation reproduces the full optimum") {
  for (std::uint64_t seed : {1, 2}) {
    const auto r = tiny(seed);
    const Solution exact = solve_milp(build_full_gep(r.instance), SolverOptions{});
    REQUIRE(exact.has_solution());
    const auto agg = aggregate_instance(r.instance, SpatialAggregation::identity(r.catalog),
                                        TemporalAggregation::identity(r.instance.days));
    const UBReport rep = upper_bound(r.instance, agg);
    CHECK(rep.feasibility.feasible);
    CHECK(rep.ub >= exact.bound - 1e-6 * std::abs(exact.bound));
    CHECK(rep.ub <= exact.objective + 1e-6 * std::abs(exact.objective));
    REQUIRE(rep.group_plan.size() == rep.node_plan.size());
    for (const auto& [name, v] : rep.group_plan) CHECK(rep.node_plan.at(name) == doctest::Approx(v).epsilon(1e-7).scale(1.0));
  }
}

TEST_CASE("ub: bound dominates the exact optimum") {
  const auto r = tiny(5);
  SolverOptions exact_opt;
  exact_opt.gap_tolerance = 0.0;
  const Solution exact = solve_milp(build_full_gep(r.instance), exact_opt);
  REQUIRE(exact.status == SolveStatus::optimal);
  const Eigen::MatrixXd X = daily_demand(r.instance);
  for (int K : {2, 4}) {
    const TemporalAggregation t = temporal_baseline(X, K, BaselineMode::raw);
    for (const SpatialAggregation& s : {SpatialAggregation::identity(r.catalog), SpatialAggregation::by_region(r.catalog),
                                        lump_power(r.catalog)}) {
      const UBReport rep = upper_bound(r.instance, aggregate_instance(r.instance, s, t));
      CHECK(rep.feasibility.feasible);
      CHECK(rep.ub >= exact.objective - 1e-7 * std::abs(exact.objective));
    }
  }
}

TEST_CASE("ub: budget rows") {
  const auto r = tiny(7);
  const GEPInstance& g = r.instance;
  const auto agg = aggregate_instance(g, lump_power(r.catalog), TemporalAggregation::identity(g.days));
  REQUIRE(agg.instance.power_nodes.size() == 1);
  const std::string group = agg.instance.power_nodes[0].id;
  const Milp m1 = build_full_gep(agg.instance);
  std::map<std::string, double> plan = investment_plan(m1, std::vector<double>(static_cast<std::size_t>(m1.num_variables()), 0.0));
  plan[gep_names::x_est(group, "solar")] = 5.0;
  const Milp m2 = build_step2_model(g, agg, plan, {0, 1});
  const Row& row = m2.rows()[static_cast<std::size_t>(*m2.find_row("budget_est[" + group + ",solar]"))];
  CHECK(row.sense() == RowSense::le);
  CHECK(row.hi == 5.0);
  CHECK(row.coefs.size() == g.power_nodes.size());

  // zero budgets: no builds anywhere
  plan[gep_names::x_est(group, "solar")] = 0.0;
  const Solution s = solve_milp(build_step2_model(g, agg, plan, {0, 1}), SolverOptions{});
  REQUIRE(s.has_solution());
  const Milp m2z = build_step2_model(g, agg, plan, {0, 1});
  for (const auto& [name, v] : investment_plan(m2z, s.x)) {
    if (row_family(name) == "x_est" || row_family(name) == "y_cd" || row_family(name) == "y_lev") CHECK_MESSAGE(v == 0.0, name);
  }

  // single-member groups pin the node value
  const auto ident = aggregate_instance(g, SpatialAggregation::identity(r.catalog), TemporalAggregation::identity(g.days));
  const Milp mi = build_full_gep(ident.instance);
  auto iplan = investment_plan(mi, std::vector<double>(static_cast<std::size_t>(mi.num_variables()), 0.0));
  iplan[gep_names::x_est("p1", "coal")] = 2.0;
  const Milp m2i = build_step2_model(g, ident, iplan, {0, 1});
  const Row& pin = m2i.rows()[static_cast<std::size_t>(*m2i.find_row("budget_est[p1,coal]"))];
  CHECK(pin.sense() == RowSense::eq);
  CHECK(pin.lo == 2.0);
}

TEST_CASE("ub: relaxing budgets never raises the two-day objective") {
  const auto r = tiny(11);
  const GEPInstance& g = r.instance;
  const Eigen::MatrixXd X = daily_demand(g);
  const auto agg = aggregate_instance(g, lump_power(r.catalog), temporal_baseline(X, 2, BaselineMode::raw));
  const Milp m1 = build_full_gep(agg.instance);
  const Solution s1 = solve_milp(m1, SolverOptions{});
  REQUIRE(s1.has_solution());
  const auto plan = investment_plan(m1, s1.x);
  auto doubled = plan;
  for (auto& [name, v] : doubled) v *= 2.0;
  for (auto& [name, v] : doubled) {
    if (row_family(name) == "z") v = std::min(v, 1.0);
  }
  const auto days = select_step2_days(g, agg.instance);
  SolverOptions exact;
  exact.gap_tolerance = 0.0;
  const Solution a = solve_milp(build_step2_model(g, agg, plan, days), exact);
  const Solution b = solve_milp(build_step2_model(g, agg, doubled, days), exact);
  REQUIRE(a.has_solution());
  REQUIRE(b.has_solution());
  CHECK(b.objective <= a.objective + 1e-7 * std::abs(a.objective));
}

TEST_CASE("ub: single-day year") {
  auto r = tiny(13, 3, 1);
  const GEPInstance& g = r.instance;
  const auto agg = aggregate_instance(g, SpatialAggregation::identity(r.catalog), TemporalAggregation::identity(1));
  const UBReport rep = upper_bound(g, agg);
  CHECK(rep.step2_days == std::vector<int>{0});
  CHECK(rep.step2_weights == std::vector<double>{1.0});
  CHECK(rep.ub == doctest::Approx(rep.step2.objective).epsilon(1e-8));
}

TEST_CASE("ub: report and ledger") {
  const auto r = tiny(17);
  const auto agg = aggregate_instance(r.instance, SpatialAggregation::by_region(r.catalog),
                                      temporal_baseline(daily_demand(r.instance), 2, BaselineMode::raw));
  const UBReport a = upper_bound(r.instance, agg);
  const UBReport b = upper_bound(r.instance, agg);
  CHECK(a.to_json().dump() == b.to_json().dump());
  CHECK_FALSE(a.to_json().at("step1").contains("seconds"));
  CHECK(a.to_json(true).at("step1").contains("seconds"));
  const auto& plants = a.generation_mix.at("plants");
  double share = 0.0;
  for (const auto& p : plants) share += p.at("share").get<double>();
  CHECK(share == doctest::Approx(1.0));
  CHECK(ledger_row({{"run_id", "x"}, {"K", "2"}}, a).size() == ledger_header().size());
}
