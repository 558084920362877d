#include "stagg/ub.hpp"

#include "stagg/csv.hpp"
#include "stagg/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

namespace stagg {

using nlohmann::json;

namespace {

const std::set<std::string> kInvestmentKinds{"x_op", "x_est", "x_dec", "y_cd", "y_lev", "z"};

StepOutcome outcome(const Solution& s, double seconds) {
  StepOutcome o;
  o.status = s.status;
  o.objective = s.objective;
  o.bound = s.bound;
  o.gap = s.gap;
  o.iterations = s.iterations;
  o.nodes = s.nodes;
  o.seconds = seconds;
  return o;
}

template <class F>
auto timed(F&& f, double& seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  auto r = f();
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

double plan_value(const std::map<std::string, double>& plan, const std::string& name) {
  const auto it = plan.find(name);
  if (it == plan.end()) throw HeuristicError("ub: step-1 plan has no value for " + name);
  return it->second;
}

}  // namespace

json StepOutcome::to_json(bool timing) const {
  json j{{"status", to_string(status)}, {"objective", objective}, {"bound", bound},
         {"gap", gap},                  {"iterations", iterations}, {"nodes", nodes}};
  if (timing) j["seconds"] = seconds;
  return j;
}

json UBReport::to_json(bool timing) const {
  json j;
  j["ub"] = ub;
  j["step1"] = step1.to_json(timing);
  j["step2"] = step2.to_json(timing);
  j["step2"]["days"] = step2_days;
  j["step2"]["weights"] = step2_weights;
  j["step3"] = step3.to_json(timing);
  j["group_plan"] = group_plan;
  j["node_plan"] = node_plan;
  j["feasibility"] = {{"feasible", feasibility.feasible},
                      {"max_violation", feasibility.max_violation},
                      {"max_scaled_violation", feasibility.max_scaled_violation},
                      {"worst_family", feasibility.worst_family},
                      {"families", feasibility.families}};
  j["generation_mix"] = generation_mix;
  return j;
}

std::vector<int> select_step2_days(const GEPInstance& full, const GEPInstance& aggregated) {
  const std::vector<int> reps = aggregated.operated_days();
  const std::vector<double> w = aggregated.operated_weights();
  if (full.days == 1) return {0};
  // representative days by descending weight, earlier day first on ties
  std::vector<std::size_t> order(reps.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  const int typical = reps[order[0]];
  const int H = full.hours_per_day;
  std::vector<double> load(static_cast<std::size_t>(full.days));
  for (int d = 0; d < full.days; ++d) load[static_cast<std::size_t>(d)] = full.power_demand.middleCols(d * H, H).sum();
  int extreme = static_cast<int>(std::max_element(load.begin(), load.end()) - load.begin());
  if (extreme == typical) {
    if (order.size() > 1) {
      extreme = reps[order[1]];
    } else {
      load[static_cast<std::size_t>(typical)] = -std::numeric_limits<double>::infinity();
      extreme = static_cast<int>(std::max_element(load.begin(), load.end()) - load.begin());
    }
  }
  std::vector<int> days{typical, extreme};
  std::sort(days.begin(), days.end());
  return days;
}

std::map<std::string, double> investment_plan(const Milp& model, const std::vector<double>& x) {
  std::map<std::string, double> plan;
  for (int j = 0; j < model.num_variables(); ++j) {
    const Variable& v = model.variables()[static_cast<std::size_t>(j)];
    if (!kInvestmentKinds.count(row_family(v.name))) continue;
    double value = x[static_cast<std::size_t>(j)];
    if (v.integer) value = std::round(value);
    value = std::clamp(value, v.lo, v.hi);
    if (std::abs(value) <= 1e-9) value = 0.0;  // solver round-off and negative zeros
    plan[v.name] = value;
  }
  return plan;
}

Milp build_step2_model(const GEPInstance& full, const AggregatedInstance& agg, const std::map<std::string, double>& plan,
                       const std::vector<int>& days) {
  if (days.empty() || days.size() > 2) throw HeuristicError("ub: the disaggregation step takes one or two days");
  GEPInstance two = full;
  two.rep_days = days;
  std::sort(two.rep_days.begin(), two.rep_days.end());
  if (std::adjacent_find(two.rep_days.begin(), two.rep_days.end()) != two.rep_days.end()) {
    throw HeuristicError("ub: disaggregation days must differ");
  }
  two.weights.assign(days.size(), static_cast<double>(full.days) / static_cast<double>(days.size()));
  Milp m = build_full_gep(two);
  namespace nm = gep_names;
  const GEPInstance& a = agg.instance;

  // single-member groups reproduce the group value; larger groups may not exceed it
  auto budget = [&](const std::string& row, const std::vector<std::string>& names, double cap, bool exact) {
    std::vector<std::pair<int, double>> coefs;
    for (const auto& name : names) coefs.emplace_back(m.variable_index(name), 1.0);
    if (coefs.empty()) return;
    if (exact) {
      m.add_eq(row, coefs, cap);
    } else {
      m.add_le(row, coefs, cap);
    }
  };

  for (std::size_t g = 0; g < a.power_nodes.size(); ++g) {
    const PowerNode& group = a.power_nodes[g];
    const auto& members = agg.power_members[g];
    const bool exact = members.size() == 1;
    for (const PlantType& t : full.plant_types) {
      std::vector<std::string> est, dec;
      for (int n : members) {
        est.push_back(nm::x_est(full.power_nodes[static_cast<std::size_t>(n)].id, t.name));
        dec.push_back(nm::x_dec(full.power_nodes[static_cast<std::size_t>(n)].id, t.name));
      }
      budget("budget_est[" + group.id + "," + t.name + "]", est, plan_value(plan, nm::x_est(group.id, t.name)), exact);
      budget("budget_dec[" + group.id + "," + t.name + "]", dec, plan_value(plan, nm::x_dec(group.id, t.name)), exact);
    }
    for (int r : group.storage) {
      const std::string& s = full.storage_types[static_cast<std::size_t>(r)].name;
      std::vector<std::string> cd, lev;
      for (int n : members) {
        const PowerNode& node = full.power_nodes[static_cast<std::size_t>(n)];
        if (!std::binary_search(node.storage.begin(), node.storage.end(), r)) continue;
        cd.push_back(nm::y_cd(node.id, s));
        lev.push_back(nm::y_lev(node.id, s));
      }
      budget("budget_cd[" + group.id + "," + s + "]", cd, plan_value(plan, nm::y_cd(group.id, s)), exact);
      budget("budget_lev[" + group.id + "," + s + "]", lev, plan_value(plan, nm::y_lev(group.id, s)), exact);
    }
  }
  // a built merged line allows every one of its member lines
  for (std::size_t e = 0; e < a.pipelines.size(); ++e) {
    const Pipeline& line = a.pipelines[e];
    if (line.existing) continue;
    const auto& members = agg.pipeline_members[e];
    std::vector<std::string> zs;
    for (int l : members) zs.push_back(nm::z(full.pipelines[static_cast<std::size_t>(l)].id));
    const double built = plan_value(plan, nm::z(line.id));
    budget("budget_pipe[" + line.id + "]", zs, static_cast<double>(members.size()) * built, members.size() == 1);
  }
  return m;
}

json generation_mix(const GEPInstance& in, const Milp& m, const std::vector<double>& x) {
  const std::vector<int> days = in.operated_days();
  const std::vector<double> w = in.operated_weights();
  json plants = json::array();
  double total = 0.0;
  std::vector<double> output(in.plant_types.size(), 0.0), count(in.plant_types.size(), 0.0);
  for (std::size_t i = 0; i < in.plant_types.size(); ++i) {
    const PlantType& t = in.plant_types[i];
    for (const PowerNode& n : in.power_nodes) {
      count[i] += x[static_cast<std::size_t>(m.variable_index(gep_names::x_op(n.id, t.name)))];
      for (std::size_t q = 0; q < days.size(); ++q) {
        for (int h = 1; h <= in.hours_per_day; ++h) {
          output[i] += w[q] * x[static_cast<std::size_t>(m.variable_index(gep_names::p(n.id, days[q] + 1, h, t.name)))];
        }
      }
    }
    total += output[i];
  }
  for (std::size_t i = 0; i < in.plant_types.size(); ++i) {
    const PlantType& t = in.plant_types[i];
    plants.push_back({{"plant_type", t.name},
                      {"operating_plants", count[i]},
                      {"capacity", count[i] * t.capacity},
                      {"generation", output[i]},
                      {"share", total > 0.0 ? output[i] / total : 0.0}});
  }
  json storage = json::array();
  for (const StorageType& s : in.storage_types) {
    double power = 0.0, energy = 0.0;
    for (std::size_t n = 0; n < in.power_nodes.size(); ++n) {
      const PowerNode& node = in.power_nodes[n];
      const auto r = static_cast<int>(&s - in.storage_types.data());
      if (!std::binary_search(node.storage.begin(), node.storage.end(), r)) continue;
      power += x[static_cast<std::size_t>(m.variable_index(gep_names::y_cd(node.id, s.name)))];
      energy += x[static_cast<std::size_t>(m.variable_index(gep_names::y_lev(node.id, s.name)))];
    }
    storage.push_back({{"storage_type", s.name}, {"power", power}, {"energy", energy}});
  }
  return {{"plants", plants}, {"storage", storage}};
}

UBReport upper_bound(const GEPInstance& full, const AggregatedInstance& agg, const UBOptions& options) {
  if (!full.rep_days.empty()) throw HeuristicError("ub: the full instance must cover every day");
  UBReport rep;

  // step 1: aggregated model
  const Milp m1 = build_full_gep(agg.instance);
  const Solution s1 = timed([&] { return solve_milp(m1, options.step1); }, rep.step1.seconds);
  {
    const double t = rep.step1.seconds;
    rep.step1 = outcome(s1, t);
  }
  if (!s1.has_solution()) throw HeuristicError("ub: aggregated model ended " + to_string(s1.status) + " without a solution");
  rep.group_plan = investment_plan(m1, s1.x);

  // step 2: full network, two days, group budgets
  rep.step2_days = options.step2_days.empty() ? select_step2_days(full, agg.instance) : options.step2_days;
  std::sort(rep.step2_days.begin(), rep.step2_days.end());
  for (int d : rep.step2_days) {
    if (d < 0 || d >= full.days) throw HeuristicError("ub: disaggregation day out of range");
  }
  rep.step2_weights.assign(rep.step2_days.size(), static_cast<double>(full.days) / static_cast<double>(rep.step2_days.size()));
  const Milp m2 = build_step2_model(full, agg, rep.group_plan, rep.step2_days);
  const Solution s2 = timed([&] { return solve_milp(m2, options.step2); }, rep.step2.seconds);
  {
    const double t = rep.step2.seconds;
    rep.step2 = outcome(s2, t);
  }
  if (!s2.has_solution()) throw HeuristicError("ub: disaggregation model ended " + to_string(s2.status) + " without a solution");
  rep.node_plan = investment_plan(m2, s2.x);

  // step 3: fixed investments, full-year operations
  const Milp m3 = build_full_gep(full);
  Milp fixed = m3;
  for (const auto& [name, value] : rep.node_plan) {
    if (row_family(name) == "x_op") continue;
    Variable& v = fixed.variable(fixed.variable_index(name));
    v.lo = v.hi = value;
  }
  // integer operating counts follow exactly from the plan; continuous ones are left to the plant-count row
  for (std::size_t n = 0; n < full.power_nodes.size(); ++n) {
    const std::string& node = full.power_nodes[n].id;
    for (std::size_t i = 0; i < full.plant_types.size(); ++i) {
      const std::string& type = full.plant_types[i].name;
      Variable& v = fixed.variable(fixed.variable_index(gep_names::x_op(node, type)));
      if (!v.integer) continue;
      v.lo = v.hi = full.initial_plants(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i)) -
                    plan_value(rep.node_plan, gep_names::x_dec(node, type)) +
                    plan_value(rep.node_plan, gep_names::x_est(node, type));
    }
  }
  const Solution s3 = timed([&] { return solve_lp(fixed, options.step3); }, rep.step3.seconds);
  {
    const double t = rep.step3.seconds;
    rep.step3 = outcome(s3, t);
  }
  if (!s3.has_solution()) throw HeuristicError("ub: full-year operations ended " + to_string(s3.status) + " without a solution");
  rep.ub = s3.objective;
  rep.solution = s3.x;
  rep.feasibility = check_feasibility(m3, s3.x, options.feasibility_tolerance);
  rep.generation_mix = generation_mix(full, m3, s3.x);
  return rep;
}

std::vector<std::string> ledger_header() {
  return {"run_id",          "spatial",         "temporal",        "K",        "groups",
          "ub",              "step1_objective", "step1_gap",       "step2_objective",
          "step3_objective", "feasible",        "max_scaled_violation", "iterations", "nodes"};
}

std::vector<std::string> ledger_row(const std::map<std::string, std::string>& labels, const UBReport& r) {
  auto label = [&](const std::string& k) {
    const auto it = labels.find(k);
    return it == labels.end() ? std::string() : it->second;
  };
  return {label("run_id"),
          label("spatial"),
          label("temporal"),
          label("K"),
          label("groups"),
          format_number(r.ub),
          format_number(r.step1.objective),
          format_number(r.step1.gap),
          format_number(r.step2.objective),
          format_number(r.step3.objective),
          r.feasibility.feasible ? "1" : "0",
          format_number(r.feasibility.max_scaled_violation),
          std::to_string(r.step1.iterations + r.step2.iterations + r.step3.iterations),
          std::to_string(r.step1.nodes + r.step2.nodes + r.step3.nodes)};
}

}  // namespace stagg
