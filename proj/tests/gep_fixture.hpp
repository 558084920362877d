#pragma once

#include "stagg/gep.hpp"

#include <cmath>

namespace testutil {

/// Two power nodes (coal, gas-fired ccgt, solar; a battery at the first node),
/// two gas nodes joined by an existing and a candidate pipeline, 3 days of 4 hours.
inline stagg::GEPInstance small_gep() {
  using namespace stagg;
  GEPInstance g;
  g.name = "small";
  g.days = 3;
  g.hours_per_day = 4;
  PlantType coal{"coal", false, false, 60.0, 5.0, 8.0, 2.0, 2.0, 9.0, 0.0, 10.0, 0.3, 0.5};
  PlantType ccgt{"ccgt", false, true, 40.0, 5.0, 6.0, 1.0, 0.0, 7.0, 0.0, 8.0, 0.2, 1.0};
  PlantType solar{"solar", true, false, 30.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 10.0, 0.0, 1.0};
  g.plant_types = {coal, ccgt, solar};
  g.storage_types = {StorageType{"battery", 3.0, 0.5, 4.0, 0.5, 0.95, 0.95}};
  g.power_nodes = {PowerNode{"p1", {0}, {0}}, PowerNode{"p2", {}, {1}}};
  g.gas_nodes = {GasNode{"g1", 400.0, 0.0}, GasNode{"g2", 50.0, 0.0}};
  g.pipelines = {Pipeline{"l1", 0, 1, true, 60.0, 0.0, 0.0}, Pipeline{"l2", 0, 1, false, 0.0, 200.0, 25.0}};
  g.initial_plants = Eigen::MatrixXd(2, 3);
  g.initial_plants << 1, 1, 1, 0, 1, 0;
  const int T = g.days * g.hours_per_day;
  g.power_demand = Eigen::MatrixXd(2, T);
  g.capacity_factors["solar"] = Eigen::MatrixXd(2, T);
  for (int t = 0; t < T; ++t) {
    const int d = t / g.hours_per_day, h = t % g.hours_per_day;
    const double shape = 1.0 + 0.3 * std::sin(0.5 + h) + 0.1 * d;
    g.power_demand(0, t) = 12.0 * shape;
    g.power_demand(1, t) = 7.0 * shape;
    const double sun = (h == 1 || h == 2) ? 0.7 - 0.1 * d : 0.1;
    g.capacity_factors["solar"](0, t) = sun;
    g.capacity_factors["solar"](1, t) = 0.8 * sun;
  }
  g.gas_demand = Eigen::MatrixXd(2, g.days);
  g.gas_demand << 80, 90, 70, 60, 75, 65;
  g.shed_cost = 500.0;
  g.ng_price = 0.5;
  g.rng_price = 3.0;
  g.gas_shed_cost = 50.0;
  g.ng_emission_factor = 0.05;
  g.power_emission_baseline = 60.0;
  g.gas_emission_baseline = 40.0;
  g.rps = 0.1;
  g.emission_reduction = 0.2;
  g.emissions_cap = true;
  return g;
}

}  // namespace testutil
