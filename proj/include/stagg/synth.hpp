#pragma once

// Synthetic power / gas instances with planted node communities and day archetypes.

#include "stagg/gep.hpp"
#include "stagg/graph.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace stagg {

struct SynthConfig {
  int power_nodes = 6;
  int gas_nodes = 2;
  int communities = 2;
  int days = 12;
  int archetypes = 3;
  int hours_per_day = 4;
  double noise = 0.02;  // relative std of the multiplicative noise on every series
  double rps = 0.15;
  double emission_reduction = 0.2;
  bool emissions_cap = true;
  bool storage = true;  // batteries at every other power node
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);  // missing keys keep defaults
};

struct SynthResult {
  SynthConfig config;
  GEPInstance instance;
  NodeCatalog catalog;              // power nodes, then gas nodes
  std::vector<int> community;       // per catalog node
  std::vector<int> archetype;       // per day

  nlohmann::json metadata() const;
};

SynthResult synthesize(const SynthConfig& config);

/// Writes instance/, catalog.csv, dataset.yaml (presets A1, A2) and metadata.json under `dir`.
void write_synth(const SynthResult& result, const std::string& dir);

}  // namespace stagg
