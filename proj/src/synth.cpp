#include "stagg/synth.hpp"

#include "stagg/csv.hpp"
#include "stagg/error.hpp"
#include "stagg/features.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

namespace stagg {

namespace fs = std::filesystem;
using nlohmann::json;

void SynthConfig::validate() const {
  if (power_nodes < 1 || gas_nodes < 1) throw ConfigError("synth: need at least one power and one gas node");
  if (communities < 1 || communities > power_nodes) throw ConfigError("synth: communities must lie in [1, power_nodes]");
  if (days < 1 || archetypes < 1 || archetypes > days) throw ConfigError("synth: archetypes must lie in [1, days]");
  if (hours_per_day < 1) throw ConfigError("synth: hours_per_day must be positive");
  if (!(noise >= 0.0 && noise < 0.5)) throw ConfigError("synth: noise must lie in [0, 0.5)");
  if (!(rps >= 0.0 && rps <= 0.5)) throw ConfigError("synth: rps must lie in [0, 0.5]");
  if (!(emission_reduction >= 0.0 && emission_reduction <= 1.0)) throw ConfigError("synth: emission_reduction must lie in [0, 1]");
}

json SynthConfig::to_json() const {
  return {{"power_nodes", power_nodes}, {"gas_nodes", gas_nodes},   {"communities", communities},
          {"days", days},               {"archetypes", archetypes}, {"hours_per_day", hours_per_day},
          {"noise", noise},             {"rps", rps},               {"emission_reduction", emission_reduction},
          {"emissions_cap", emissions_cap}, {"storage", storage},   {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const json& j) {
  SynthConfig c;
  c.power_nodes = j.value("power_nodes", c.power_nodes);
  c.gas_nodes = j.value("gas_nodes", c.gas_nodes);
  c.communities = j.value("communities", c.communities);
  c.days = j.value("days", c.days);
  c.archetypes = j.value("archetypes", c.archetypes);
  c.hours_per_day = j.value("hours_per_day", c.hours_per_day);
  c.noise = j.value("noise", c.noise);
  c.rps = j.value("rps", c.rps);
  c.emission_reduction = j.value("emission_reduction", c.emission_reduction);
  c.emissions_cap = j.value("emissions_cap", c.emissions_cap);
  c.storage = j.value("storage", c.storage);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

json SynthResult::metadata() const {
  json communities = json::object();
  for (std::size_t i = 0; i < catalog.size(); ++i) communities[catalog[i].id] = community[i];
  return {{"config", config.to_json()}, {"communities", communities}, {"archetypes", archetype}};
}

SynthResult synthesize(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto noisy = [&](double v) { return v * std::max(0.0, 1.0 + cfg.noise * gauss(rng)); };
  const int N = cfg.power_nodes, K = cfg.gas_nodes, C = cfg.communities, H = cfg.hours_per_day, D = cfg.days;
  const int T = D * H;
  const double two_pi = 2.0 * std::numbers::pi;
  // costs are per horizon, so the trade-offs do not drift with its length
  const double f = static_cast<double>(T);

  SynthResult out;
  out.config = cfg;
  GEPInstance& g = out.instance;
  g.name = "synthetic";
  g.days = D;
  g.hours_per_day = H;

  // community traits
  std::vector<double> base(static_cast<std::size_t>(C)), phase(static_cast<std::size_t>(C)), sun(static_cast<std::size_t>(C)),
      wind(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    base[c] = 15.0 + 15.0 * unit(rng);
    phase[c] = static_cast<double>(c) / C + 0.1 * unit(rng);
    // alternate sunny and windy communities
    const double tilt = (c % 2 == 0 ? 0.3 : -0.3) + 0.1 * (unit(rng) - 0.5);
    sun[c] = 1.0 + tilt;
    wind[c] = 1.0 - tilt;
  }
  // archetypes: demand level, solar and wind level, gas heating level
  std::vector<double> a_demand(static_cast<std::size_t>(cfg.archetypes)), a_sun(a_demand), a_wind(a_demand), a_gas(a_demand),
      a_shift(a_demand);
  for (int a = 0; a < cfg.archetypes; ++a) {
    const double s = cfg.archetypes == 1 ? 0.0 : static_cast<double>(a) / (cfg.archetypes - 1);
    a_demand[a] = 0.8 + 0.45 * s;
    a_sun[a] = 0.45 - 0.3 * s;
    a_wind[a] = 0.25 + 0.3 * s;
    a_gas[a] = 0.7 + 0.8 * s;
    a_shift[a] = 0.25 * s;
  }
  out.archetype.resize(static_cast<std::size_t>(D));
  for (int d = 0; d < D; ++d) out.archetype[d] = d * cfg.archetypes / D;

  // catalog
  std::vector<GraphNode> nodes;
  std::vector<int> node_comm;
  for (int n = 0; n < N; ++n) {
    const int c = n % C;
    GraphNode v{"p" + std::to_string(n + 1), kPowerClass, 5.0 * c + 0.6 * gauss(rng), 0.6 * gauss(rng), ""};
    v.region = v.y >= 0.0 ? "north" : "south";
    nodes.push_back(v);
    node_comm.push_back(c);
  }
  for (int k = 0; k < K; ++k) {
    const int c = k % C;
    nodes.push_back(GraphNode{"g" + std::to_string(k + 1), kGasClass, 5.0 * c + 0.3 * gauss(rng), 1.5 + 0.3 * gauss(rng), "north"});
    node_comm.push_back(c);
  }
  out.catalog = NodeCatalog(nodes);
  out.community = node_comm;

  // plant and storage types
  g.plant_types = {
      PlantType{"coal", false, false, 30.0 * f, 20.0 * f, 8.0 * f, 4.0, 2.0, 10.0, 0.0, 20.0, 0.3, 0.5},
      PlantType{"ccgt", false, true, 25.0 * f, 20.0 * f, 6.0 * f, 3.0, 0.0, 7.0, 0.0, 15.0, 0.2, 1.0},
      PlantType{"solar", true, false, 45.0 * f, 100.0 * f, 10.0 * f, 0.0, 0.0, 0.0, 0.0, 10.0, 0.0, 1.0},
      PlantType{"wind", true, false, 60.0 * f, 100.0 * f, 10.0 * f, 0.0, 0.0, 0.0, 0.0, 10.0, 0.0, 1.0},
  };
  if (cfg.storage) g.storage_types = {StorageType{"battery", 2.0 * f, 0.5 * f, 3.0 * f, 0.5 * f, 0.92, 0.92}};

  // series
  g.power_demand = Eigen::MatrixXd(N, T);
  g.capacity_factors["solar"] = Eigen::MatrixXd(N, T);
  g.capacity_factors["wind"] = Eigen::MatrixXd(N, T);
  for (int n = 0; n < N; ++n) {
    const int c = node_comm[n];
    for (int d = 0; d < D; ++d) {
      const int a = out.archetype[d];
      for (int h = 0; h < H; ++h) {
        const int t = d * H + h;
        const double x = (h + 0.5) / H;
        const double shape = 1.0 + 0.25 * std::sin(two_pi * (x + phase[c] + a_shift[a]));
        g.power_demand(n, t) = noisy(base[c] * a_demand[a] * shape);
        const double daylight = std::max(0.0, std::sin(std::numbers::pi * x));
        g.capacity_factors["solar"](n, t) = std::clamp(noisy(a_sun[a] * sun[c] * daylight * 1.4), 0.0, 1.0);
        const double gust = 0.75 + 0.25 * std::cos(two_pi * (x + 0.5 * phase[c]));
        g.capacity_factors["wind"](n, t) = std::clamp(noisy(a_wind[a] * wind[c] * gust), 0.0, 1.0);
      }
    }
  }
  g.gas_demand = Eigen::MatrixXd(K, D);
  std::vector<double> gas_base(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) gas_base[k] = 400.0 + 300.0 * unit(rng);
  for (int k = 0; k < K; ++k) {
    for (int d = 0; d < D; ++d) g.gas_demand(k, d) = noisy(gas_base[k] * a_gas[out.archetype[d]]);
  }

  // nodes, fleet and links
  for (int n = 0; n < N; ++n) {
    PowerNode p{nodes[n].id, {}, {}};
    if (cfg.storage && n % 2 == 0) p.storage = {0};
    p.gas_links = {node_comm[n] % K};
    for (int k = 0; k < K; ++k) {
      if (k % C == node_comm[n] && k != p.gas_links[0]) p.gas_links.push_back(k);
    }
    std::sort(p.gas_links.begin(), p.gas_links.end());
    g.power_nodes.push_back(p);
  }
  for (int k = 0; k < K; ++k) g.gas_nodes.push_back(GasNode{nodes[N + k].id, 0.0, 0.0});
  g.initial_plants = Eigen::MatrixXd::Zero(N, 4);
  for (int n = 0; n < N; ++n) {
    const double mean = g.power_demand.row(n).mean();
    g.initial_plants(n, 0) = std::floor(0.45 * mean / 20.0);
    g.initial_plants(n, 1) = std::ceil(0.45 * mean / 15.0);
  }
  // existing renewables cover 1.5x the renewable share on every day, so the share row never binds hard
  {
    const Eigen::MatrixXd& s = g.capacity_factors["solar"];
    const Eigen::MatrixXd& w = g.capacity_factors["wind"];
    double need = 0.0;
    for (int d = 0; d < D; ++d) {
      const double demand = g.power_demand.middleCols(d * H, H).sum();
      const double per_unit = 10.0 * (s.middleCols(d * H, H).sum() + w.middleCols(d * H, H).sum()) / N;
      if (per_unit > 0.0) need = std::max(need, 1.5 * cfg.rps * demand / per_unit / N);
    }
    for (int n = 0; n < N; ++n) {
      g.initial_plants(n, 2) = std::round(need * 1000.0) / 1000.0;
      g.initial_plants(n, 3) = std::round(need * 1000.0) / 1000.0;
    }
  }

  // gas supply: local demand plus a share of the linked gas-fired burn at full output
  std::vector<double> burn(static_cast<std::size_t>(K), 0.0);
  for (int n = 0; n < N; ++n) {
    const double full = g.initial_plants(n, 1) * 15.0 * H * 7.0;
    const auto& links = g.power_nodes[n].gas_links;
    for (int k : links) burn[k] += full / static_cast<double>(links.size());
  }
  for (int k = 0; k < K; ++k) {
    g.gas_nodes[k].inj_max = std::round(1.05 * g.gas_demand.row(k).maxCoeff() + 0.6 * burn[k]);
  }
  int line = 0;
  for (int k = 0; k + 1 < K; ++k) {
    const double cap = std::round(0.15 * (g.gas_nodes[k].inj_max + g.gas_nodes[k + 1].inj_max));
    g.pipelines.push_back(Pipeline{"l" + std::to_string(++line), k, k + 1, true, cap, 0.0, 0.0});
    g.pipelines.push_back(Pipeline{"l" + std::to_string(++line), k + 1, k, true, cap, 0.0, 0.0});
    g.pipelines.push_back(Pipeline{"l" + std::to_string(++line), k, k + 1, false, 0.0, 2.0 * cap, 40.0 * f});
    g.pipelines.push_back(Pipeline{"l" + std::to_string(++line), k + 1, k, false, 0.0, 2.0 * cap, 40.0 * f});
  }

  g.shed_cost = 2000.0;
  g.ng_price = 3.0;
  g.rng_price = 15.0;
  g.gas_shed_cost = 80.0;
  g.ng_emission_factor = 0.053;
  double ccgt_burn = 0.0;
  for (int n = 0; n < N; ++n) ccgt_burn += g.initial_plants(n, 1) * 15.0 * T * 0.5 * 7.0;
  g.power_emission_baseline = std::round(g.ng_emission_factor * ccgt_burn);
  g.gas_emission_baseline = std::round(g.ng_emission_factor * g.gas_demand.sum());
  g.rps = cfg.rps;
  g.emission_reduction = cfg.emission_reduction;
  g.emissions_cap = cfg.emissions_cap;
  g.validate();
  return out;
}

void write_synth(const SynthResult& r, const std::string& dir) {
  fs::create_directories(dir);
  r.instance.write((fs::path(dir) / "instance").string());
  r.catalog.write_csv((fs::path(dir) / "catalog.csv").string());
  DatasetManifest m;
  m.catalog = "catalog.csv";
  m.days = r.instance.days;
  m.resolutions = {{kPowerClass, r.instance.hours_per_day}, {kGasClass, 1}};
  m.features = {
      ManifestFeature{kPowerClass, "power_demand", FeatureKind::parameter, "instance/power_demand.csv"},
      ManifestFeature{kPowerClass, "cf_solar", FeatureKind::parameter, "instance/cf_solar.csv"},
      ManifestFeature{kPowerClass, "cf_wind", FeatureKind::parameter, "instance/cf_wind.csv"},
      ManifestFeature{kGasClass, "gas_demand", FeatureKind::parameter, "instance/gas_demand.csv"},
  };
  m.presets = {{"A1", {"power_demand"}}, {"A2", {"power_demand", "gas_demand", "cf_solar", "cf_wind"}}};
  m.write((fs::path(dir) / "dataset.yaml").string());
  write_file_atomic((fs::path(dir) / "metadata.json").string(), r.metadata().dump(2) + "\n");
}

}  // namespace stagg
