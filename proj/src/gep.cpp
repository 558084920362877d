#include "stagg/gep.hpp"

#include "stagg/csv.hpp"
#include "stagg/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace stagg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace gep_names {

namespace {
std::string join(const std::string& kind, std::initializer_list<std::string> parts) {
  std::string s = kind + "[";
  bool first = true;
  for (const auto& p : parts) {
    if (!first) s += ",";
    s += p;
    first = false;
  }
  return s + "]";
}
}  // namespace

std::string x_op(const std::string& n, const std::string& i) { return join("x_op", {n, i}); }
std::string x_est(const std::string& n, const std::string& i) { return join("x_est", {n, i}); }
std::string x_dec(const std::string& n, const std::string& i) { return join("x_dec", {n, i}); }
std::string y_cd(const std::string& n, const std::string& r) { return join("y_cd", {n, r}); }
std::string y_lev(const std::string& n, const std::string& r) { return join("y_lev", {n, r}); }
std::string z(const std::string& l) { return join("z", {l}); }
std::string p(const std::string& n, int day, int hour, const std::string& i) {
  return join("p", {n, std::to_string(day), std::to_string(hour), i});
}
std::string s_lev(const std::string& n, int day, int hour, const std::string& r) {
  return join("s_lev", {n, std::to_string(day), std::to_string(hour), r});
}

}  // namespace gep_names

// ---------------------------------------------------------------------------
// instance

std::vector<int> GEPInstance::operated_days() const {
  if (!rep_days.empty()) return rep_days;
  std::vector<int> d(static_cast<std::size_t>(days));
  for (int i = 0; i < days; ++i) d[static_cast<std::size_t>(i)] = i;
  return d;
}

std::vector<double> GEPInstance::operated_weights() const {
  if (!rep_days.empty()) return weights;
  return std::vector<double>(static_cast<std::size_t>(days), 1.0);
}

int GEPInstance::plant_index(const std::string& plant) const {
  for (std::size_t i = 0; i < plant_types.size(); ++i) {
    if (plant_types[i].name == plant) return static_cast<int>(i);
  }
  throw BuildError("gep: unknown plant type '" + plant + "'");
}

bool GEPInstance::has_gas_fired() const {
  return std::any_of(plant_types.begin(), plant_types.end(), [](const PlantType& t) { return t.gas_fired; });
}

namespace {

template <class T, class F>
void require_unique(const std::vector<T>& items, F key, const std::string& what) {
  std::set<std::string> seen;
  for (const auto& it : items) {
    const std::string k = key(it);
    if (k.empty()) throw BuildError("gep: empty " + what + " name");
    if (!seen.insert(k).second) throw BuildError("gep: duplicate " + what + " '" + k + "'");
  }
}

void require_range(double v, double lo, double hi, const std::string& what) {
  if (!(v >= lo && v <= hi)) {
    std::ostringstream os;
    os << "gep: " << what << " = " << v << " outside [" << lo << ", " << hi << "]";
    throw InputError(os.str());
  }
}

void require_nonnegative(double v, const std::string& what) { require_range(v, 0.0, kInf, what); }

void require_shape(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << "gep: " << what << " is " << m.rows() << "x" << m.cols() << ", expected " << rows << "x" << cols;
    throw BuildError(os.str());
  }
}

}  // namespace

void GEPInstance::validate() const {
  if (days < 1) throw BuildError("gep: days must be positive");
  if (hours_per_day < 1) throw BuildError("gep: hours_per_day must be positive");
  require_unique(plant_types, [](const PlantType& t) { return t.name; }, "plant type");
  require_unique(storage_types, [](const StorageType& t) { return t.name; }, "storage type");
  require_unique(power_nodes, [](const PowerNode& n) { return n.id; }, "power node");
  require_unique(gas_nodes, [](const GasNode& n) { return n.id; }, "gas node");
  require_unique(pipelines, [](const Pipeline& l) { return l.id; }, "pipeline");
  const auto N = static_cast<Eigen::Index>(power_nodes.size());
  const auto K = static_cast<Eigen::Index>(gas_nodes.size());
  const Eigen::Index T = static_cast<Eigen::Index>(days) * hours_per_day;

  for (const PlantType& t : plant_types) {
    const std::string w = "plant type '" + t.name + "' ";
    if (t.vre && t.gas_fired) throw BuildError("gep: " + w + "cannot be both renewable and gas-fired");
    for (const auto& [v, what] : {std::pair{t.inv_cost, "inv_cost"}, {t.dec_cost, "dec_cost"}, {t.fix_cost, "fix_cost"},
                                  {t.var_cost, "var_cost"}, {t.fuel_price, "fuel_price"}, {t.heat_rate, "heat_rate"},
                                  {t.capacity, "capacity"}}) {
      require_nonnegative(v, w + what);
    }
    require_range(t.capture_rate, 0.0, 1.0, w + "capture_rate");
    require_range(t.min_output, 0.0, 1.0, w + "min_output");
    require_range(t.ramp_limit, 0.0, 1.0, w + "ramp_limit");
    if (t.vre) {
      const auto it = capacity_factors.find(t.name);
      if (it == capacity_factors.end()) throw BuildError("gep: missing parameter table 'capacity_factors." + t.name + "'");
      require_shape(it->second, N, T, "capacity_factors." + t.name);
      if (it->second.size() > 0) {
        require_range(it->second.minCoeff(), 0.0, 1.0, "capacity factor of '" + t.name + "'");
        require_range(it->second.maxCoeff(), 0.0, 1.0, "capacity factor of '" + t.name + "'");
      }
    }
  }
  for (const StorageType& s : storage_types) {
    const std::string w = "storage type '" + s.name + "' ";
    for (const auto& [v, what] : {std::pair{s.energy_inv_cost, "energy_inv_cost"}, {s.energy_fix_cost, "energy_fix_cost"},
                                  {s.power_inv_cost, "power_inv_cost"}, {s.power_fix_cost, "power_fix_cost"}}) {
      require_nonnegative(v, w + what);
    }
    require_range(s.charge_eff, 1e-9, 1.0, w + "charge_eff");
    require_range(s.discharge_eff, 1e-9, 1.0, w + "discharge_eff");
  }
  for (const PowerNode& n : power_nodes) {
    for (int r : n.storage) {
      if (r < 0 || r >= static_cast<int>(storage_types.size())) throw BuildError("gep: node '" + n.id + "' has an unknown storage type");
    }
    for (int k : n.gas_links) {
      if (k < 0 || k >= K) throw BuildError("gep: node '" + n.id + "' links to an unknown gas node");
    }
  }
  for (const GasNode& k : gas_nodes) {
    require_nonnegative(k.inj_min, "gas node '" + k.id + "' inj_min");
    require_range(k.inj_max, k.inj_min, kInf, "gas node '" + k.id + "' inj_max");
  }
  for (const Pipeline& l : pipelines) {
    if (l.from < 0 || l.from >= K || l.to < 0 || l.to >= K) throw BuildError("gep: pipeline '" + l.id + "' has an unknown endpoint");
    if (l.from == l.to) throw BuildError("gep: pipeline '" + l.id + "' is a self-loop");
    require_nonnegative(l.initial_capacity, "pipeline '" + l.id + "' initial_capacity");
    require_nonnegative(l.candidate_capacity, "pipeline '" + l.id + "' candidate_capacity");
    require_nonnegative(l.cost, "pipeline '" + l.id + "' cost");
  }
  require_shape(initial_plants, N, static_cast<Eigen::Index>(plant_types.size()), "initial_plants");
  if (initial_plants.size() > 0) require_nonnegative(initial_plants.minCoeff(), "initial_plants");
  require_shape(power_demand, N, T, "power_demand");
  if (power_demand.size() > 0) require_nonnegative(power_demand.minCoeff(), "power_demand");
  require_shape(gas_demand, K, days, "gas_demand");
  if (gas_demand.size() > 0) require_nonnegative(gas_demand.minCoeff(), "gas_demand");
  for (const auto& [v, what] : {std::pair{shed_cost, "shed_cost"}, {ng_price, "ng_price"}, {rng_price, "rng_price"},
                                {gas_shed_cost, "gas_shed_cost"}, {ng_emission_factor, "ng_emission_factor"},
                                {power_emission_baseline, "power_emission_baseline"},
                                {gas_emission_baseline, "gas_emission_baseline"}}) {
    require_nonnegative(v, what);
  }
  require_range(rps, 0.0, 1.0, "rps");
  require_range(emission_reduction, 0.0, 1.0, "emission_reduction");
  if (rep_days.size() != weights.size()) throw BuildError("gep: representative days and weights differ in length");
  for (std::size_t q = 0; q < rep_days.size(); ++q) {
    if (rep_days[q] < 0 || rep_days[q] >= days) throw BuildError("gep: representative day out of range");
    if (q > 0 && rep_days[q] <= rep_days[q - 1]) throw BuildError("gep: representative days must ascend");
    if (!(weights[q] > 0.0)) throw InputError("gep: representative day weights must be positive");
  }
}

namespace {

std::string table_path(const json& tables, const std::string& key, const std::string& dir) {
  if (!tables.contains(key)) throw BuildError("gep: missing parameter table '" + key + "'");
  return (fs::path(dir) / tables.at(key).get<std::string>()).string();
}

double scalar(const json& params, const std::string& key) {
  if (!params.contains(key)) throw BuildError("gep: missing parameter '" + key + "'");
  return params.at(key).get<double>();
}

bool flag(const std::string& cell, const std::string& where) {
  if (cell == "1" || cell == "true") return true;
  if (cell == "0" || cell == "false" || cell.empty()) return false;
  throw IngestionError(where + ": expected 0/1, got '" + cell + "'");
}

std::vector<std::string> split_list(const std::string& cell) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : cell) {
    if (c == ';') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// node_id,v1,...,vT with one row per listed id (any order)
Eigen::MatrixXd read_series(const std::string& path, const std::vector<std::string>& ids, Eigen::Index length,
                            const std::string& table) {
  const CsvTable t = read_csv_file(path);
  const std::size_t c_id = t.column("node_id");
  if (static_cast<Eigen::Index>(t.header.size()) - 1 != length) {
    throw BuildError("gep: table '" + table + "' has " + std::to_string(t.header.size() - 1) + " periods, expected " +
                     std::to_string(length));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(ids.size()), length);
  std::vector<bool> seen(ids.size(), false);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto it = std::find(ids.begin(), ids.end(), t.rows[r][c_id]);
    if (it == ids.end()) throw BuildError("gep: table '" + table + "' names unknown node '" + t.rows[r][c_id] + "'");
    const auto i = static_cast<std::size_t>(it - ids.begin());
    if (seen[i]) throw BuildError("gep: table '" + table + "' repeats node '" + ids[i] + "'");
    seen[i] = true;
    Eigen::Index c = 0;
    for (std::size_t col = 0; col < t.header.size(); ++col) {
      if (col == c_id) continue;
      m(static_cast<Eigen::Index>(i), c++) = t.number(r, col);
    }
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!seen[i]) throw BuildError("gep: table '" + table + "' has no row for node '" + ids[i] + "'");
  }
  return m;
}

void write_series(const std::string& path, const std::vector<std::string>& ids, const Eigen::MatrixXd& m) {
  CsvTable t;
  t.header.push_back("node_id");
  for (Eigen::Index c = 0; c < m.cols(); ++c) t.header.push_back("p" + std::to_string(c + 1));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::vector<std::string> row{ids[i]};
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(format_number(m(static_cast<Eigen::Index>(i), c)));
    t.rows.push_back(std::move(row));
  }
  write_csv_file(path, t);
}

template <class T>
int index_by_name(const std::vector<T>& items, const std::string& name, const std::string& what) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if constexpr (requires { items[i].id; }) {
      if (items[i].id == name) return static_cast<int>(i);
    } else {
      if (items[i].name == name) return static_cast<int>(i);
    }
  }
  throw BuildError("gep: unknown " + what + " '" + name + "'");
}

}  // namespace

GEPInstance GEPInstance::read(const std::string& dir) {
  const std::string manifest = (fs::path(dir) / "instance.json").string();
  json j;
  try {
    j = json::parse(read_file(manifest));
  } catch (const json::parse_error& e) {
    throw ParseError(manifest + ": " + e.what());
  }
  GEPInstance g;
  g.name = j.value("name", "gep");
  if (!j.contains("days") || !j.contains("hours_per_day")) throw BuildError("gep: instance.json needs days and hours_per_day");
  g.days = j.at("days").get<int>();
  g.hours_per_day = j.at("hours_per_day").get<int>();
  if (!j.contains("tables")) throw BuildError("gep: instance.json has no tables");
  if (!j.contains("parameters")) throw BuildError("gep: instance.json has no parameters");
  const json& tables = j.at("tables");
  const json& params = j.at("parameters");

  {
    const CsvTable t = read_csv_file(table_path(tables, "plant_types", dir));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      PlantType p;
      p.name = t.rows[r][t.column("name")];
      const std::string kind = t.rows[r][t.column("kind")];
      if (kind != "vre" && kind != "thermal") throw IngestionError(t.source + ": row " + std::to_string(r + 2) + ": kind must be vre or thermal");
      p.vre = kind == "vre";
      p.gas_fired = flag(t.rows[r][t.column("gas_fired")], t.source);
      p.inv_cost = t.number(r, t.column("inv_cost"));
      p.dec_cost = t.number(r, t.column("dec_cost"));
      p.fix_cost = t.number(r, t.column("fix_cost"));
      p.var_cost = t.number(r, t.column("var_cost"));
      p.fuel_price = t.number(r, t.column("fuel_price"));
      p.heat_rate = t.number(r, t.column("heat_rate"));
      p.capture_rate = t.number(r, t.column("capture_rate"));
      p.capacity = t.number(r, t.column("capacity"));
      p.min_output = t.number(r, t.column("min_output"));
      p.ramp_limit = t.number(r, t.column("ramp_limit"));
      g.plant_types.push_back(p);
    }
  }
  {
    const CsvTable t = read_csv_file(table_path(tables, "storage_types", dir));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      StorageType s;
      s.name = t.rows[r][t.column("name")];
      s.energy_inv_cost = t.number(r, t.column("energy_inv_cost"));
      s.energy_fix_cost = t.number(r, t.column("energy_fix_cost"));
      s.power_inv_cost = t.number(r, t.column("power_inv_cost"));
      s.power_fix_cost = t.number(r, t.column("power_fix_cost"));
      s.charge_eff = t.number(r, t.column("charge_eff"));
      s.discharge_eff = t.number(r, t.column("discharge_eff"));
      g.storage_types.push_back(s);
    }
  }
  {
    const CsvTable t = read_csv_file(table_path(tables, "gas_nodes", dir));
    const auto c_min = t.find_column("inj_min");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      GasNode k;
      k.id = t.rows[r][t.column("id")];
      k.inj_max = t.number(r, t.column("inj_max"));
      if (c_min) k.inj_min = t.number(r, *c_min);
      g.gas_nodes.push_back(k);
    }
  }
  {
    const CsvTable t = read_csv_file(table_path(tables, "power_nodes", dir));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      PowerNode n;
      n.id = t.rows[r][t.column("id")];
      for (const auto& s : split_list(t.rows[r][t.column("storage")])) {
        n.storage.push_back(index_by_name(g.storage_types, s, "storage type"));
      }
      std::sort(n.storage.begin(), n.storage.end());
      g.power_nodes.push_back(n);
    }
  }
  {
    const CsvTable t = read_csv_file(table_path(tables, "power_gas_links", dir));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const int n = index_by_name(g.power_nodes, t.rows[r][t.column("power_node")], "power node");
      const int k = index_by_name(g.gas_nodes, t.rows[r][t.column("gas_node")], "gas node");
      g.power_nodes[static_cast<std::size_t>(n)].gas_links.push_back(k);
    }
    for (auto& n : g.power_nodes) {
      std::sort(n.gas_links.begin(), n.gas_links.end());
      n.gas_links.erase(std::unique(n.gas_links.begin(), n.gas_links.end()), n.gas_links.end());
    }
  }
  {
    const CsvTable t = read_csv_file(table_path(tables, "pipelines", dir));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      Pipeline l;
      l.id = t.rows[r][t.column("id")];
      l.from = index_by_name(g.gas_nodes, t.rows[r][t.column("from")], "gas node");
      l.to = index_by_name(g.gas_nodes, t.rows[r][t.column("to")], "gas node");
      l.existing = flag(t.rows[r][t.column("existing")], t.source);
      l.initial_capacity = t.number(r, t.column("initial_capacity"));
      l.candidate_capacity = t.number(r, t.column("candidate_capacity"));
      l.cost = t.number(r, t.column("cost"));
      g.pipelines.push_back(l);
    }
  }
  std::vector<std::string> power_ids, gas_ids, plant_names;
  for (const auto& n : g.power_nodes) power_ids.push_back(n.id);
  for (const auto& k : g.gas_nodes) gas_ids.push_back(k.id);
  for (const auto& p : g.plant_types) plant_names.push_back(p.name);
  {
    const CsvTable t = read_csv_file(table_path(tables, "initial_plants", dir));
    g.initial_plants = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(power_ids.size()),
                                             static_cast<Eigen::Index>(plant_names.size()));
    const std::size_t c_id = t.column("node_id");
    std::vector<bool> seen(power_ids.size(), false);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const int n = index_by_name(g.power_nodes, t.rows[r][c_id], "power node");
      seen[static_cast<std::size_t>(n)] = true;
      for (std::size_t i = 0; i < plant_names.size(); ++i) {
        g.initial_plants(n, static_cast<Eigen::Index>(i)) = t.number(r, t.column(plant_names[i]));
      }
    }
    for (std::size_t n = 0; n < seen.size(); ++n) {
      if (!seen[n]) throw BuildError("gep: table 'initial_plants' has no row for node '" + power_ids[n] + "'");
    }
  }
  const Eigen::Index T = static_cast<Eigen::Index>(g.days) * g.hours_per_day;
  g.power_demand = read_series(table_path(tables, "power_demand", dir), power_ids, T, "power_demand");
  g.gas_demand = read_series(table_path(tables, "gas_demand", dir), gas_ids, g.days, "gas_demand");
  for (const auto& p : g.plant_types) {
    if (!p.vre) continue;
    if (!tables.contains("capacity_factors") || !tables.at("capacity_factors").contains(p.name)) {
      throw BuildError("gep: missing parameter table 'capacity_factors." + p.name + "'");
    }
    g.capacity_factors[p.name] = read_series(
        (fs::path(dir) / tables.at("capacity_factors").at(p.name).get<std::string>()).string(), power_ids, T,
        "capacity_factors." + p.name);
  }

  g.shed_cost = scalar(params, "shed_cost");
  g.ng_price = scalar(params, "ng_price");
  g.rng_price = scalar(params, "rng_price");
  g.gas_shed_cost = scalar(params, "gas_shed_cost");
  g.ng_emission_factor = scalar(params, "ng_emission_factor");
  g.power_emission_baseline = scalar(params, "power_emission_baseline");
  g.gas_emission_baseline = scalar(params, "gas_emission_baseline");
  g.rps = scalar(params, "rps");
  g.emission_reduction = scalar(params, "emission_reduction");
  g.emissions_cap = params.value("emissions_cap", true);
  if (j.contains("representative_days")) {
    g.rep_days = j.at("representative_days").at("days").get<std::vector<int>>();
    g.weights = j.at("representative_days").at("weights").get<std::vector<double>>();
  }
  g.validate();
  return g;
}

void GEPInstance::write(const std::string& dir) const {
  validate();
  fs::create_directories(dir);
  auto path = [&](const std::string& f) { return (fs::path(dir) / f).string(); };
  {
    CsvTable t;
    t.header = {"name", "kind", "gas_fired", "inv_cost", "dec_cost", "fix_cost", "var_cost", "fuel_price",
                "heat_rate", "capture_rate", "capacity", "min_output", "ramp_limit"};
    for (const auto& p : plant_types) {
      t.rows.push_back({p.name, p.vre ? "vre" : "thermal", p.gas_fired ? "1" : "0", format_number(p.inv_cost),
                        format_number(p.dec_cost), format_number(p.fix_cost), format_number(p.var_cost),
                        format_number(p.fuel_price), format_number(p.heat_rate), format_number(p.capture_rate),
                        format_number(p.capacity), format_number(p.min_output), format_number(p.ramp_limit)});
    }
    write_csv_file(path("plant_types.csv"), t);
  }
  {
    CsvTable t;
    t.header = {"name", "energy_inv_cost", "energy_fix_cost", "power_inv_cost", "power_fix_cost", "charge_eff",
                "discharge_eff"};
    for (const auto& s : storage_types) {
      t.rows.push_back({s.name, format_number(s.energy_inv_cost), format_number(s.energy_fix_cost),
                        format_number(s.power_inv_cost), format_number(s.power_fix_cost), format_number(s.charge_eff),
                        format_number(s.discharge_eff)});
    }
    write_csv_file(path("storage_types.csv"), t);
  }
  {
    CsvTable t;
    t.header = {"id", "storage"};
    for (const auto& n : power_nodes) {
      std::string s;
      for (int r : n.storage) s += (s.empty() ? "" : ";") + storage_types[static_cast<std::size_t>(r)].name;
      t.rows.push_back({n.id, s});
    }
    write_csv_file(path("power_nodes.csv"), t);
  }
  {
    CsvTable t;
    t.header = {"id", "inj_max", "inj_min"};
    for (const auto& k : gas_nodes) t.rows.push_back({k.id, format_number(k.inj_max), format_number(k.inj_min)});
    write_csv_file(path("gas_nodes.csv"), t);
  }
  {
    CsvTable t;
    t.header = {"power_node", "gas_node"};
    for (const auto& n : power_nodes) {
      for (int k : n.gas_links) t.rows.push_back({n.id, gas_nodes[static_cast<std::size_t>(k)].id});
    }
    write_csv_file(path("power_gas_links.csv"), t);
  }
  {
    CsvTable t;
    t.header = {"id", "from", "to", "existing", "initial_capacity", "candidate_capacity", "cost"};
    for (const auto& l : pipelines) {
      t.rows.push_back({l.id, gas_nodes[static_cast<std::size_t>(l.from)].id, gas_nodes[static_cast<std::size_t>(l.to)].id,
                        l.existing ? "1" : "0", format_number(l.initial_capacity), format_number(l.candidate_capacity),
                        format_number(l.cost)});
    }
    write_csv_file(path("pipelines.csv"), t);
  }
  std::vector<std::string> power_ids, gas_ids;
  for (const auto& n : power_nodes) power_ids.push_back(n.id);
  for (const auto& k : gas_nodes) gas_ids.push_back(k.id);
  {
    CsvTable t;
    t.header = {"node_id"};
    for (const auto& p : plant_types) t.header.push_back(p.name);
    for (std::size_t n = 0; n < power_ids.size(); ++n) {
      std::vector<std::string> row{power_ids[n]};
      for (Eigen::Index i = 0; i < initial_plants.cols(); ++i) {
        row.push_back(format_number(initial_plants(static_cast<Eigen::Index>(n), i)));
      }
      t.rows.push_back(std::move(row));
    }
    write_csv_file(path("initial_plants.csv"), t);
  }
  write_series(path("power_demand.csv"), power_ids, power_demand);
  write_series(path("gas_demand.csv"), gas_ids, gas_demand);
  json cf = json::object();
  for (const auto& [type, m] : capacity_factors) {
    const std::string f = "cf_" + type + ".csv";
    write_series(path(f), power_ids, m);
    cf[type] = f;
  }
  json j;
  j["name"] = name;
  j["days"] = days;
  j["hours_per_day"] = hours_per_day;
  j["tables"] = {{"plant_types", "plant_types.csv"},   {"storage_types", "storage_types.csv"},
                 {"power_nodes", "power_nodes.csv"},   {"gas_nodes", "gas_nodes.csv"},
                 {"power_gas_links", "power_gas_links.csv"}, {"pipelines", "pipelines.csv"},
                 {"initial_plants", "initial_plants.csv"}, {"power_demand", "power_demand.csv"},
                 {"gas_demand", "gas_demand.csv"},     {"capacity_factors", cf}};
  j["parameters"] = {{"shed_cost", shed_cost},
                     {"ng_price", ng_price},
                     {"rng_price", rng_price},
                     {"gas_shed_cost", gas_shed_cost},
                     {"ng_emission_factor", ng_emission_factor},
                     {"power_emission_baseline", power_emission_baseline},
                     {"gas_emission_baseline", gas_emission_baseline},
                     {"rps", rps},
                     {"emission_reduction", emission_reduction},
                     {"emissions_cap", emissions_cap}};
  if (!rep_days.empty()) j["representative_days"] = {{"days", rep_days}, {"weights", weights}};
  write_file_atomic(path("instance.json"), j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// builder

namespace {

struct Columns {
  std::vector<std::vector<int>> x_op, x_est, x_dec;  // [n][i]
  std::vector<std::vector<int>> y_cd, y_lev;          // [n][slot of storage]
  std::vector<int> z;                                 // [l], -1 for existing lines
  // operations, indexed by representative day q and 0-based hour h
  std::vector<std::vector<std::vector<std::vector<int>>>> p;  // [q][n][h][i]
  std::vector<std::vector<std::vector<int>>> a_e;             // [q][n][h]
  std::vector<std::vector<std::vector<std::vector<int>>>> s_ch, s_dis, s_lev;  // [q][n][slot][h] (s_lev: h = 0..H)
  std::vector<std::vector<int>> g, a_g, a_rng;  // [q][k]
  std::vector<std::vector<int>> f_g;            // [q][l]
  std::vector<std::map<std::pair<int, int>, int>> f_ge;  // [q][(k, n)]
};

std::string idx(std::initializer_list<std::string> parts) {
  std::string s = "[";
  bool first = true;
  for (const auto& p : parts) {
    if (!first) s += ",";
    s += p;
    first = false;
  }
  return s + "]";
}

}  // namespace

Milp build_full_gep(const GEPInstance& in) {
  in.validate();
  namespace nm = gep_names;
  const std::vector<int> days = in.operated_days();
  const std::vector<double> w = in.operated_weights();
  const int Q = static_cast<int>(days.size());
  const int H = in.hours_per_day;
  const int N = static_cast<int>(in.power_nodes.size());
  const int K = static_cast<int>(in.gas_nodes.size());
  const int P = static_cast<int>(in.plant_types.size());
  const int L = static_cast<int>(in.pipelines.size());
  const bool coupled = in.has_gas_fired();
  auto ds = [&](int q) { return std::to_string(days[static_cast<std::size_t>(q)] + 1); };
  auto hs = [](int h) { return std::to_string(h); };
  auto col = [&](int q, int h) { return static_cast<Eigen::Index>(days[static_cast<std::size_t>(q)]) * H + h; };
  const auto& nodes = in.power_nodes;
  const auto& types = in.plant_types;

  Milp m;
  m.name = "GEP";
  Columns c;
  c.x_op.assign(static_cast<std::size_t>(N), std::vector<int>(static_cast<std::size_t>(P)));
  c.x_est = c.x_dec = c.x_op;
  for (int n = 0; n < N; ++n) {
    for (int i = 0; i < P; ++i) {
      const PlantType& t = types[static_cast<std::size_t>(i)];
      const std::string& id = nodes[static_cast<std::size_t>(n)].id;
      const bool integer = !t.vre;
      c.x_op[n][i] = m.add_variable(nm::x_op(id, t.name), 0.0, kInf, t.fix_cost, integer);
      c.x_est[n][i] = m.add_variable(nm::x_est(id, t.name), 0.0, kInf, t.inv_cost, integer);
      c.x_dec[n][i] = m.add_variable(nm::x_dec(id, t.name), 0.0, in.initial_plants(n, i), t.dec_cost, integer);
    }
  }
  c.y_cd.resize(static_cast<std::size_t>(N));
  c.y_lev.resize(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    for (int r : nodes[static_cast<std::size_t>(n)].storage) {
      const StorageType& s = in.storage_types[static_cast<std::size_t>(r)];
      const std::string& id = nodes[static_cast<std::size_t>(n)].id;
      c.y_cd[n].push_back(m.add_variable(nm::y_cd(id, s.name), 0.0, kInf, s.power_inv_cost + s.power_fix_cost));
      c.y_lev[n].push_back(m.add_variable(nm::y_lev(id, s.name), 0.0, kInf, s.energy_inv_cost + s.energy_fix_cost));
    }
  }
  c.z.assign(static_cast<std::size_t>(L), -1);
  for (int l = 0; l < L; ++l) {
    const Pipeline& pl = in.pipelines[static_cast<std::size_t>(l)];
    if (!pl.existing) c.z[l] = m.add_binary(nm::z(pl.id), pl.cost);
  }

  c.p.resize(static_cast<std::size_t>(Q));
  c.a_e.resize(static_cast<std::size_t>(Q));
  c.s_ch.resize(static_cast<std::size_t>(Q));
  c.s_dis.resize(static_cast<std::size_t>(Q));
  c.s_lev.resize(static_cast<std::size_t>(Q));
  c.g.resize(static_cast<std::size_t>(Q));
  c.a_g.resize(static_cast<std::size_t>(Q));
  c.a_rng.resize(static_cast<std::size_t>(Q));
  c.f_g.resize(static_cast<std::size_t>(Q));
  c.f_ge.resize(static_cast<std::size_t>(Q));
  for (int q = 0; q < Q; ++q) {
    const double wq = w[static_cast<std::size_t>(q)];
    c.p[q].assign(static_cast<std::size_t>(N), std::vector<std::vector<int>>(static_cast<std::size_t>(H), std::vector<int>(static_cast<std::size_t>(P))));
    c.a_e[q].assign(static_cast<std::size_t>(N), std::vector<int>(static_cast<std::size_t>(H)));
    c.s_ch[q].resize(static_cast<std::size_t>(N));
    c.s_dis[q].resize(static_cast<std::size_t>(N));
    c.s_lev[q].resize(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) {
      const std::string& id = nodes[static_cast<std::size_t>(n)].id;
      for (int h = 0; h < H; ++h) {
        for (int i = 0; i < P; ++i) {
          const PlantType& t = types[static_cast<std::size_t>(i)];
          const double fuel = t.gas_fired ? 0.0 : t.fuel_price * t.heat_rate;
          c.p[q][n][h][i] = m.add_variable(nm::p(id, days[static_cast<std::size_t>(q)] + 1, h + 1, t.name), 0.0, kInf,
                                           wq * (t.var_cost + fuel));
        }
        c.a_e[q][n][h] = m.add_variable("a_e" + idx({id, ds(q), hs(h + 1)}), 0.0, kInf, wq * in.shed_cost);
      }
      for (int r : nodes[static_cast<std::size_t>(n)].storage) {
        const std::string& sname = in.storage_types[static_cast<std::size_t>(r)].name;
        std::vector<int> ch, dis, lev;
        for (int h = 0; h < H; ++h) {
          ch.push_back(m.add_variable("s_ch" + idx({id, ds(q), hs(h + 1), sname}), 0.0, kInf, 0.0));
          dis.push_back(m.add_variable("s_dis" + idx({id, ds(q), hs(h + 1), sname}), 0.0, kInf, 0.0));
        }
        for (int h = 0; h <= H; ++h) {
          lev.push_back(m.add_variable(nm::s_lev(id, days[static_cast<std::size_t>(q)] + 1, h, sname), 0.0, kInf, 0.0));
        }
        c.s_ch[q][n].push_back(ch);
        c.s_dis[q][n].push_back(dis);
        c.s_lev[q][n].push_back(lev);
      }
    }
    for (int k = 0; k < K; ++k) {
      const std::string& id = in.gas_nodes[static_cast<std::size_t>(k)].id;
      c.g[q].push_back(m.add_variable("g" + idx({id, ds(q)}), 0.0, kInf, wq * in.ng_price));
      c.a_rng[q].push_back(m.add_variable("a_rng" + idx({id, ds(q)}), 0.0, kInf, wq * in.rng_price));
      c.a_g[q].push_back(m.add_variable("a_g" + idx({id, ds(q)}), 0.0, kInf, wq * in.gas_shed_cost));
    }
    for (int l = 0; l < L; ++l) {
      c.f_g[q].push_back(m.add_variable("f_g" + idx({in.pipelines[static_cast<std::size_t>(l)].id, ds(q)}), 0.0, kInf, 0.0));
    }
    if (coupled) {
      for (int n = 0; n < N; ++n) {
        for (int k : nodes[static_cast<std::size_t>(n)].gas_links) {
          c.f_ge[q][{k, n}] = m.add_variable(
              "f_ge" + idx({in.gas_nodes[static_cast<std::size_t>(k)].id, nodes[static_cast<std::size_t>(n)].id, ds(q)}), 0.0,
              kInf, 0.0);
        }
      }
    }
  }

  using Coefs = std::vector<std::pair<int, double>>;
  // investment balance
  for (int n = 0; n < N; ++n) {
    for (int i = 0; i < P; ++i) {
      m.add_eq("plant_count" + idx({nodes[static_cast<std::size_t>(n)].id, types[static_cast<std::size_t>(i)].name}),
               {{c.x_op[n][i], 1.0}, {c.x_est[n][i], -1.0}, {c.x_dec[n][i], 1.0}}, in.initial_plants(n, i));
    }
  }
  auto each_hour = [&](auto&& f) {
    for (int q = 0; q < Q; ++q) {
      for (int n = 0; n < N; ++n) {
        for (int h = 0; h < H; ++h) f(q, n, h);
      }
    }
  };
  auto hour_name = [&](const std::string& family, int q, int n, int h, const std::string& extra) {
    return family + idx({nodes[static_cast<std::size_t>(n)].id, ds(q), hs(h + 1), extra});
  };
  // thermal output limits
  each_hour([&](int q, int n, int h) {
    for (int i = 0; i < P; ++i) {
      const PlantType& t = types[static_cast<std::size_t>(i)];
      if (t.vre) continue;
      m.add_ge(hour_name("thermal_min", q, n, h, t.name), {{c.p[q][n][h][i], 1.0}, {c.x_op[n][i], -t.min_output * t.capacity}}, 0.0);
    }
  });
  each_hour([&](int q, int n, int h) {
    for (int i = 0; i < P; ++i) {
      const PlantType& t = types[static_cast<std::size_t>(i)];
      if (t.vre) continue;
      m.add_le(hour_name("thermal_max", q, n, h, t.name), {{c.p[q][n][h][i], 1.0}, {c.x_op[n][i], -t.capacity}}, 0.0);
    }
  });
  // ramping, the day's first hour following its last
  for (const char* dir : {"ramp_up", "ramp_down"}) {
    const double sign = std::string(dir) == "ramp_up" ? 1.0 : -1.0;
    each_hour([&](int q, int n, int h) {
      const int prev = (h + H - 1) % H;
      for (int i = 0; i < P; ++i) {
        const PlantType& t = types[static_cast<std::size_t>(i)];
        if (t.vre) continue;
        const double room = (t.ramp_limit + std::max(t.min_output, t.ramp_limit)) * t.capacity;
        m.add_le(hour_name(dir, q, n, h, t.name),
                 {{c.p[q][n][h][i], sign}, {c.p[q][n][prev][i], -sign}, {c.x_op[n][i], -room}}, 0.0);
      }
    });
  }
  each_hour([&](int q, int n, int h) {
    for (int i = 0; i < P; ++i) {
      const PlantType& t = types[static_cast<std::size_t>(i)];
      if (!t.vre) continue;
      const double rho = in.capacity_factors.at(t.name)(n, col(q, h));
      m.add_le(hour_name("vre_cap", q, n, h, t.name), {{c.p[q][n][h][i], 1.0}, {c.x_op[n][i], -rho * t.capacity}}, 0.0);
    }
  });
  each_hour([&](int q, int n, int h) {
    m.add_le("shed_cap" + idx({nodes[static_cast<std::size_t>(n)].id, ds(q), hs(h + 1)}), {{c.a_e[q][n][h], 1.0}},
             in.power_demand(n, col(q, h)));
  });
  // copper-plate balance
  for (int q = 0; q < Q; ++q) {
    for (int h = 0; h < H; ++h) {
      Coefs row;
      double demand = 0.0;
      for (int n = 0; n < N; ++n) {
        for (int i = 0; i < P; ++i) row.emplace_back(c.p[q][n][h][i], 1.0);
        for (std::size_t s = 0; s < c.s_ch[q][n].size(); ++s) {
          row.emplace_back(c.s_dis[q][n][s][h], 1.0);
          row.emplace_back(c.s_ch[q][n][s][h], -1.0);
        }
        row.emplace_back(c.a_e[q][n][h], 1.0);
        demand += in.power_demand(n, col(q, h));
      }
      m.add_eq("power_balance" + idx({ds(q), hs(h + 1)}), row, demand);
    }
  }
  // storage
  auto each_store = [&](auto&& f) {
    for (int q = 0; q < Q; ++q) {
      for (int n = 0; n < N; ++n) {
        const auto& st = nodes[static_cast<std::size_t>(n)].storage;
        for (std::size_t s = 0; s < st.size(); ++s) f(q, n, static_cast<int>(s), in.storage_types[static_cast<std::size_t>(st[s])]);
      }
    }
  };
  each_store([&](int q, int n, int s, const StorageType& st) {
    for (int h = 0; h < H; ++h) {
      m.add_eq(hour_name("storage_level", q, n, h, st.name),
               {{c.s_lev[q][n][s][h + 1], 1.0}, {c.s_lev[q][n][s][h], -1.0}, {c.s_ch[q][n][s][h], -st.charge_eff},
                {c.s_dis[q][n][s][h], 1.0 / st.discharge_eff}},
               0.0);
    }
  });
  each_store([&](int q, int n, int s, const StorageType& st) {
    for (int h = 0; h < H; ++h) {
      m.add_le(hour_name("storage_charge_cap", q, n, h, st.name), {{c.s_ch[q][n][s][h], 1.0}, {c.y_cd[n][s], -1.0}}, 0.0);
    }
  });
  each_store([&](int q, int n, int s, const StorageType& st) {
    for (int h = 0; h < H; ++h) {
      m.add_le(hour_name("storage_discharge_cap", q, n, h, st.name), {{c.s_dis[q][n][s][h], 1.0}, {c.y_cd[n][s], -1.0}}, 0.0);
    }
  });
  each_store([&](int q, int n, int s, const StorageType& st) {
    for (int h = 0; h < H; ++h) {
      m.add_le(hour_name("storage_energy_cap", q, n, h, st.name), {{c.s_lev[q][n][s][h + 1], 1.0}, {c.y_lev[n][s], -1.0}}, 0.0);
    }
  });
  each_store([&](int q, int n, int s, const StorageType& st) {
    m.add_eq("storage_wrap" + idx({nodes[static_cast<std::size_t>(n)].id, ds(q), st.name}),
             {{c.s_lev[q][n][s][0], 1.0}, {c.s_lev[q][n][s][static_cast<std::size_t>(H)], -1.0}}, 0.0);
  });
  // renewable share
  {
    Coefs row;
    double demand = 0.0;
    for (int q = 0; q < Q; ++q) {
      const double wq = w[static_cast<std::size_t>(q)];
      for (int n = 0; n < N; ++n) {
        for (int h = 0; h < H; ++h) {
          for (int i = 0; i < P; ++i) {
            if (types[static_cast<std::size_t>(i)].vre) row.emplace_back(c.p[q][n][h][i], wq);
          }
          demand += wq * in.power_demand(n, col(q, h));
        }
      }
    }
    m.add_ge("rps", row, in.rps * demand);
  }
  // gas network
  for (int q = 0; q < Q; ++q) {
    const int d = days[static_cast<std::size_t>(q)];
    for (int k = 0; k < K; ++k) {
      Coefs row{{c.g[q][k], 1.0}, {c.a_rng[q][k], 1.0}, {c.a_g[q][k], 1.0}};
      for (int l = 0; l < L; ++l) {
        const Pipeline& pl = in.pipelines[static_cast<std::size_t>(l)];
        if (pl.from == k) row.emplace_back(c.f_g[q][l], -1.0);
        if (pl.to == k) row.emplace_back(c.f_g[q][l], 1.0);
      }
      for (const auto& [kn, j] : c.f_ge[q]) {
        if (kn.first == k) row.emplace_back(j, -1.0);
      }
      m.add_eq("gas_balance" + idx({in.gas_nodes[static_cast<std::size_t>(k)].id, ds(q)}), row, in.gas_demand(k, d));
    }
  }
  for (int q = 0; q < Q; ++q) {
    for (int k = 0; k < K; ++k) {
      const GasNode& gn = in.gas_nodes[static_cast<std::size_t>(k)];
      m.add_row("gas_supply" + idx({gn.id, ds(q)}), {{c.g[q][k], 1.0}}, gn.inj_min, gn.inj_max);
    }
  }
  for (int q = 0; q < Q; ++q) {
    const int d = days[static_cast<std::size_t>(q)];
    for (int k = 0; k < K; ++k) {
      m.add_le("gas_unserved_cap" + idx({in.gas_nodes[static_cast<std::size_t>(k)].id, ds(q)}),
               {{c.a_rng[q][k], 1.0}, {c.a_g[q][k], 1.0}}, in.gas_demand(k, d));
    }
  }
  for (int q = 0; q < Q; ++q) {
    for (int k = 0; k < K; ++k) {
      const GasNode& gn = in.gas_nodes[static_cast<std::size_t>(k)];
      m.add_le("rng_cap" + idx({gn.id, ds(q)}), {{c.a_rng[q][k], 1.0}}, gn.inj_max);
    }
  }
  for (int q = 0; q < Q; ++q) {
    for (int l = 0; l < L; ++l) {
      const Pipeline& pl = in.pipelines[static_cast<std::size_t>(l)];
      if (pl.existing) m.add_le("pipe_existing" + idx({pl.id, ds(q)}), {{c.f_g[q][l], 1.0}}, pl.initial_capacity);
    }
  }
  for (int q = 0; q < Q; ++q) {
    for (int l = 0; l < L; ++l) {
      const Pipeline& pl = in.pipelines[static_cast<std::size_t>(l)];
      if (!pl.existing) {
        m.add_le("pipe_candidate" + idx({pl.id, ds(q)}), {{c.f_g[q][l], 1.0}, {c.z[l], -pl.candidate_capacity}}, 0.0);
      }
    }
  }
  // coupling: gas burned by each node's gas-fired plants over the day
  if (coupled) {
    for (int q = 0; q < Q; ++q) {
      for (int n = 0; n < N; ++n) {
        Coefs row;
        for (const auto& [kn, j] : c.f_ge[q]) {
          if (kn.second == n) row.emplace_back(j, 1.0);
        }
        for (int h = 0; h < H; ++h) {
          for (int i = 0; i < P; ++i) {
            const PlantType& t = types[static_cast<std::size_t>(i)];
            if (t.gas_fired) row.emplace_back(c.p[q][n][h][i], -t.heat_rate);
          }
        }
        m.add_eq("gas_to_power" + idx({nodes[static_cast<std::size_t>(n)].id, ds(q)}), row, 0.0);
      }
    }
  }
  if (in.emissions_cap) {
    Coefs row;
    double gas_demand = 0.0;
    const double eg = in.ng_emission_factor;
    for (int q = 0; q < Q; ++q) {
      const double wq = w[static_cast<std::size_t>(q)];
      for (int n = 0; n < N; ++n) {
        for (int h = 0; h < H; ++h) {
          for (int i = 0; i < P; ++i) {
            const PlantType& t = types[static_cast<std::size_t>(i)];
            if (t.gas_fired) row.emplace_back(c.p[q][n][h][i], wq * (1.0 - t.capture_rate) * eg * t.heat_rate);
          }
        }
      }
      for (int k = 0; k < K; ++k) {
        row.emplace_back(c.a_rng[q][k], -wq * eg);
        row.emplace_back(c.a_g[q][k], -wq * eg);
        gas_demand += wq * in.gas_demand(k, days[static_cast<std::size_t>(q)]);
      }
    }
    const double cap = (1.0 - in.emission_reduction) * (in.power_emission_baseline + in.gas_emission_baseline);
    m.add_le("emissions", row, cap - eg * gas_demand);
  }
  return m;
}

std::map<std::string, int> expected_family_counts(const GEPInstance& in) {
  const int Q = static_cast<int>(in.operated_days().size());
  const int H = in.hours_per_day;
  const int N = static_cast<int>(in.power_nodes.size());
  const int K = static_cast<int>(in.gas_nodes.size());
  int thermal = 0, vre = 0, stores = 0, existing = 0, candidate = 0;
  for (const auto& t : in.plant_types) (t.vre ? vre : thermal)++;
  for (const auto& n : in.power_nodes) stores += static_cast<int>(n.storage.size());
  for (const auto& l : in.pipelines) (l.existing ? existing : candidate)++;
  std::map<std::string, int> out{
      {"plant_count", N * static_cast<int>(in.plant_types.size())},
      {"thermal_min", N * Q * H * thermal},
      {"thermal_max", N * Q * H * thermal},
      {"ramp_up", N * Q * H * thermal},
      {"ramp_down", N * Q * H * thermal},
      {"vre_cap", N * Q * H * vre},
      {"shed_cap", N * Q * H},
      {"power_balance", Q * H},
      {"storage_level", stores * Q * H},
      {"storage_charge_cap", stores * Q * H},
      {"storage_discharge_cap", stores * Q * H},
      {"storage_energy_cap", stores * Q * H},
      {"storage_wrap", stores * Q},
      {"rps", 1},
      {"gas_balance", K * Q},
      {"gas_supply", K * Q},
      {"gas_unserved_cap", K * Q},
      {"rng_cap", K * Q},
      {"pipe_existing", existing * Q},
      {"pipe_candidate", candidate * Q},
  };
  if (in.has_gas_fired()) out["gas_to_power"] = N * Q;
  if (in.emissions_cap) out["emissions"] = 1;
  for (auto it = out.begin(); it != out.end();) {
    it = it->second == 0 ? out.erase(it) : std::next(it);
  }
  return out;
}

// ---------------------------------------------------------------------------
// aggregation

std::vector<std::pair<std::string, std::string>> instance_nodes(const GEPInstance& instance) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& n : instance.power_nodes) out.emplace_back(n.id, kPowerClass);
  for (const auto& k : instance.gas_nodes) out.emplace_back(k.id, kGasClass);
  return out;
}

AggregatedInstance aggregate_instance(const GEPInstance& in, const SpatialAggregation& spatial,
                                      const TemporalAggregation& temporal) {
  in.validate();
  if (!in.rep_days.empty()) throw InputError("aggregate: instance already has representative days");
  if (temporal.periods() != in.days) {
    throw InputError("aggregate: temporal aggregation covers " + std::to_string(temporal.periods()) + " days, instance has " +
                     std::to_string(in.days));
  }
  std::unordered_map<std::string, std::size_t> at;
  for (std::size_t i = 0; i < spatial.node_ids.size(); ++i) at.emplace(spatial.node_ids[i], i);
  auto group_of = [&](const std::string& id, const std::string& cls) {
    const auto it = at.find(id);
    if (it == at.end()) throw InputError("aggregate: node '" + id + "' is not covered by the spatial aggregation");
    const int g = spatial.group[it->second];
    if (spatial.node_class[it->second] != cls || spatial.group_class[static_cast<std::size_t>(g - 1)] != cls) {
      throw InputError("aggregate: node '" + id + "' sits in a group of another class");
    }
    return g;
  };

  AggregatedInstance out;
  GEPInstance& a = out.instance;
  a.name = in.name;
  a.hours_per_day = in.hours_per_day;
  a.days = in.days;
  a.plant_types = in.plant_types;
  a.storage_types = in.storage_types;
  a.shed_cost = in.shed_cost;
  a.ng_price = in.ng_price;
  a.rng_price = in.rng_price;
  a.gas_shed_cost = in.gas_shed_cost;
  a.ng_emission_factor = in.ng_emission_factor;
  a.power_emission_baseline = in.power_emission_baseline;
  a.gas_emission_baseline = in.gas_emission_baseline;
  a.rps = in.rps;
  a.emission_reduction = in.emission_reduction;
  a.emissions_cap = in.emissions_cap;

  // groups in ascending id order, per class
  std::map<int, std::vector<int>> power_groups, gas_groups;
  for (std::size_t n = 0; n < in.power_nodes.size(); ++n) {
    power_groups[group_of(in.power_nodes[n].id, kPowerClass)].push_back(static_cast<int>(n));
  }
  for (std::size_t k = 0; k < in.gas_nodes.size(); ++k) {
    gas_groups[group_of(in.gas_nodes[k].id, kGasClass)].push_back(static_cast<int>(k));
  }
  std::vector<int> gas_new(in.gas_nodes.size());
  for (const auto& [g, members] : gas_groups) {
    GasNode k;
    k.id = members.size() == 1 ? in.gas_nodes[static_cast<std::size_t>(members[0])].id : "G" + std::to_string(g);
    for (int m : members) {
      k.inj_max += in.gas_nodes[static_cast<std::size_t>(m)].inj_max;
      k.inj_min += in.gas_nodes[static_cast<std::size_t>(m)].inj_min;
      gas_new[static_cast<std::size_t>(m)] = static_cast<int>(a.gas_nodes.size());
    }
    a.gas_nodes.push_back(k);
    out.gas_members.push_back(members);
  }
  const auto Np = static_cast<Eigen::Index>(power_groups.size());
  const Eigen::Index T = in.power_demand.cols();
  a.initial_plants = Eigen::MatrixXd::Zero(Np, in.initial_plants.cols());
  a.power_demand = Eigen::MatrixXd::Zero(Np, T);
  for (const auto& [type, cf] : in.capacity_factors) a.capacity_factors[type] = Eigen::MatrixXd::Zero(Np, T);
  for (const auto& [g, members] : power_groups) {
    const auto row = static_cast<Eigen::Index>(a.power_nodes.size());
    PowerNode n;
    n.id = members.size() == 1 ? in.power_nodes[static_cast<std::size_t>(members[0])].id : "G" + std::to_string(g);
    std::set<int> storage, links;
    for (int m : members) {
      const PowerNode& src = in.power_nodes[static_cast<std::size_t>(m)];
      storage.insert(src.storage.begin(), src.storage.end());
      for (int k : src.gas_links) links.insert(gas_new[static_cast<std::size_t>(k)]);
      a.initial_plants.row(row) += in.initial_plants.row(m);
      a.power_demand.row(row) += in.power_demand.row(m);
    }
    n.storage.assign(storage.begin(), storage.end());
    n.gas_links.assign(links.begin(), links.end());
    for (auto& [type, cf] : a.capacity_factors) {
      const int i = in.plant_index(type);
      const Eigen::MatrixXd& src = in.capacity_factors.at(type);
      double total = 0.0;
      for (int m : members) total += in.initial_plants(m, i) * in.plant_types[static_cast<std::size_t>(i)].capacity;
      for (int m : members) {
        const double weight = total > 0.0
                                  ? in.initial_plants(m, i) * in.plant_types[static_cast<std::size_t>(i)].capacity / total
                                  : 1.0 / static_cast<double>(members.size());
        cf.row(row) += weight * src.row(m);
      }
      cf.row(row) = cf.row(row).cwiseMax(0.0).cwiseMin(1.0);
    }
    a.power_nodes.push_back(n);
    out.power_members.push_back(members);
  }
  a.gas_demand = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(a.gas_nodes.size()), in.gas_demand.cols());
  for (std::size_t k = 0; k < in.gas_nodes.size(); ++k) {
    a.gas_demand.row(gas_new[k]) += in.gas_demand.row(static_cast<Eigen::Index>(k));
  }

  // pipelines: drop intra-group, merge parallel lines of the same kind
  std::map<std::tuple<int, int, bool>, std::vector<int>> merged;
  for (std::size_t l = 0; l < in.pipelines.size(); ++l) {
    const Pipeline& pl = in.pipelines[l];
    const int f = gas_new[static_cast<std::size_t>(pl.from)], t = gas_new[static_cast<std::size_t>(pl.to)];
    if (f == t) continue;
    merged[{f, t, !pl.existing}].push_back(static_cast<int>(l));
  }
  for (const auto& [key, members] : merged) {
    const auto& [f, t, candidate] = key;
    Pipeline pl;
    pl.from = f;
    pl.to = t;
    pl.existing = !candidate;
    pl.id = members.size() == 1 ? in.pipelines[static_cast<std::size_t>(members[0])].id
                                : "L" + a.gas_nodes[static_cast<std::size_t>(f)].id + "_" +
                                      a.gas_nodes[static_cast<std::size_t>(t)].id + (candidate ? "_c" : "_e");
    pl.cost = kInf;
    for (int m : members) {
      const Pipeline& src = in.pipelines[static_cast<std::size_t>(m)];
      pl.initial_capacity += src.initial_capacity;
      pl.candidate_capacity += src.candidate_capacity;
      pl.cost = std::min(pl.cost, src.cost);
    }
    a.pipelines.push_back(pl);
    out.pipeline_members.push_back(members);
  }

  a.rep_days = temporal.medoids;
  a.weights = temporal.weights;
  a.validate();
  return out;
}

// ---------------------------------------------------------------------------
// class-block form

namespace {

enum class Role { investment, operational };

struct ColumnClass {
  std::string node_class;
  Role role;
};

ColumnClass classify_column(const std::string& name) {
  const std::string kind = row_family(name);
  static const std::map<std::string, ColumnClass> table{
      {"x_op", {kPowerClass, Role::investment}},   {"x_est", {kPowerClass, Role::investment}},
      {"x_dec", {kPowerClass, Role::investment}},  {"y_cd", {kPowerClass, Role::investment}},
      {"y_lev", {kPowerClass, Role::investment}},  {"p", {kPowerClass, Role::operational}},
      {"a_e", {kPowerClass, Role::operational}},   {"s_ch", {kPowerClass, Role::operational}},
      {"s_dis", {kPowerClass, Role::operational}}, {"s_lev", {kPowerClass, Role::operational}},
      {"z", {kGasClass, Role::investment}},        {"f_g", {kGasClass, Role::operational}},
      {"g", {kGasClass, Role::operational}},       {"a_g", {kGasClass, Role::operational}},
      {"a_rng", {kGasClass, Role::operational}},   {"f_ge", {kGasClass, Role::operational}},
  };
  const auto it = table.find(kind);
  if (it == table.end()) throw BuildError("generic: unknown variable kind '" + kind + "'");
  return it->second;
}

// "" for coupling rows
std::string classify_row(const std::string& name) {
  static const std::set<std::string> power{"plant_count",        "thermal_min",           "thermal_max",
                                           "ramp_up",            "ramp_down",             "vre_cap",
                                           "shed_cap",           "power_balance",         "storage_level",
                                           "storage_charge_cap", "storage_discharge_cap", "storage_energy_cap",
                                           "storage_wrap",       "rps"};
  static const std::set<std::string> gas{"gas_balance", "gas_supply", "gas_unserved_cap",
                                         "rng_cap",     "pipe_existing", "pipe_candidate"};
  static const std::set<std::string> coupling{"gas_to_power", "emissions"};
  const std::string f = row_family(name);
  if (power.count(f)) return kPowerClass;
  if (gas.count(f)) return kGasClass;
  if (coupling.count(f)) return "";
  throw BuildError("generic: unknown row family '" + f + "'");
}

Eigen::SparseMatrix<double> from_triplets(Eigen::Index rows, Eigen::Index cols,
                                          const std::vector<Eigen::Triplet<double>>& t) {
  Eigen::SparseMatrix<double> m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

}  // namespace

GenericCEPHN to_generic(const Milp& model) {
  GenericCEPHN out;
  out.objective_constant = model.objective_constant;
  const std::vector<std::string> classes{kPowerClass, kGasClass};
  // local position of each model column inside its class block
  std::vector<int> cls(static_cast<std::size_t>(model.num_variables()));
  std::vector<Role> role(static_cast<std::size_t>(model.num_variables()));
  std::vector<int> local(static_cast<std::size_t>(model.num_variables()));
  out.classes.resize(classes.size());
  for (std::size_t s = 0; s < classes.size(); ++s) out.classes[s].node_class = classes[s];
  for (int pass = 0; pass < 3; ++pass) {  // integer investments, continuous investments, operations
    for (int j = 0; j < model.num_variables(); ++j) {
      const Variable& v = model.variables()[static_cast<std::size_t>(j)];
      const ColumnClass cc = classify_column(v.name);
      const int s = cc.node_class == kPowerClass ? 0 : 1;
      ClassBlock& b = out.classes[static_cast<std::size_t>(s)];
      const bool take = (pass == 0 && cc.role == Role::investment && v.integer) ||
                        (pass == 1 && cc.role == Role::investment && !v.integer) ||
                        (pass == 2 && cc.role == Role::operational);
      if (!take) continue;
      cls[static_cast<std::size_t>(j)] = s;
      role[static_cast<std::size_t>(j)] = cc.role;
      if (cc.role == Role::investment) {
        local[static_cast<std::size_t>(j)] = static_cast<int>(b.investment.size());
        b.investment.push_back(v);
        if (pass == 0) ++b.integer_dims;
      } else {
        local[static_cast<std::size_t>(j)] = static_cast<int>(b.operational.size());
        b.operational.push_back(v);
      }
    }
  }
  std::vector<std::vector<Eigen::Triplet<double>>> ta(classes.size()), tb(classes.size()), tc(classes.size());
  for (const Row& r : model.rows()) {
    const std::string rc = classify_row(r.name);
    if (rc.empty()) {
      const auto i = static_cast<int>(out.coupling_names.size());
      out.coupling_names.push_back(r.name);
      out.coupling_lo.push_back(r.lo);
      out.coupling_hi.push_back(r.hi);
      for (const auto& [j, a] : r.coefs) {
        if (role[static_cast<std::size_t>(j)] != Role::operational) {
          throw BuildError("generic: coupling row '" + r.name + "' references an investment variable");
        }
        tc[static_cast<std::size_t>(cls[static_cast<std::size_t>(j)])].emplace_back(i, local[static_cast<std::size_t>(j)], a);
      }
      continue;
    }
    const std::size_t s = rc == kPowerClass ? 0 : 1;
    ClassBlock& b = out.classes[s];
    const auto i = static_cast<int>(b.row_names.size());
    b.row_names.push_back(r.name);
    b.row_lo.push_back(r.lo);
    b.row_hi.push_back(r.hi);
    for (const auto& [j, a] : r.coefs) {
      if (static_cast<std::size_t>(cls[static_cast<std::size_t>(j)]) != s) {
        throw BuildError("generic: row '" + r.name + "' mixes node classes");
      }
      (role[static_cast<std::size_t>(j)] == Role::investment ? ta : tb)[s].emplace_back(i, local[static_cast<std::size_t>(j)], a);
    }
  }
  for (std::size_t s = 0; s < classes.size(); ++s) {
    ClassBlock& b = out.classes[s];
    const auto rows = static_cast<Eigen::Index>(b.row_names.size());
    b.A = from_triplets(rows, static_cast<Eigen::Index>(b.investment.size()), ta[s]);
    b.B = from_triplets(rows, static_cast<Eigen::Index>(b.operational.size()), tb[s]);
    b.C = from_triplets(static_cast<Eigen::Index>(out.coupling_names.size()), static_cast<Eigen::Index>(b.operational.size()), tc[s]);
  }
  return out;
}

GenericCEPHN to_generic(const GEPInstance& instance) { return to_generic(build_full_gep(instance)); }

Milp GenericCEPHN::to_milp() const {
  Milp m;
  m.name = "GEP";
  m.objective_constant = objective_constant;
  std::vector<int> inv_base, op_base;
  for (const ClassBlock& b : classes) {
    inv_base.push_back(m.num_variables());
    for (const Variable& v : b.investment) m.add_variable(v.name, v.lo, v.hi, v.cost, v.integer);
    op_base.push_back(m.num_variables());
    for (const Variable& v : b.operational) m.add_variable(v.name, v.lo, v.hi, v.cost, v.integer);
  }
  for (std::size_t s = 0; s < classes.size(); ++s) {
    const ClassBlock& b = classes[s];
    const Eigen::SparseMatrix<double, Eigen::RowMajor> A = b.A, B = b.B;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      std::vector<std::pair<int, double>> coefs;
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(A, i); it; ++it) {
        coefs.emplace_back(inv_base[s] + static_cast<int>(it.col()), it.value());
      }
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(B, i); it; ++it) {
        coefs.emplace_back(op_base[s] + static_cast<int>(it.col()), it.value());
      }
      m.add_row(b.row_names[static_cast<std::size_t>(i)], std::move(coefs), b.row_lo[static_cast<std::size_t>(i)],
                b.row_hi[static_cast<std::size_t>(i)]);
    }
  }
  for (std::size_t i = 0; i < coupling_names.size(); ++i) {
    std::vector<std::pair<int, double>> coefs;
    for (std::size_t s = 0; s < classes.size(); ++s) {
      const Eigen::SparseMatrix<double, Eigen::RowMajor> C = classes[s].C;
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(C, static_cast<Eigen::Index>(i)); it; ++it) {
        coefs.emplace_back(op_base[s] + static_cast<int>(it.col()), it.value());
      }
    }
    m.add_row(coupling_names[i], std::move(coefs), coupling_lo[i], coupling_hi[i]);
  }
  return m;
}

bool equal_after_normalization(const Milp& a, const Milp& b, std::string* difference) {
  auto fail = [&](const std::string& what) {
    if (difference) *difference = what;
    return false;
  };
  if (a.num_variables() != b.num_variables()) return fail("variable count");
  if (a.num_rows() != b.num_rows()) return fail("row count");
  if (a.objective_constant != b.objective_constant) return fail("objective constant");
  for (const Variable& u : a.variables()) {
    const auto j = b.find_variable(u.name);
    if (!j) return fail("missing variable " + u.name);
    const Variable& v = b.variables()[static_cast<std::size_t>(*j)];
    if (u.lo != v.lo || u.hi != v.hi || u.cost != v.cost || u.integer != v.integer) return fail("variable " + u.name);
  }
  auto named = [](const Milp& m, const Row& r) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [j, c] : r.coefs) out.emplace_back(m.variables()[static_cast<std::size_t>(j)].name, c);
    std::sort(out.begin(), out.end());
    return out;
  };
  for (const Row& r : a.rows()) {
    const auto i = b.find_row(r.name);
    if (!i) return fail("missing row " + r.name);
    const Row& s = b.rows()[static_cast<std::size_t>(*i)];
    if (r.lo != s.lo || r.hi != s.hi || named(a, r) != named(b, s)) return fail("row " + r.name);
  }
  return true;
}

// ---------------------------------------------------------------------------
// feasibility

FeasibilityReport check_feasibility(const Milp& model, const std::vector<double>& x, double tolerance) {
  if (x.size() != static_cast<std::size_t>(model.num_variables())) {
    throw DimensionError("feasibility: solution length does not match the model");
  }
  FeasibilityReport rep;
  auto record = [&](const std::string& family, double lo, double hi, double v) {
    double amount = 0.0, bound = 0.0;
    if (v < lo) {
      amount = lo - v;
      bound = lo;
    } else if (v > hi) {
      amount = v - hi;
      bound = hi;
    }
    double& slot = rep.families[family];
    slot = std::max(slot, amount);
    if (amount > rep.max_violation) {
      rep.max_violation = amount;
      rep.worst_family = family;
    }
    rep.max_scaled_violation = std::max(rep.max_scaled_violation, amount / std::max(1.0, std::abs(bound)));
  };
  const std::vector<double> act = model.activities(x);
  for (int i = 0; i < model.num_rows(); ++i) {
    const Row& r = model.rows()[static_cast<std::size_t>(i)];
    record(row_family(r.name), r.lo, r.hi, act[static_cast<std::size_t>(i)]);
  }
  for (int j = 0; j < model.num_variables(); ++j) {
    const Variable& v = model.variables()[static_cast<std::size_t>(j)];
    const double xj = x[static_cast<std::size_t>(j)];
    const std::string kind = row_family(v.name);
    record("bounds:" + kind, v.lo, v.hi, xj);
    if (v.integer) {
      const double frac = std::abs(xj - std::round(xj));
      record("integrality:" + kind, 0.0, 0.0, frac);
    }
  }
  rep.feasible = rep.max_scaled_violation <= tolerance;
  return rep;
}

FeasibilityReport check_feasibility(const GEPInstance& instance, const std::vector<double>& x, double tolerance) {
  return check_feasibility(build_full_gep(instance), x, tolerance);
}

}  // namespace stagg
