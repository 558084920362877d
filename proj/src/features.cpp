#include "stagg/features.hpp"

#include "stagg/csv.hpp"
#include "stagg/error.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

namespace stagg {

namespace {

std::string at_line(const YAML::Node& node) {
  return "line " + std::to_string(node.Mark().line + 1);
}

template <class T>
T yaml_get(const YAML::Node& parent, const std::string& key, const std::string& source) {
  const YAML::Node n = parent[key];
  if (!n) throw ConfigError(source + " " + at_line(parent) + ": missing key '" + key + "'");
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(source + " " + at_line(n) + ": bad value for '" + key + "'");
  }
}

std::string resolve(const std::string& base, const std::string& file) {
  namespace fs = std::filesystem;
  const fs::path p(file);
  if (p.is_absolute() || base.empty()) return p.string();
  return (fs::path(base) / p).string();
}

}  // namespace

FeatureKind parse_feature_kind(const std::string& s) {
  if (s == "parameter") return FeatureKind::parameter;
  if (s == "derived") return FeatureKind::derived;
  if (s == "exogenous") return FeatureKind::exogenous;
  throw ConfigError("unknown feature kind '" + s + "'");
}

std::string to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::parameter: return "parameter";
    case FeatureKind::derived: return "derived";
    case FeatureKind::exogenous: return "exogenous";
  }
  return "parameter";
}

int TimeSeriesTable::days() const {
  if (features.empty() || resolution <= 0) return 0;
  return static_cast<int>(features.front().values.cols()) / resolution;
}

const FeatureSeries* TimeSeriesTable::find(const std::string& name) const {
  for (const auto& f : features) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

const TimeSeriesTable& Dataset::table(const std::string& node_class) const {
  for (const auto& t : tables) {
    if (t.node_class == node_class) return t;
  }
  throw InputError("dataset: no table for class '" + node_class + "'");
}

Dataset Dataset::select(const std::vector<std::string>& feature_names) const {
  std::set<std::string> wanted(feature_names.begin(), feature_names.end());
  std::set<std::string> found;
  Dataset out = *this;
  for (auto& t : out.tables) {
    std::vector<FeatureSeries> kept;
    for (auto& f : t.features) {
      if (wanted.count(f.name)) {
        kept.push_back(f);
        found.insert(f.name);
      }
    }
    t.features = std::move(kept);
  }
  for (const auto& w : wanted) {
    if (!found.count(w)) throw ConfigError("feature selection: unknown feature '" + w + "'");
  }
  return out;
}

DatasetManifest DatasetManifest::read(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(path + ": line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  } catch (const YAML::BadFile&) {
    throw IngestionError("cannot open " + path);
  }
  DatasetManifest m;
  m.catalog = yaml_get<std::string>(root, "catalog", path);
  m.days = yaml_get<int>(root, "days", path);
  if (m.days <= 0) throw ConfigError(path + " " + at_line(root["days"]) + ": days must be positive");
  const YAML::Node classes = root["classes"];
  if (!classes || !classes.IsMap()) throw ConfigError(path + ": 'classes' must map class -> resolution");
  for (const auto& kv : classes) {
    const int r = kv.second.as<int>();
    if (r <= 0) throw ConfigError(path + " " + at_line(kv.second) + ": resolution must be positive");
    m.resolutions[kv.first.as<std::string>()] = r;
  }
  const YAML::Node features = root["features"];
  if (!features || !features.IsSequence()) throw ConfigError(path + ": 'features' must be a list");
  for (const auto& f : features) {
    ManifestFeature mf;
    mf.node_class = yaml_get<std::string>(f, "class", path);
    mf.name = yaml_get<std::string>(f, "name", path);
    mf.file = yaml_get<std::string>(f, "file", path);
    if (f["kind"]) {
      try {
        mf.kind = parse_feature_kind(f["kind"].as<std::string>());
      } catch (const ConfigError& e) {
        throw ConfigError(path + " " + at_line(f["kind"]) + ": " + e.what());
      }
    }
    if (!m.resolutions.count(mf.node_class)) {
      throw ConfigError(path + " " + at_line(f) + ": feature '" + mf.name + "' has undeclared class '" +
                        mf.node_class + "'");
    }
    m.features.push_back(std::move(mf));
  }
  if (const YAML::Node presets = root["presets"]) {
    for (const auto& kv : presets) {
      m.presets[kv.first.as<std::string>()] = kv.second.as<std::vector<std::string>>();
    }
  }
  return m;
}

void DatasetManifest::write(const std::string& path) const {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "catalog" << YAML::Value << catalog;
  out << YAML::Key << "days" << YAML::Value << days;
  out << YAML::Key << "classes" << YAML::Value << YAML::BeginMap;
  for (const auto& [c, r] : resolutions) out << YAML::Key << c << YAML::Value << r;
  out << YAML::EndMap;
  out << YAML::Key << "features" << YAML::Value << YAML::BeginSeq;
  for (const auto& f : features) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "class" << YAML::Value << f.node_class
        << YAML::Key << "name" << YAML::Value << f.name << YAML::Key << "kind" << YAML::Value
        << to_string(f.kind) << YAML::Key << "file" << YAML::Value << f.file << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "presets" << YAML::Value << YAML::BeginMap;
  for (const auto& [name, list] : presets) {
    out << YAML::Key << name << YAML::Value << YAML::Flow << list;
  }
  out << YAML::EndMap;
  out << YAML::EndMap;
  write_file_atomic(path, std::string(out.c_str()) + "\n");
}

Dataset ingest(const std::string& manifest_path) {
  const DatasetManifest m = DatasetManifest::read(manifest_path);
  return ingest(m, std::filesystem::path(manifest_path).parent_path().string());
}

Dataset ingest(const DatasetManifest& manifest, const std::string& base_dir) {
  Dataset data;
  data.catalog = NodeCatalog::read_csv(resolve(base_dir, manifest.catalog));
  data.days = manifest.days;
  data.presets = manifest.presets;
  for (const auto& c : data.catalog.classes()) {
    auto it = manifest.resolutions.find(c);
    if (it == manifest.resolutions.end()) {
      throw ConfigError("manifest: catalog class '" + c + "' has no declared resolution");
    }
    TimeSeriesTable t;
    t.node_class = c;
    t.resolution = it->second;
    const auto [first, last] = data.catalog.class_range(c);
    for (std::size_t i = first; i < last; ++i) t.node_ids.push_back(data.catalog[i].id);
    data.tables.push_back(std::move(t));
  }
  for (const auto& mf : manifest.features) {
    auto table_it = std::find_if(data.tables.begin(), data.tables.end(),
                                 [&](const TimeSeriesTable& t) { return t.node_class == mf.node_class; });
    if (table_it == data.tables.end()) {
      throw ConfigError("manifest: class '" + mf.node_class + "' has no nodes in the catalog");
    }
    TimeSeriesTable& table = *table_it;
    const std::string path = resolve(base_dir, mf.file);
    const CsvTable csv = read_csv_file(path);
    const std::size_t c_node = csv.column("node_id");
    const Eigen::Index length = static_cast<Eigen::Index>(manifest.days) * table.resolution;
    if (static_cast<Eigen::Index>(csv.header.size()) - 1 != length) {
      std::ostringstream os;
      os << path << ": expected " << length << " value columns (" << manifest.days << " days x "
         << table.resolution << "), found " << (csv.header.size() - 1);
      throw IngestionError(os.str());
    }
    if (csv.rows.empty()) throw IngestionError(path + ": no data rows");
    FeatureSeries series;
    series.name = mf.name;
    series.kind = mf.kind;
    series.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(table.node_ids.size()), length,
                                              std::numeric_limits<double>::quiet_NaN());
    std::vector<bool> filled(table.node_ids.size(), false);
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
      const std::string& id = csv.rows[r][c_node];
      auto pos = std::find(table.node_ids.begin(), table.node_ids.end(), id);
      if (pos == table.node_ids.end()) {
        throw IngestionError(path + ": row " + std::to_string(r + 2) + ": unknown node id '" + id +
                             "' for class '" + table.node_class + "'");
      }
      const auto n = static_cast<std::size_t>(pos - table.node_ids.begin());
      if (filled[n]) throw IngestionError(path + ": row " + std::to_string(r + 2) + ": duplicate node '" + id + "'");
      filled[n] = true;
      Eigen::Index col = 0;
      for (std::size_t c = 0; c < csv.header.size(); ++c) {
        if (c == c_node) continue;
        series.values(static_cast<Eigen::Index>(n), col++) = csv.number(r, c);
      }
    }
    for (std::size_t n = 0; n < filled.size(); ++n) {
      if (!filled[n]) throw IngestionError(path + ": missing series for node '" + table.node_ids[n] + "'");
    }
    if (table.find(mf.name)) throw ConfigError("manifest: duplicate feature '" + mf.name + "'");
    table.features.push_back(std::move(series));
  }
  return data;
}

double ScalingRecord::apply(const std::string& key, double v) const {
  const auto& [lo, hi] = ranges.at(key);
  if (hi <= lo) return 0.0;
  return (v - lo) / (hi - lo);
}

double ScalingRecord::invert(const std::string& key, double v) const {
  const auto& [lo, hi] = ranges.at(key);
  if (hi <= lo) return lo;
  return lo + v * (hi - lo);
}

std::pair<Dataset, ScalingRecord> normalize(const Dataset& data) {
  Dataset out = data;
  ScalingRecord rec;
  for (auto& t : out.tables) {
    for (auto& f : t.features) {
      const std::string key = t.node_class + "/" + f.name;
      const double lo = f.values.size() ? f.values.minCoeff() : 0.0;
      const double hi = f.values.size() ? f.values.maxCoeff() : 0.0;
      rec.ranges[key] = {lo, hi};
      if (hi > lo) {
        f.values = ((f.values.array() - lo) / (hi - lo)).matrix();
      } else {
        f.values.setZero();
      }
    }
  }
  return {std::move(out), std::move(rec)};
}

Dataset denormalize(const Dataset& data, const ScalingRecord& scaling) {
  Dataset out = data;
  for (auto& t : out.tables) {
    for (auto& f : t.features) {
      const auto& [lo, hi] = scaling.ranges.at(t.node_class + "/" + f.name);
      if (hi > lo) {
        f.values = (f.values.array() * (hi - lo) + lo).matrix();
      } else {
        f.values.setConstant(lo);
      }
    }
  }
  return out;
}

Eigen::Index FeatureLayout::total_nodes() const {
  Eigen::Index n = 0;
  for (auto v : class_nodes) n += v;
  return n;
}

Eigen::Index FeatureLayout::total_dims() const {
  Eigen::Index d = 0;
  for (auto v : class_dims) d += v;
  return d;
}

Eigen::Index FeatureLayout::flat_size() const {
  Eigen::Index d = 0;
  for (std::size_t s = 0; s < classes.size(); ++s) d += class_nodes[s] * class_dims[s];
  return d;
}

PeriodFeatures build_period_features(const Dataset& data, int aggregation_resolution) {
  bool declared = false;
  for (const auto& t : data.tables) declared = declared || t.resolution == aggregation_resolution;
  if (!declared) {
    throw ConfigError("aggregation resolution " + std::to_string(aggregation_resolution) +
                      " is not the resolution of any class");
  }
  PeriodFeatures out;
  FeatureLayout& layout = out.layout;
  layout.aggregation_resolution = aggregation_resolution;
  layout.periods = data.days * aggregation_resolution;
  // samples of each class per aggregation period (>= 1), or repetitions when coarser
  std::vector<int> per_period;
  for (const auto& t : data.tables) {
    const int r = t.resolution;
    if (r % aggregation_resolution != 0 && aggregation_resolution % r != 0) {
      throw ConfigError("class '" + t.node_class + "' resolution " + std::to_string(r) +
                        " incompatible with aggregation resolution " + std::to_string(aggregation_resolution));
    }
    for (const auto& f : t.features) {
      if (f.values.cols() != static_cast<Eigen::Index>(data.days) * r) {
        throw InputError("feature '" + f.name + "' length does not match days x resolution");
      }
    }
    const int m = r >= aggregation_resolution ? r / aggregation_resolution : 1;
    per_period.push_back(m);
    layout.classes.push_back(t.node_class);
    layout.class_nodes.push_back(static_cast<Eigen::Index>(t.node_ids.size()));
    layout.class_dims.push_back(static_cast<Eigen::Index>(t.features.size()) * m);
  }
  out.periods.reserve(static_cast<std::size_t>(layout.periods));
  for (int p = 0; p < layout.periods; ++p) {
    PeriodFeatureMatrix pf;
    pf.t = p;
    for (std::size_t s = 0; s < data.tables.size(); ++s) {
      const auto& t = data.tables[s];
      const int m = per_period[s];
      // first sample index of this period in the class's own resolution
      Eigen::Index first;
      if (t.resolution >= aggregation_resolution) {
        first = static_cast<Eigen::Index>(p) * m;
      } else {
        first = static_cast<Eigen::Index>(p) / (aggregation_resolution / t.resolution);
      }
      Eigen::MatrixXd X(layout.class_nodes[s], layout.class_dims[s]);
      for (std::size_t f = 0; f < t.features.size(); ++f) {
        X.middleCols(static_cast<Eigen::Index>(f) * m, m) = t.features[f].values.middleCols(first, m);
      }
      pf.blocks.push_back(std::move(X));
    }
    out.periods.push_back(std::move(pf));
  }
  return out;
}

StackedInput assemble_stacked(const PeriodFeatureMatrix& period, const FeatureLayout& layout,
                              bool one_hot) {
  if (period.blocks.size() != layout.classes.size()) {
    throw DimensionError("assemble_stacked: class block count differs from layout");
  }
  const Eigen::Index n = layout.total_nodes();
  const Eigen::Index d = layout.total_dims();
  StackedInput out;
  out.one_hot = one_hot;
  out.X = Eigen::MatrixXd::Zero(n, d + (one_hot ? n : 0));
  Eigen::Index row = 0, col = 0;
  for (std::size_t s = 0; s < layout.classes.size(); ++s) {
    const auto& B = period.blocks[s];
    if (B.rows() != layout.class_nodes[s] || B.cols() != layout.class_dims[s]) {
      throw DimensionError("assemble_stacked: block shape differs from layout for class '" +
                           layout.classes[s] + "'");
    }
    out.band_start.push_back(col);
    out.X.block(row, col, B.rows(), B.cols()) = B;
    row += B.rows();
    col += B.cols();
  }
  if (one_hot) out.X.rightCols(n).setIdentity();
  return out;
}

Eigen::VectorXd flatten(const PeriodFeatureMatrix& period, const FeatureLayout& layout) {
  Eigen::VectorXd x(layout.flat_size());
  Eigen::Index k = 0;
  for (std::size_t s = 0; s < layout.classes.size(); ++s) {
    const auto& B = period.blocks.at(s);
    for (Eigen::Index n = 0; n < B.rows(); ++n) {
      for (Eigen::Index c = 0; c < B.cols(); ++c) x(k++) = B(n, c);
    }
  }
  return x;
}

PeriodFeatureMatrix unflatten(const Eigen::VectorXd& x, const FeatureLayout& layout, int t) {
  if (x.size() != layout.flat_size()) throw DimensionError("unflatten: length mismatch");
  PeriodFeatureMatrix out;
  out.t = t;
  Eigen::Index k = 0;
  for (std::size_t s = 0; s < layout.classes.size(); ++s) {
    Eigen::MatrixXd B(layout.class_nodes[s], layout.class_dims[s]);
    for (Eigen::Index n = 0; n < B.rows(); ++n) {
      for (Eigen::Index c = 0; c < B.cols(); ++c) B(n, c) = x(k++);
    }
    out.blocks.push_back(std::move(B));
  }
  return out;
}

Eigen::MatrixXd flatten_all(const PeriodFeatures& features) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(features.periods.size()), features.layout.flat_size());
  for (std::size_t p = 0; p < features.periods.size(); ++p) {
    out.row(static_cast<Eigen::Index>(p)) = flatten(features.periods[p], features.layout).transpose();
  }
  return out;
}

}  // namespace stagg
