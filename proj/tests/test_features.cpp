#include "doctest.h"
#include "test_util.hpp"

#include "stagg/csv.hpp"
#include "stagg/error.hpp"
#include "stagg/features.hpp"

#include <filesystem>
#include <fstream>
#include <random>

using namespace stagg;
namespace fs = std::filesystem;

namespace {

using testutil::TempDir;
using testutil::write;

// two power nodes at resolution 2, one gas node at resolution 1, two days
void write_small_dataset(const TempDir& dir) {
  write(dir.file("catalog.csv"), "id,class,x,y,region\np1,power,0,0,A\ng1,gas,1,0,A\np2,power,0,1,B\n");
  write(dir.file("demand.csv"), "node_id,p1,p2,p3,p4\np1,10,20,30,40\np2,1,2,3,4\n");
  write(dir.file("gas.csv"), "node_id,p1,p2\ng1,7,9\n");
  write(dir.file("manifest.yaml"),
        "catalog: catalog.csv\n"
        "days: 2\n"
        "classes:\n  power: 2\n  gas: 1\n"
        "features:\n"
        "  - {class: power, name: power_demand, kind: parameter, file: demand.csv}\n"
        "  - {class: gas, name: gas_demand, kind: parameter, file: gas.csv}\n"
        "presets:\n  A1: [power_demand]\n  A2: [power_demand, gas_demand]\n");
}

PeriodFeatureMatrix random_period(const FeatureLayout& layout, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  PeriodFeatureMatrix p;
  for (std::size_t s = 0; s < layout.classes.size(); ++s) {
    Eigen::MatrixXd m(layout.class_nodes[s], layout.class_dims[s]);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
    p.blocks.push_back(m);
  }
  return p;
}

FeatureLayout two_class_layout(Eigen::Index n1, Eigen::Index d1, Eigen::Index n2, Eigen::Index d2) {
  FeatureLayout l;
  l.classes = {"power", "gas"};
  l.class_nodes = {n1, n2};
  l.class_dims = {d1, d2};
  l.periods = 1;
  return l;
}

}  // namespace

TEST_CASE("ingest reads the manifest and validates series") {
  TempDir dir("ingest");
  write_small_dataset(dir);
  const Dataset d = ingest(dir.file("manifest.yaml"));
  CHECK(d.days == 2);
  REQUIRE(d.tables.size() == 2);
  CHECK(d.table("power").resolution == 2);
  CHECK(d.table("power").features[0].values(1, 3) == 4.0);
  CHECK(d.table("gas").features[0].values(0, 1) == 9.0);
  CHECK(d.presets.at("A1") == std::vector<std::string>{"power_demand"});
  CHECK(d.select({"power_demand"}).table("gas").features.empty());
  CHECK_THROWS_AS(d.select({"nope"}), ConfigError);
}

TEST_CASE("ingest errors carry locations") {
  TempDir dir("ingest_err");
  write_small_dataset(dir);
  write(dir.file("demand.csv"), "");
  CHECK_THROWS_AS(ingest(dir.file("manifest.yaml")), IngestionError);

  write(dir.file("demand.csv"), "node_id,p1,p2,p3,p4\np1,10,20,30,40\npX,1,2,3,4\n");
  try {
    ingest(dir.file("manifest.yaml"));
    FAIL("expected an ingestion error");
  } catch (const IngestionError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }

  write(dir.file("demand.csv"), "node_id,p1,p2,p3,p4\np1,10,20,abc,40\np2,1,2,3,4\n");
  try {
    ingest(dir.file("manifest.yaml"));
    FAIL("expected an ingestion error");
  } catch (const IngestionError& e) {
    const std::string what = e.what();
    CHECK(what.find("row 2") != std::string::npos);
    CHECK(what.find("p3") != std::string::npos);
  }

  write(dir.file("demand.csv"), "node_id,p1,p2,p3\np1,10,20,30\np2,1,2,3\n");
  CHECK_THROWS_AS(ingest(dir.file("manifest.yaml")), IngestionError);

  write(dir.file("demand.csv"), "node_id,p1,p2,p3,p4\np1,10,20,30,40\n");
  CHECK_THROWS_AS(ingest(dir.file("manifest.yaml")), IngestionError);
}

TEST_CASE("manifest schema errors name the line") {
  TempDir dir("manifest_err");
  write(dir.file("m.yaml"), "catalog: c.csv\ndays: 0\nclasses: {power: 24}\nfeatures: []\n");
  try {
    DatasetManifest::read(dir.file("m.yaml"));
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("full-year table shapes") {
  std::vector<GraphNode> nodes;
  for (int i = 0; i < 88; ++i) nodes.push_back({"e" + std::to_string(i), "power", 0, double(i), ""});
  for (int i = 0; i < 18; ++i) nodes.push_back({"g" + std::to_string(i), "gas", 1, double(i), ""});
  Dataset d;
  d.catalog = NodeCatalog(nodes);
  d.days = 365;
  TimeSeriesTable p{"power", 24, {}, {{"power_demand", FeatureKind::parameter, Eigen::MatrixXd::Ones(88, 365 * 24)}}};
  TimeSeriesTable g{"gas", 1, {}, {{"gas_demand", FeatureKind::parameter, Eigen::MatrixXd::Ones(18, 365)}}};
  for (int i = 0; i < 88; ++i) p.node_ids.push_back("e" + std::to_string(i));
  for (int i = 0; i < 18; ++i) g.node_ids.push_back("g" + std::to_string(i));
  d.tables = {p, g};
  CHECK(d.table("power").resolution == 24);
  CHECK(d.table("power").days() == 365);
  CHECK(d.table("gas").resolution == 1);
  const PeriodFeatures pf = build_period_features(d, 1);
  CHECK(pf.periods.size() == 365);
  CHECK(pf.layout.class_dims == std::vector<Eigen::Index>{24, 1});
}

TEST_CASE("period features: daily and hourly aggregation with repetition") {
  TempDir dir("periods");
  write_small_dataset(dir);
  const Dataset d = ingest(dir.file("manifest.yaml"));

  const PeriodFeatures daily = build_period_features(d, 1);
  REQUIRE(daily.periods.size() == 2);
  CHECK(daily.layout.class_dims == std::vector<Eigen::Index>{2, 1});
  CHECK(daily.periods[1].blocks[0](0, 0) == 30.0);
  CHECK(daily.periods[1].blocks[0](0, 1) == 40.0);
  CHECK(daily.periods[1].blocks[1](0, 0) == 9.0);

  const PeriodFeatures hourly = build_period_features(d, 2);
  REQUIRE(hourly.periods.size() == 4);
  CHECK(hourly.layout.class_dims == std::vector<Eigen::Index>{1, 1});
  CHECK(hourly.periods[2].blocks[0](0, 0) == 30.0);
  // the daily gas value repeats in both sub-periods of its day
  CHECK(hourly.periods[0].blocks[1](0, 0) == 7.0);
  CHECK(hourly.periods[1].blocks[1](0, 0) == 7.0);
  CHECK(hourly.periods[2].blocks[1](0, 0) == 9.0);
  CHECK(hourly.periods[3].blocks[1](0, 0) == 9.0);

  CHECK_THROWS_AS(build_period_features(d, 3), ConfigError);
}

TEST_CASE("block-diagonal stacking") {
  FeatureLayout l = two_class_layout(3, 2, 2, 1);
  std::mt19937_64 rng(4);
  const PeriodFeatureMatrix p = random_period(l, rng);
  const StackedInput s = assemble_stacked(p, l, false);
  CHECK(s.X.rows() == 5);
  CHECK(s.X.cols() == 3);
  CHECK(s.X.block(0, 2, 3, 1).isZero(0.0));
  CHECK(s.X.block(3, 0, 2, 2).isZero(0.0));
  CHECK(s.X.block(0, 0, 3, 2) == p.blocks[0]);
  CHECK(s.X.block(3, 2, 2, 1) == p.blocks[1]);

  const StackedInput h = assemble_stacked(p, l, true);
  CHECK(h.X.cols() == 8);
  CHECK(h.X.rightCols(5) == Eigen::MatrixXd::Identity(5, 5));

  PeriodFeatureMatrix wrong = p;
  wrong.blocks.pop_back();
  CHECK_THROWS_AS(assemble_stacked(wrong, l, false), DimensionError);
}

TEST_CASE("normalization") {
  TempDir dir("norm");
  write_small_dataset(dir);
  write(dir.file("demand.csv"), "node_id,p1,p2,p3,p4\np1,10,20,30,20\np2,15,25,10,30\n");
  write(dir.file("gas.csv"), "node_id,p1,p2\ng1,5,5\n");
  const Dataset d = ingest(dir.file("manifest.yaml"));
  const auto [n, rec] = normalize(d);
  CHECK(n.table("power").features[0].values(0, 1) == 0.5);
  CHECK(rec.apply("power/power_demand", 20.0) == 0.5);
  CHECK(n.table("gas").features[0].values.isZero(0.0));

  const Dataset back = denormalize(n, rec);
  for (std::size_t t = 0; t < d.tables.size(); ++t) {
    CHECK((back.tables[t].features[0].values - d.tables[t].features[0].values).cwiseAbs().maxCoeff() <= 1e-12);
  }
  const auto [again, rec2] = normalize(n);
  CHECK(again.table("power").features[0].values == n.table("power").features[0].values);
}

TEST_CASE("flatten order and round trip") {
  const FeatureLayout l = two_class_layout(2, 3, 1, 2);
  CHECK(l.flat_size() == 8);
  std::mt19937_64 rng(9);
  const PeriodFeatureMatrix p = random_period(l, rng);
  const Eigen::VectorXd x = flatten(p, l);
  REQUIRE(x.size() == 8);
  CHECK(x(0) == p.blocks[0](0, 0));
  CHECK(x(1) == p.blocks[0](0, 1));
  CHECK(x(3) == p.blocks[0](1, 0));
  CHECK(x(6) == p.blocks[1](0, 0));
  const PeriodFeatureMatrix back = unflatten(x, l);
  CHECK(back.blocks[0] == p.blocks[0]);
  CHECK(back.blocks[1] == p.blocks[1]);
  CHECK(flatten(p, l) == x);
}
