#include "doctest.h"
#include "test_util.hpp"

#include "stagg/csv.hpp"
#include "stagg/error.hpp"
#include "stagg/pipeline.hpp"
#include "stagg/synth.hpp"

#include <filesystem>

using namespace stagg;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::string& yaml) {
  try {
    RunConfig::parse(yaml, ".", "run.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

// Small instance and a grid that finishes in seconds.
RunConfig small_run(const testutil::TempDir& dir) {
  SynthConfig s;
  s.power_nodes = 4;
  s.days = 6;
  s.archetypes = 2;
  write_synth(synthesize(s), dir.file("data"));
  RunConfig c;
  c.dataset = dir.file("data/dataset.yaml");
  c.instance = dir.file("data/instance");
  c.metadata = dir.file("data/metadata.json");
  c.out = dir.file("out");
  c.groups = 2;
  c.k_list = {2};
  c.spatial_methods = {"label", "PL"};
  c.temporal_methods = {"raw", "A2"};
  c.architecture.epochs = 30;
  return c;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "timings.txt") continue;
    files[fs::relative(e.path(), root).string()] = read_file(e.path().string());
  }
  return files;
}

}  // namespace

TEST_CASE("pipeline: config parsing") {
  const RunConfig c = RunConfig::parse(
      "dataset: d/dataset.yaml\ninstance: d/inst\nseed: 9\nk_list: [3, 5]\nsolver:\n  gap_tolerance: 0.0\nub:\n  step2_days: [2, 7]\n",
      "/base");
  CHECK(c.dataset == "/base/d/dataset.yaml");
  CHECK(c.seed == 9);
  CHECK(c.k_list == std::vector<int>{3, 5});
  CHECK(c.solver.gap_tolerance == 0.0);
  CHECK(c.step2_days == std::vector<int>{1, 6});
  CHECK(c.to_json().at("ub").at("step2_days") == nlohmann::json({2, 7}));

  CHECK(error_of("seed: 1\nsolver:\n  gap: 1\n") == "run.yaml:3: unknown key 'solver.gap'");
  CHECK(error_of("groups: many\n") == "run.yaml:1: 'groups' must be an integer");
  CHECK(error_of("k_list: 3\n") == "run.yaml:1: 'k_list' must be a list of integers");
  CHECK(error_of("seed: 1\n\nspatial_methods: [label, XL]\n").rfind("run.yaml:3: spatial_methods", 0) == 0);
  CHECK(error_of("groups: 0\n").rfind("run.yaml:1: groups", 0) == 0);
  CHECK(error_of("a: [\n").rfind("run.yaml:", 0) == 0);
}

TEST_CASE("pipeline: schema reference parses to the defaults") {
  const RunConfig c = RunConfig::parse(schema_reference(), "/x");
  nlohmann::json a = c.to_json();
  nlohmann::json b = RunConfig{}.to_json();
  for (const char* k : {"dataset", "instance"}) {
    a.erase(k);
    b.erase(k);
  }
  CHECK(a == b);
  const auto presets = c.to_json().at("loss_presets");
  CHECK(presets.at("PL") == nlohmann::json({{"reconstruction", 0.0}, {"pooling", 1.0}, {"entropy", 0.0}}));
  CHECK(presets.at("PRHL") == nlohmann::json({{"reconstruction", 1.0}, {"pooling", 1.0}, {"entropy", 1.0}}));
}

TEST_CASE("pipeline: grid, models and keys") {
  testutil::TempDir dir("pipeline_keys");
  RunConfig c = small_run(dir);
  const Experiment e(c);
  CHECK(e.run_ids() == std::vector<std::string>{"label__raw__K2", "label__A2__K2", "PL__raw__K2", "PL__A2__K2"});
  CHECK(e.models() == std::vector<std::string>{"PL_A2", "PRHL_A2"});
  c.solver.gap_tolerance = 0.0;
  const Experiment f(c);
  CHECK(e.key(Stage::build) == f.key(Stage::build));
  CHECK(e.key(Stage::solve) != f.key(Stage::solve));
  CHECK(e.key(Stage::report) != f.key(Stage::report));
}

TEST_CASE("pipeline: missing upstream artifacts name the producing subcommand") {
  testutil::TempDir dir("pipeline_missing");
  Experiment e(small_run(dir));
  try {
    e.train();
    FAIL("train ran without ingest");
  } catch (const UsageError& err) {
    CHECK(std::string(err.what()).find("run `stagg ingest` first") != std::string::npos);
  }
  e.ingest();
  CHECK_THROWS_WITH_AS(e.aggregate(), doctest::Contains("run `stagg train` first"), UsageError);
}

TEST_CASE("pipeline: end to end, reproducible") {
  testutil::TempDir dir("pipeline_e2e");
  RunConfig c = small_run(dir);
  Experiment(c).all();
  const Experiment e(c);
  const CsvTable ledger = read_csv_file((fs::path(e.stage_dir(Stage::evaluate)) / "ledger.csv").string());
  CHECK(ledger.rows.size() == 4);
  for (std::size_t i = 0; i < ledger.rows.size(); ++i) CHECK(ledger.rows[i][ledger.column("feasible")] == "1");
  const CsvTable best = read_csv_file((fs::path(e.stage_dir(Stage::report)) / "best_spatial.csv").string());
  CHECK(best.rows.size() == 2);
  CHECK(fs::exists(fs::path(e.stage_dir(Stage::evaluate)) / "recovery.csv"));
  CHECK(fs::exists(fs::path(e.stage_dir(Stage::build)) / "PL__A2__K2.mps"));

  c.out = dir.file("again");
  Experiment(c, 3).all();
  CHECK(tree(dir.file("out")) == tree(dir.file("again")));
}

TEST_CASE("pipeline: empty grid gives empty tables") {
  testutil::TempDir dir("pipeline_empty");
  RunConfig c = small_run(dir);
  c.k_list.clear();
  Experiment e(c);
  e.all();
  const CsvTable best = read_csv_file((fs::path(e.stage_dir(Stage::report)) / "best_temporal.csv").string());
  CHECK(best.rows.empty());
  CHECK(best.header.size() == 5);
}
