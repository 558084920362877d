#include "doctest.h"
#include "test_util.hpp"

#include "stagg/aggregation.hpp"
#include "stagg/error.hpp"
#include "stagg/features.hpp"
#include "stagg/synth.hpp"

#include <filesystem>

using namespace stagg;

TEST_CASE("synth: metadata lists both plantings") {
  SynthConfig c;
  c.power_nodes = 6;
  c.communities = 2;
  c.days = 12;
  c.archetypes = 3;
  const SynthResult r = synthesize(c);
  const auto meta = r.metadata();
  CHECK(meta.at("communities").size() == 8);
  CHECK(meta.at("communities").at("p1") == 0);
  CHECK(meta.at("communities").at("p2") == 1);
  CHECK(meta.at("archetypes").size() == 12);
  CHECK(meta.at("archetypes")[0] == 0);
  CHECK(meta.at("archetypes")[11] == 2);
  CHECK_NOTHROW(r.instance.validate());
  CHECK(synthesize(c).metadata() == meta);
}

TEST_CASE("synth: zero noise makes community series identical") {
  SynthConfig c;
  c.noise = 0.0;
  const SynthResult r = synthesize(c);
  const auto& D = r.instance.power_demand;
  CHECK(D.row(0) == D.row(2));
  CHECK(D.row(1) == D.row(3));
  CHECK(D.row(0) != D.row(1));
  CHECK(r.instance.capacity_factors.at("solar").row(0) == r.instance.capacity_factors.at("solar").row(4));
}

TEST_CASE("synth: planted day clusters are recovered by raw k-medoids") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig c;
    c.seed = seed;
    c.noise = 0.02;
    const SynthResult r = synthesize(c);
    const GEPInstance& g = r.instance;
    Eigen::MatrixXd X(g.days, static_cast<Eigen::Index>(g.power_nodes.size()) * g.hours_per_day);
    for (int d = 0; d < g.days; ++d) {
      for (Eigen::Index n = 0; n < static_cast<Eigen::Index>(g.power_nodes.size()); ++n) {
        for (int h = 0; h < g.hours_per_day; ++h) X(d, n * g.hours_per_day + h) = g.power_demand(n, d * g.hours_per_day + h);
      }
    }
    const TemporalAggregation t = temporal_baseline(X, c.archetypes, BaselineMode::raw);
    CHECK(adjusted_rand_index(t.cluster, r.archetype) >= 0.9);
  }
}

TEST_CASE("synth: written directory ingests") {
  testutil::TempDir dir("synth");
  const SynthResult r = synthesize(SynthConfig{});
  write_synth(r, dir.path.string());
  const Dataset data = ingest(dir.file("dataset.yaml"));
  CHECK(data.days == 12);
  CHECK(data.presets.at("A2").size() == 4);
  CHECK(data.table(kPowerClass).resolution == 4);
  const GEPInstance back = GEPInstance::read(dir.file("instance"));
  CHECK(back.power_demand.isApprox(r.instance.power_demand, 1e-12));
  CHECK(std::filesystem::exists(dir.file("metadata.json")));
}

TEST_CASE("synth: configuration errors") {
  SynthConfig c;
  c.communities = 0;
  CHECK_THROWS_AS(synthesize(c), ConfigError);
  c = SynthConfig{};
  c.archetypes = 20;
  CHECK_THROWS_AS(synthesize(c), ConfigError);
  CHECK(SynthConfig::from_json(SynthConfig{}.to_json()).to_json() == SynthConfig{}.to_json());
}
