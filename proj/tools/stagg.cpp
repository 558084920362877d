#include "CLI11.hpp"

#include "stagg/error.hpp"
#include "stagg/pipeline.hpp"
#include "stagg/synth.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>

int main(int argc, char** argv) {
  CLI::App app{"stagg: spatio-temporal aggregation for capacity expansion planning"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int jobs = 1;
  app.add_option("--config", config_path, "Run configuration (YAML)");
  app.add_option("--seed", seed, "Overrides the configured seed");
  app.add_option("--out", out, "Output directory; overrides STAGG_OUT and the configuration");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  const std::vector<std::pair<std::string, std::string>> stages{
      {"ingest", "Load and normalise the dataset"},
      {"train", "Train the autoencoders"},
      {"aggregate", "Derive spatial and temporal aggregations"},
      {"build", "Build the aggregated planning models (MPS)"},
      {"solve", "Compute upper bounds with the three-step heuristic"},
      {"evaluate", "Collect the upper-bound ledger and recovery scores"},
      {"report", "Write best-bound and generation-mix tables"},
      {"all", "Run every stage in order"}};
  for (const auto& [name, help] : stages) app.add_subcommand(name, help);

  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic instance with planted structure");
  stagg::SynthConfig sc;
  synth->add_option("--power-nodes", sc.power_nodes, "Power nodes")->capture_default_str();
  synth->add_option("--gas-nodes", sc.gas_nodes, "Gas nodes")->capture_default_str();
  synth->add_option("--communities", sc.communities, "Planted node communities")->capture_default_str();
  synth->add_option("--days", sc.days, "Days")->capture_default_str();
  synth->add_option("--archetypes", sc.archetypes, "Planted day archetypes")->capture_default_str();
  synth->add_option("--hours", sc.hours_per_day, "Hours per day")->capture_default_str();
  synth->add_option("--noise", sc.noise, "Relative noise")->capture_default_str();
  bool no_storage = false;
  synth->add_flag("--no-storage", no_storage, "Leave out batteries");

  app.add_subcommand("schema", "Print the configuration reference with defaults");

  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    if (name == "schema") {
      std::cout << stagg::schema_reference();
      return 0;
    }
    if (name == "synth") {
      if (!out) throw stagg::UsageError("synth needs --out <dir>");
      if (seed) sc.seed = *seed;
      sc.storage = !no_storage;
      stagg::write_synth(stagg::synthesize(sc), *out);
      std::cout << "synth: " << *out << "\n";
      return 0;
    }
    if (config_path.empty()) throw stagg::UsageError(name + " needs --config <path>");
    stagg::RunConfig config = stagg::RunConfig::load(config_path);
    if (seed) config.seed = *seed;
    if (out) {
      config.out = *out;
    } else if (const char* env = std::getenv("STAGG_OUT"); env && *env) {
      config.out = env;
    }
    stagg::Experiment pipeline(config, jobs, &std::cout);
    if (name == "all") {
      pipeline.all();
    } else {
      for (stagg::Stage s : {stagg::Stage::ingest, stagg::Stage::train, stagg::Stage::aggregate, stagg::Stage::build,
                             stagg::Stage::solve, stagg::Stage::evaluate, stagg::Stage::report}) {
        if (stagg::to_string(s) == name) pipeline.run(s);
      }
    }
  } catch (const stagg::Error& e) {
    std::cerr << "stagg: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "stagg: unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
