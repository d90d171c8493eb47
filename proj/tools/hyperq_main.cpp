#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "hyperq/error.hpp"
#include "hyperq/pipeline.hpp"

namespace {

int fail(const std::string& kind, const std::string& message, int code) {
  nlohmann::ordered_json j;
  j["error"] = {{"kind", kind}, {"message", message}};
  std::cerr << j.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyper-relational query answering workbench"};
  app.fallthrough();
  app.require_subcommand(1, 1);

  std::string config_path, regime, baseline, patterns, out;
  std::optional<std::uint64_t> seed;
  std::string query_file;
  bool faithfulness = false;
  app.add_option("--config", config_path, "INI experiment config");
  app.add_option("--seed", seed, "Run a single seed instead of the configured list");
  app.add_option("--pattern", patterns, "Comma-separated query patterns (1p,2p,3p,2i,3i,2i-1p,1p-2i)");
  app.add_option("--regime", regime, "all | q2b-like | emql-like | mpqe-like | mpqe-like+reif");
  app.add_option("--baseline", baseline, "starqe | triple-only | reification | zero-layers | oracle");
  app.add_option("--out", out, "Output directory");

  const char* help[] = {"Read CSV statement files into the graph directory",
                        "Generate a synthetic graph",
                        "Sample query bundles for each pattern",
                        "Reify the graph and every bundle",
                        "Train the configured baseline under the configured regime",
                        "Evaluate a trained run (or the oracle) on validation and test",
                        "Expected metrics of the qualifier-blind oracle",
                        "Exact answers of a query file",
                        "Merge per-seed metrics into mean and std tables"};
  std::string command;
  for (std::size_t i = 0; i < hyperq::subcommands().size(); ++i) {
    const std::string& name = hyperq::subcommands()[i];
    CLI::App* sub = app.add_subcommand(name, help[i]);
    sub->callback([&command, name] { command = name; });
    if (name == "eval") sub->add_flag("--faithfulness", faithfulness, "Also evaluate on the training queries");
    if (name == "answer") sub->add_option("--query", query_file, "Query JSON file")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what(), 2);
  }

  try {
    hyperq::ExperimentConfig cfg = config_path.empty() ? hyperq::ExperimentConfig{} : hyperq::ExperimentConfig::load(config_path);
    if (seed) cfg.seeds = {*seed};
    if (!regime.empty()) cfg.regime = hyperq::regime_from_string(regime);
    if (!baseline.empty()) cfg.baseline = hyperq::baseline_from_string(baseline);
    if (!out.empty()) cfg.out = out;
    if (!patterns.empty()) {
      cfg.patterns.clear();
      std::stringstream ss(patterns);
      for (std::string p; std::getline(ss, p, ',');) cfg.patterns.push_back(hyperq::pattern_from_string(p));
    }
    hyperq::CommandOptions opts;
    opts.faithfulness = faithfulness;
    if (!query_file.empty()) opts.query_file = query_file;
    std::cout << hyperq::run_command(command, cfg, opts).dump(2) << '\n';
    return 0;
  } catch (const hyperq::Error& e) {
    return fail(e.kind(), e.what(), e.kind() == "diverged" ? 3 : 1);
  } catch (const std::exception& e) {
    return fail("internal_error", e.what(), 1);
  }
}
