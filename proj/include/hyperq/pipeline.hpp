#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hyperq/config.hpp"
#include "hyperq/evaluator.hpp"
#include "hyperq/trainer.hpp"

namespace hyperq {

/// Artifact locations of one seed: `{out}/seed-{s}/...`.
struct SeedLayout {
  std::filesystem::path root;

  std::filesystem::path graph() const { return root / "graph"; }
  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path reified() const { return root / "reified"; }
  std::filesystem::path reified_data() const { return root / "reified" / "data"; }
  std::filesystem::path run(const std::string& name) const { return root / "runs" / name; }
};

SeedLayout seed_layout(const ExperimentConfig& cfg, std::uint64_t seed);
std::filesystem::path report_dir(const ExperimentConfig& cfg);

/// "oracle", or "{baseline}-{regime}" for trained runs.
std::string run_name(Baseline b, Regime r);

// --- baseline views ------------------------------------------------------------------

/// Queries as a baseline sees them: qualifiers stripped for triple-only, otherwise as is
/// (reified queries are read from the reified bundles).
std::vector<DatasetQuery> baseline_queries(std::span<const DatasetQuery> queries, Baseline b);
/// Model hyperparameters for a baseline; zero-layers drops message passing.
HyperParams baseline_hyperparams(HyperParams hp, Baseline b);
/// Table sizes for a graph of `g`; reified models also embed relation nodes and the three
/// rdf relations but still rank only the original entities.
ModelShape model_shape(const KnowledgeGraph& g, bool reified);
/// Vocabulary of a graph extended with the reification labels (no blank nodes).
struct ReifiedVocabulary {
  Vocabulary<EntityId> entities;
  Vocabulary<RelationId> relations;
  VocabView view() const { return {entities, relations}; }
};
ReifiedVocabulary reified_vocabulary(const KnowledgeGraph& g);

// --- subcommands -------------------------------------------------------------------
// Each returns a JSON summary of what it wrote. Errors are hyperq::Error.

struct CommandOptions {
  bool faithfulness = false;
  std::optional<std::filesystem::path> query_file;
};

nlohmann::ordered_json run_ingest(const ExperimentConfig& cfg, std::uint64_t seed);
nlohmann::ordered_json run_synth(const ExperimentConfig& cfg, std::uint64_t seed);
nlohmann::ordered_json run_sample(const ExperimentConfig& cfg, std::uint64_t seed);
nlohmann::ordered_json run_reify(const ExperimentConfig& cfg, std::uint64_t seed);
nlohmann::ordered_json run_train(const ExperimentConfig& cfg, std::uint64_t seed);
/// Validation and test metrics for every configured pattern; with `faithfulness` also the
/// train split, written separately.
nlohmann::ordered_json run_eval(const ExperimentConfig& cfg, std::uint64_t seed, bool faithfulness = false);
nlohmann::ordered_json run_oracle(const ExperimentConfig& cfg, std::uint64_t seed);
/// Exact answers of a query file over the seed's graph.
nlohmann::ordered_json run_answer(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& query_file);
/// Merges every run present for all seeds into `{out}/report/{run}.json` and `.txt`.
nlohmann::ordered_json run_report(const ExperimentConfig& cfg);

/// Dispatches a subcommand over every configured seed (report runs once).
nlohmann::ordered_json run_command(const std::string& command, const ExperimentConfig& cfg, const CommandOptions& opts = {});

const std::vector<std::string>& subcommands();

}  // namespace hyperq
