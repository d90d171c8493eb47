#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hyperq/kg.hpp"
#include "hyperq/matcher.hpp"
#include "hyperq/query.hpp"

namespace hyperq {

/// Which query edges carry qualifier pairs. An edge "carries" when the grounding statement
/// provides at least `min_pairs` pairs; it then receives the first min(max_pairs, |qp|).
struct QualifierCondition {
  enum class Edges { All, Any, None };
  Edges edges = Edges::All;
  std::size_t min_pairs = 1;
  std::size_t max_pairs = 1;
};

struct SamplingConfig {
  Pattern pattern = Pattern::P1;
  QualifierCondition qualifiers;
  std::size_t in_degree_threshold = 50;
  bool filter_in_degree = true;
  std::size_t max_queries_per_split = 1000;
  /// Upper bound on enumerated groundings; hitting it sets DatasetBundle::truncated.
  std::size_t max_groundings = 5'000'000;
  std::uint64_t seed = 0;

  /// Stable digest over every field.
  std::uint64_t hash() const;
};

struct DatasetQuery {
  QueryGraph query;
  AnswerSet answers;
  AnswerSet easy_answers;

  /// answers \ easy_answers: the entities that are ranked at evaluation time.
  AnswerSet hard_answers() const;
};

struct DatasetBundle {
  Pattern pattern = Pattern::P1;
  std::uint64_t config_hash = 0;
  std::array<std::vector<DatasetQuery>, 3> splits;
  std::size_t groundings = 0;
  bool truncated = false;
  /// Set when the pattern has no admissible grounding for some split.
  std::vector<std::string> warnings;

  std::vector<DatasetQuery>& split(Split s) { return splits[static_cast<std::size_t>(s)]; }
  const std::vector<DatasetQuery>& split(Split s) const { return splits[static_cast<std::size_t>(s)]; }
  std::size_t size() const { return splits[0].size() + splits[1].size() + splits[2].size(); }
};

/// Enumerates groundings of `cfg.pattern` in `g`, keeps those satisfying split provenance,
/// transductivity, the qualifier condition and the join in-degree filter, removes
/// isomorphic duplicates within each split, then takes a seeded sample of at most
/// `max_queries_per_split` per split with exact answer sets from the matcher:
///   train:      answers over {Train};                  easy = {}
///   validation: answers over {Train, Validation};      easy = answers over {Train}
///   test:       answers over all splits;               easy = answers over {Train, Validation}
/// Validation and test queries without hard answers are skipped.
DatasetBundle generate(const KnowledgeGraph& g, const SamplingConfig& cfg);

/// Weighted Hits@k of the single entity ranking that orders entities by how often they
/// are a hard answer in `split` of the bundle (ties by entity id).
double constant_ranking_hits(const DatasetBundle& bundle, std::size_t k, std::size_t num_entities,
                             Split split = Split::Test);

/// `{dir}/{pattern}_{split}.jsonl` per split plus `{dir}/{pattern}_meta.json`.
void write_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir, const VocabView& vocab);
DatasetBundle read_bundle(const std::filesystem::path& dir, Pattern pattern, const VocabView& vocab);
std::string bundle_meta_json(const DatasetBundle& bundle);

}  // namespace hyperq
