#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hyperq/kg.hpp"
#include "hyperq/matcher.hpp"
#include "hyperq/sampler.hpp"

namespace hyperq {

struct AnswerRank {
  EntityId answer;
  double rank = 1;  // filtered realistic rank, may be a half-integer
};

struct RankingResult {
  std::vector<AnswerRank> ranks;
  /// |C|: candidates left after filtering, counting the ranked answer itself.
  std::size_t candidate_count = 0;
  /// Number of ranked answers; each rank has weight 1 / answer_cardinality.
  std::size_t answer_cardinality = 0;
};

/// Filtered realistic ranks of the hard answers (answers \ easy). For each ranked answer
/// all other answers and all easy answers are removed from the candidates; the rank is
/// the mean of the first and last position of its tie block.
RankingResult ranks(std::span<const double> scores, const AnswerSet& answers, const AnswerSet& easy_answers = {});

inline constexpr std::size_t kDefaultKs[] = {1, 3, 10};

struct Metrics {
  std::map<std::size_t, double> hits;
  double mrr = 0;
  double amri = 0;
  std::size_t queries = 0;
};

/// Weighted Hits@k, MRR and AMRI. Every rank of query i has weight 1/|A_i|.
Metrics aggregate(std::span<const RankingResult> results, std::span<const std::size_t> ks = kDefaultKs);

/// Expected metrics of a ranker that knows every triple but ignores qualifiers: it puts the
/// qualifier-free answers S of each query first in an order it cannot refine. Each hard
/// answer's filtered rank is uniform on 1..M with M = |S| - |A| + 1.
Metrics oracle_expected_metrics(const KnowledgeGraph& g_full, std::span<const DatasetQuery> queries,
                                std::span<const std::size_t> ks = kDefaultKs);

/// Scores every candidate entity for a query.
using Scorer = std::function<std::vector<double>(const QueryGraph&)>;

/// Ranks every query with `scorer`, in parallel over at most `threads` workers; output
/// order follows input order.
std::vector<RankingResult> rank_all(std::span<const DatasetQuery> queries, const Scorer& scorer, std::size_t threads = 1);

/// Rows keyed by (pattern, split).
struct MetricReport {
  struct Row {
    std::string pattern;
    std::string split;
    Metrics metrics;
  };
  std::vector<Row> rows;

  const Metrics* find(const std::string& pattern, const std::string& split) const;
  nlohmann::ordered_json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  /// Aligned plain-text table, one column per pattern.
  std::string to_table(const std::string& split = "test") const;
};

/// Mean and sample standard deviation across seeds of one (pattern, split) metric.
struct MergedValue {
  double mean = 0;
  double std = 0;
};

struct MergedReport {
  struct Row {
    std::string pattern;
    std::string split;
    std::map<std::string, MergedValue> values;  // "hits@1", ..., "mrr", "amri", "queries"
  };
  std::vector<Row> rows;
  std::size_t seeds = 0;

  nlohmann::ordered_json to_json() const;
  std::string to_table(const std::string& split = "test") const;
};

/// Requires every report to have the same rows; std is 0 for a single seed.
MergedReport merge_reports(std::span<const MetricReport> reports);

/// Parallelism cap from HYPERQ_THREADS (default: hardware concurrency, at least 1).
std::size_t thread_budget();

}  // namespace hyperq
