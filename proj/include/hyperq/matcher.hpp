#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "hyperq/kg.hpp"
#include "hyperq/query.hpp"

namespace hyperq {

/// Sorted, duplicate-free set of answer entities.
using AnswerSet = std::vector<EntityId>;

struct MatchOptions {
  SplitSet splits = SplitSet::all();
  /// Stop once this many distinct answers are found.
  std::size_t result_cap = std::numeric_limits<std::size_t>::max();
  bool ignore_qualifiers = false;
};

/// Exact answers of `q` over the statements of `g` whose split is in `opts.splits`:
/// every entity that can be bound to the target by a homomorphism mapping each query
/// statement onto a data statement with monotone (subset) qualifier matching.
/// Backtracking search; at each step the unmatched statement with the fewest candidates
/// under the current binding is expanded next.
AnswerSet answer_set(const KnowledgeGraph& g, const QueryGraph& q, const MatchOptions& opts = {});
AnswerSet answer_set(const KnowledgeGraph& g, const QueryGraph& q, SplitSet splits);

/// Same query with every qualifier set treated as empty.
AnswerSet answer_set_ignoring_qualifiers(const KnowledgeGraph& g, const QueryGraph& q, SplitSet splits = SplitSet::all());

}  // namespace hyperq
