#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hyperq/error.hpp"
#include "hyperq/ids.hpp"

namespace hyperq {

/// Bidirectional label <-> dense id map. Ids are assigned in first-seen order.
template <class IdT>
class Vocabulary {
 public:
  IdT intern(std::string_view label) {
    auto it = index_.find(std::string(label));
    if (it != index_.end()) return it->second;
    IdT id(static_cast<std::uint32_t>(labels_.size()));
    labels_.emplace_back(label);
    index_.emplace(labels_.back(), id);
    return id;
  }
  std::optional<IdT> find(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  IdT at(std::string_view label) const {
    if (auto id = find(label)) return *id;
    throw Error("unknown_label", "unknown label '" + std::string(label) + "'");
  }
  const std::string& label(IdT id) const { return labels_.at(id.index()); }
  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

  bool operator==(const Vocabulary& o) const { return labels_ == o.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, IdT> index_;
};

struct QualifierPair {
  RelationId relation;
  EntityId value;
  auto operator<=>(const QualifierPair&) const = default;
};

/// Sorted, duplicate-free qualifier set.
using Qualifiers = std::vector<QualifierPair>;

/// Sorts and deduplicates in place, turning any pair list into a set.
void normalize(Qualifiers& q);

/// Monotone qualifier semantics: a query qualifier set matches a data qualifier set iff it
/// is a subset of it. Both inputs must be normalized.
bool qualifier_match(std::span<const QualifierPair> query_qp, std::span<const QualifierPair> data_qp);

struct Statement {
  EntityId head;
  RelationId relation;
  EntityId tail;
  Qualifiers qualifiers;
  Split split = Split::Train;

  /// Identity ignores the split tag: the same fact in two files is one statement.
  bool same_fact(const Statement& o) const {
    return head == o.head && relation == o.relation && tail == o.tail && qualifiers == o.qualifiers;
  }
};

using StatementId = std::uint32_t;

class KnowledgeGraph {
 public:
  Vocabulary<EntityId>& entities() { return entities_; }
  Vocabulary<RelationId>& relations() { return relations_; }
  const Vocabulary<EntityId>& entities() const { return entities_; }
  const Vocabulary<RelationId>& relations() const { return relations_; }

  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }
  std::size_t num_statements() const { return statements_.size(); }

  /// Adds a statement, returning false when an identical fact already exists (the first
  /// occurrence keeps its split tag). Qualifiers are normalized here.
  bool add(Statement s);
  /// Label-level convenience used by ingest and tests.
  bool add(std::string_view h, std::string_view r, std::string_view t,
           std::span<const std::pair<std::string, std::string>> qualifiers, Split split);

  const std::vector<Statement>& statements() const { return statements_; }
  const Statement& statement(StatementId id) const { return statements_.at(id); }

  std::span<const StatementId> by_head(EntityId e) const;
  std::span<const StatementId> by_tail(EntityId e) const;
  std::span<const StatementId> by_relation(RelationId r) const;
  std::span<const StatementId> by_head_relation(EntityId e, RelationId r) const;
  std::span<const StatementId> by_tail_relation(EntityId e, RelationId r) const;

  /// Number of statements (all splits) whose tail is `e`.
  std::size_t in_degree(EntityId e) const;
  std::size_t max_in_degree() const;

  /// Histogram of statements by qualifier count: index k = statements with k pairs.
  std::vector<std::size_t> qualifier_histogram() const;

  std::size_t count(Split s) const;

 private:
  static std::uint64_t pair_key(EntityId e, RelationId r) { return (std::uint64_t(e.value) << 32) | r.value; }
  std::uint64_t fact_hash(const Statement& s) const;
  void grow_entity_index();

  Vocabulary<EntityId> entities_;
  Vocabulary<RelationId> relations_;
  std::vector<Statement> statements_;
  std::vector<std::vector<StatementId>> by_head_, by_tail_, by_relation_;
  std::unordered_map<std::uint64_t, std::vector<StatementId>> by_head_relation_, by_tail_relation_;
  std::unordered_multimap<std::uint64_t, StatementId> facts_;
};

/// Parses `h,r,t[,qr1,qv1[,qr2,qv2...]]` lines (no header, UTF-8) into `g` with the given
/// split tag. Blank lines are skipped. Returns the number of new statements.
std::size_t ingest_csv(KnowledgeGraph& g, std::istream& in, Split split, const std::string& source = "<stream>");
std::size_t ingest_csv(KnowledgeGraph& g, const std::filesystem::path& path, Split split);

/// Writes one split of the graph back in the ingest format.
void write_csv(const KnowledgeGraph& g, std::ostream& out, Split split);

/// Loads `train.csv`, `validation.csv`, `test.csv` (in that order) from a directory.
KnowledgeGraph load_graph_dir(const std::filesystem::path& dir);
void save_graph_dir(const KnowledgeGraph& g, const std::filesystem::path& dir);

/// Summary statistics in the graph stats JSON layout.
std::string stats_json(const KnowledgeGraph& g);

struct SynthProfile {
  // Fractions of plain statements carrying zero, one or two qualifier pairs (normalized).
  double frac_q0 = 1.0;
  double frac_q1 = 0.0;
  double frac_q2 = 0.0;
  // Emit (h, r) pairs whose tails are distinguished only by a qualifier value.
  bool discriminative = false;
  double discriminative_rate = 0.6;
  // With probability hub_fraction a tail is one of `hubs` hub entities, drawn with this
  // Zipf exponent, otherwise uniformly; with tail_skew 0 tails follow the cluster rule.
  double tail_skew = 0.0;
  double hub_fraction = 0.5;
  std::size_t hubs = 10;
  std::size_t relations_per_entity = 3;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;

  static SynthProfile none();
  static SynthProfile mixed();
  static SynthProfile discriminative_profile();
  static SynthProfile skewed();
  static SynthProfile by_name(std::string_view name);
};

/// Deterministic synthetic hyper-relational graph. Entities are `e<k>`, relations `r<k>`.
/// Entities fall into latent clusters of ~10, and each (relation, qualifier value) selects
/// the tail cluster, so held-out edges remain predictable.
KnowledgeGraph synth_graph(std::uint64_t seed, std::size_t n_entities, std::size_t n_relations,
                           const SynthProfile& profile);

/// Number of (h, r) pairs, and how many of those have >= 2 tails that carry distinct
/// non-empty qualifier sets (tails separable only by qualifiers).
struct DiscriminativeStats {
  std::size_t head_relation_pairs = 0;
  std::size_t separable_pairs = 0;
  double fraction() const {
    return head_relation_pairs == 0 ? 0.0 : double(separable_pairs) / double(head_relation_pairs);
  }
};
DiscriminativeStats discriminative_stats(const KnowledgeGraph& g);

}  // namespace hyperq
