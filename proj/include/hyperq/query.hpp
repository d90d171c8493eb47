#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hyperq/kg.hpp"
#include "json.hpp"

namespace hyperq {

enum class NodeKind : std::uint8_t { Anchor = 0, Var = 1, Target = 2 };

/// A query node: a concrete anchor entity, an existential variable, or the target.
/// Ordering is anchors (by entity id), then variables (by index), then the target.
struct QueryNode {
  NodeKind kind = NodeKind::Target;
  std::uint32_t id = 0;  // entity id for anchors, variable index for variables

  static constexpr QueryNode anchor(EntityId e) { return {NodeKind::Anchor, e.value}; }
  static constexpr QueryNode var(std::uint32_t v) { return {NodeKind::Var, v}; }
  static constexpr QueryNode target() { return {NodeKind::Target, 0}; }

  bool is_anchor() const { return kind == NodeKind::Anchor; }
  bool is_var() const { return kind == NodeKind::Var; }
  bool is_target() const { return kind == NodeKind::Target; }
  EntityId entity() const { return EntityId(id); }

  auto operator<=>(const QueryNode&) const = default;
};

enum class Direction : std::uint8_t { Forward = 0, Inverse = 1 };

inline Direction flip(Direction d) { return d == Direction::Forward ? Direction::Inverse : Direction::Forward; }

/// (head, relation, direction, tail, qualifiers). An Inverse statement (x, r^-1, y)
/// matches the data statement (y, r, x).
struct QueryStatement {
  QueryNode head;
  RelationId relation;
  Direction direction = Direction::Forward;
  QueryNode tail;
  Qualifiers qualifiers;

  auto operator<=>(const QueryStatement&) const = default;
  bool operator==(const QueryStatement&) const = default;
};

enum class Pattern : std::uint8_t { P1, P2, P3, I2, I3, IP, PI };

inline constexpr std::array<Pattern, 7> kAllPatterns = {Pattern::P1, Pattern::P2, Pattern::P3, Pattern::I2,
                                                        Pattern::I3, Pattern::IP, Pattern::PI};

/// "1p", "2p", "3p", "2i", "3i", "2i-1p", "1p-2i".
std::string_view to_string(Pattern p);
Pattern pattern_from_string(std::string_view s);
bool has_join(Pattern p);

/// A conjunctive hyper-relational query. Statements form a set: they are kept sorted and
/// duplicate-free, and each qualifier set is normalized.
class QueryGraph {
 public:
  QueryGraph() = default;
  explicit QueryGraph(std::vector<QueryStatement> statements, std::optional<Pattern> pattern = std::nullopt);

  const std::vector<QueryStatement>& statements() const { return statements_; }
  std::optional<Pattern> pattern() const { return pattern_; }
  void set_pattern(std::optional<Pattern> p) { pattern_ = p; }

  /// Distinct nodes in canonical order.
  const std::vector<QueryNode>& nodes() const { return nodes_; }
  std::size_t num_vars() const;
  bool empty() const { return statements_.empty(); }

  bool operator==(const QueryGraph& o) const { return statements_ == o.statements_; }

 private:
  std::vector<QueryStatement> statements_;
  std::vector<QueryNode> nodes_;
  std::optional<Pattern> pattern_;
};

struct Validity {
  enum class Status { Valid, Relaxable, Invalid };
  Status status = Status::Valid;
  std::string reason;

  bool valid() const { return status == Status::Valid; }
  bool usable() const { return status != Status::Invalid; }
};

/// Checks the query-graph conditions (acyclic; anchors precede variables in some
/// topological order; target last) on the stored edge directions. Queries that satisfy them
/// only after inverting some edges are Relaxable; directed cycles are Invalid.
Validity validate(const QueryGraph& q);

/// Flips the edges that point into an anchor or out of the target, marking them Inverse.
/// Returns valid queries unchanged. Throws on Invalid input.
QueryGraph canonicalize(const QueryGraph& q);

/// Builds the query of shape `p`. Edge order (for `relations` and `qualifiers`):
///   1p: a0->T; 2p: a0->v0->T; 3p: a0->v0->v1->T; 2i: a0->T, a1->T; 3i: a0..a2->T;
///   2i-1p: a0->v0, a1->v0, v0->T; 1p-2i: a0->v0, v0->T, a1->T.
QueryGraph instantiate(Pattern p, std::span<const EntityId> anchors, std::span<const RelationId> relations,
                       std::span<const Qualifiers> qualifiers);

struct PatternArity {
  std::size_t anchors;
  std::size_t edges;
};
PatternArity arity(Pattern p);

QueryGraph strip_qualifiers(const QueryGraph& q);

/// Undirected diameter: the longest shortest path between two nodes.
std::size_t diameter(const QueryGraph& q);

/// Renumbers variables so that isomorphic queries (equal up to variable renaming) map to
/// the same representative. Exact: refinement colours only prune the permutation search.
QueryGraph canonical_form(const QueryGraph& q);

/// Id layout of a reified graph built from a graph with `entities` entities and
/// `relations` relations: original ids are kept, the three rdf relations follow the
/// original relations, relation nodes follow the original entities, and statement blank
/// nodes come last.
struct ReificationScheme {
  std::size_t entities = 0;
  std::size_t relations = 0;

  RelationId rdf_subject() const { return RelationId(static_cast<std::uint32_t>(relations)); }
  RelationId rdf_predicate() const { return RelationId(static_cast<std::uint32_t>(relations + 1)); }
  RelationId rdf_object() const { return RelationId(static_cast<std::uint32_t>(relations + 2)); }
  EntityId relation_node(RelationId r) const { return EntityId(static_cast<std::uint32_t>(entities + r.index())); }
  EntityId blank_node(StatementId s) const { return EntityId(static_cast<std::uint32_t>(entities + relations + s)); }
  std::size_t reified_relations() const { return relations + 3; }
  /// Entities usable by queries: originals plus relation nodes (blank nodes excluded).
  std::size_t query_entities() const { return entities + relations; }
};

/// Standard RDF reification of every statement into plain triples, keeping split tags.
KnowledgeGraph reify(const KnowledgeGraph& g);
/// Reification of a query; each statement's blank node becomes a fresh variable.
QueryGraph reify(const QueryGraph& q, const ReificationScheme& scheme);
/// Extends a vocabulary pair with the reified labels (`rel:<label>`, rdf relations) so
/// reified queries can be serialized.
void extend_vocabulary_for_reification(Vocabulary<EntityId>& entities, Vocabulary<RelationId>& relations);

// --- serialization ---------------------------------------------------------------

struct VocabView {
  const Vocabulary<EntityId>& entities;
  const Vocabulary<RelationId>& relations;
  static VocabView of(const KnowledgeGraph& g) { return {g.entities(), g.relations()}; }
};

nlohmann::ordered_json to_json(const QueryGraph& q, const VocabView& vocab);
QueryGraph query_from_json(const nlohmann::json& j, const VocabView& vocab);

}  // namespace hyperq
