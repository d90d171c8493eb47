#include "hyperq/query.hpp"

#include <gtest/gtest.h>

#include <deque>
#include <random>
#include <set>

#include "hyperq/matcher.hpp"
#include "test_util.hpp"

namespace hyperq {
namespace {

using S = Validity::Status;

const QueryNode T = QueryNode::target();
QueryNode A(std::uint32_t e) { return QueryNode::anchor(EntityId(e)); }
QueryNode V(std::uint32_t v) { return QueryNode::var(v); }
QueryStatement edge(QueryNode h, std::uint32_t r, QueryNode t, Direction d = Direction::Forward, Qualifiers q = {}) {
  return {h, RelationId(r), d, t, std::move(q)};
}

// Independent all-pairs shortest paths (Floyd-Warshall) over the undirected shape.
std::size_t apsp_diameter(const QueryGraph& q) {
  const auto& nodes = q.nodes();
  const std::size_t n = nodes.size();
  const std::size_t inf = 1000;
  std::vector<std::vector<std::size_t>> d(n, std::vector<std::size_t>(n, inf));
  const auto at = [&](const QueryNode& x) { return std::size_t(std::find(nodes.begin(), nodes.end(), x) - nodes.begin()); };
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0;
  for (const auto& s : q.statements()) d[at(s.head)][at(s.tail)] = d[at(s.tail)][at(s.head)] = 1;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  std::size_t best = 0;
  for (auto& row : d)
    for (auto x : row)
      if (x < inf) best = std::max(best, x);
  return best;
}

TEST(Validate, Minimal1pIsValid) { EXPECT_EQ(validate(QueryGraph({edge(A(1), 1, T)})).status, S::Valid); }

TEST(Validate, TargetOutEdgesAreRelaxable) {
  const QueryGraph q({edge(A(1), 1, T), edge(T, 2, V(0)), edge(V(0), 3, A(3))});
  EXPECT_EQ(validate(q).status, S::Relaxable);
}

TEST(Validate, TwoCycleIsInvalid) {
  const Validity v = validate(QueryGraph({edge(T, 1, V(0)), edge(V(0), 1, T)}));
  EXPECT_EQ(v.status, S::Invalid);
  EXPECT_EQ(v.reason, "cycle");
}

TEST(Validate, StructuralFailures) {
  EXPECT_EQ(validate(QueryGraph()).status, S::Invalid);
  EXPECT_EQ(validate(QueryGraph({edge(A(1), 1, V(0))})).status, S::Invalid);  // no target
  EXPECT_EQ(validate(QueryGraph({edge(A(1), 1, V(1)), edge(V(1), 1, T)})).status, S::Invalid);  // sparse vars
  EXPECT_EQ(validate(QueryGraph({edge(V(0), 1, V(0)), edge(V(0), 1, T)})).status, S::Invalid);
}

TEST(Validate, AllPatternsValid) {
  std::mt19937_64 rng(1);
  const KnowledgeGraph g = testing::random_graph(rng, 10, 3, 40);
  for (Pattern p : kAllPatterns) EXPECT_TRUE(validate(testing::random_query(rng, g, p)).valid()) << to_string(p);
}

TEST(Canonicalize, ValidQueryIsFixpoint) {
  const QueryGraph q = instantiate(Pattern::PI, std::vector{EntityId(1), EntityId(2)},
                                   std::vector{RelationId(0), RelationId(1), RelationId(2)}, std::vector<Qualifiers>(3));
  const QueryGraph c = canonicalize(q);
  EXPECT_EQ(c, q);
}

TEST(Canonicalize, RelaxedExampleBecomes1p2i) {
  const QueryGraph q({edge(A(1), 1, T), edge(T, 2, V(0)), edge(V(0), 3, A(3))});
  const QueryGraph c = canonicalize(q);
  const QueryGraph expected({edge(A(1), 1, T), edge(V(0), 2, T, Direction::Inverse), edge(A(3), 3, V(0), Direction::Inverse)});
  EXPECT_EQ(c, expected);
  EXPECT_TRUE(validate(c).valid());
}

TEST(Canonicalize, InvalidThrows) {
  EXPECT_THROW(canonicalize(QueryGraph({edge(T, 1, V(0)), edge(V(0), 1, T)})), Error);
}

// Random orientation of every edge of a random pattern; inverted edges swap ends and
// direction, so the query means the same thing.
QueryGraph scramble_directions(std::mt19937_64& rng, const QueryGraph& q) {
  std::bernoulli_distribution coin(0.5);
  std::vector<QueryStatement> st;
  for (auto s : q.statements()) {
    if (coin(rng)) {
      std::swap(s.head, s.tail);
      s.direction = flip(s.direction);
    }
    st.push_back(s);
  }
  return QueryGraph(std::move(st), q.pattern());
}

TEST(Canonicalize, IdempotentAndAnswerPreserving) {
  std::mt19937_64 rng(21);
  std::size_t relaxable = 0, invalid = 0;
  for (int i = 0; i < 300; ++i) {
    const KnowledgeGraph g = testing::random_graph(rng, 12, 3, 60);
    const QueryGraph q = scramble_directions(rng, testing::random_query(rng, g));
    const Validity v = validate(q);
    // Coinciding random anchors can close a two-edge loop once scrambled.
    if (!v.usable()) {
      ++invalid;
      continue;
    }
    if (v.status == S::Relaxable) ++relaxable;
    const QueryGraph c = canonicalize(q);
    EXPECT_TRUE(validate(c).valid());
    EXPECT_EQ(canonicalize(c), c);
    EXPECT_EQ(answer_set(g, c), answer_set(g, q));
    EXPECT_EQ(testing::brute_force_answers(g, c), testing::brute_force_answers(g, q));
  }
  EXPECT_GT(relaxable, 100u);
  EXPECT_LT(invalid, 30u);
}

TEST(Instantiate, Fig1Shape) {
  const KnowledgeGraph g = testing::einstein_graph();
  const QueryGraph q = testing::einstein_query(g);
  ASSERT_EQ(q.statements().size(), 2u);
  EXPECT_EQ(q.num_vars(), 1u);
  EXPECT_EQ(q.pattern(), Pattern::P2);
  const QueryStatement& last = q.statements().back();
  EXPECT_EQ(last.head, V(0));
  EXPECT_EQ(last.tail, T);
  ASSERT_EQ(last.qualifiers.size(), 1u);
  EXPECT_EQ(g.entities().label(last.qualifiers[0].value), "BSc");
}

TEST(Instantiate, TwoIntersectionSharesTarget) {
  const QueryGraph q = instantiate(Pattern::I2, std::vector{EntityId(1), EntityId(2)},
                                   std::vector{RelationId(1), RelationId(2)}, std::vector<Qualifiers>(2));
  ASSERT_EQ(q.statements().size(), 2u);
  for (const auto& s : q.statements()) EXPECT_EQ(s.tail, T);
  EXPECT_EQ(q.num_vars(), 0u);
}

TEST(Instantiate, ArityMismatchThrows) {
  EXPECT_THROW(instantiate(Pattern::P2, std::vector{EntityId(1)}, std::vector{RelationId(1)}, std::vector<Qualifiers>(1)), Error);
}

TEST(Diameter, PatternsAgainstFloydWarshall) {
  std::mt19937_64 rng(2);
  const KnowledgeGraph g = testing::random_graph(rng, 10, 3, 40);
  const std::map<Pattern, std::size_t> expected = {{Pattern::P1, 1}, {Pattern::P2, 2}, {Pattern::P3, 3}, {Pattern::I2, 2},
                                                   {Pattern::I3, 2}, {Pattern::IP, 2}, {Pattern::PI, 3}};
  for (Pattern p : kAllPatterns) {
    const QueryGraph q = testing::random_query(rng, g, p);
    EXPECT_EQ(diameter(q), apsp_diameter(q)) << to_string(p);
  }
  for (Pattern p : kAllPatterns) {
    const PatternArity ar = arity(p);
    std::vector<EntityId> anchors;
    for (std::uint32_t i = 0; i < ar.anchors; ++i) anchors.push_back(EntityId(i));
    const QueryGraph q = instantiate(p, anchors, std::vector<RelationId>(ar.edges, RelationId(0)), std::vector<Qualifiers>(ar.edges));
    EXPECT_EQ(diameter(q), expected.at(p)) << to_string(p);
    EXPECT_EQ(apsp_diameter(q), expected.at(p)) << to_string(p);
  }
}

TEST(StripQualifiers, DropsPairsAndIsIdempotent) {
  const KnowledgeGraph g = testing::einstein_graph();
  const QueryGraph q = testing::einstein_query(g);
  const QueryGraph s = strip_qualifiers(q);
  ASSERT_EQ(s.statements().size(), q.statements().size());
  for (std::size_t i = 0; i < s.statements().size(); ++i) {
    EXPECT_TRUE(s.statements()[i].qualifiers.empty());
    EXPECT_EQ(s.statements()[i].head, q.statements()[i].head);
    EXPECT_EQ(s.statements()[i].tail, q.statements()[i].tail);
  }
  EXPECT_EQ(strip_qualifiers(s), s);
}

TEST(StripQualifiers, AnswersGrow) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const KnowledgeGraph g = testing::random_graph(rng, 15, 3, 80);
    const QueryGraph q = testing::random_query(rng, g);
    const AnswerSet a = answer_set(g, q), b = answer_set(g, strip_qualifiers(q));
    EXPECT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
  }
}

TEST(Reify, SingleQualifiedStatement) {
  KnowledgeGraph g;
  using Q = std::vector<std::pair<std::string, std::string>>;
  g.add("a", "r", "b", Q{{"q", "c"}}, Split::Train);
  const KnowledgeGraph r = reify(g);
  EXPECT_EQ(r.num_statements(), 4u);
  EXPECT_EQ(r.num_relations(), g.num_relations() + 3);
  // Every triple hangs off the one blank node; exactly one object is a relation node.
  const ReificationScheme scheme{g.num_entities(), g.num_relations()};
  std::set<EntityId> blanks, relation_nodes;
  for (const auto& s : r.statements()) {
    EXPECT_TRUE(s.qualifiers.empty());
    blanks.insert(s.head);
    if (s.tail.index() >= scheme.entities && s.tail.index() < scheme.query_entities()) relation_nodes.insert(s.tail);
  }
  EXPECT_EQ(blanks, std::set<EntityId>{r.entities().at("_:s0")});
  EXPECT_EQ(relation_nodes, std::set<EntityId>{r.entities().at("rel:r")});
}

TEST(Reify, PlainStatementGivesThreeTriples) {
  KnowledgeGraph g;
  g.add("a", "r", "b", {}, Split::Validation);
  const KnowledgeGraph r = reify(g);
  EXPECT_EQ(r.num_statements(), 3u);
  for (const auto& s : r.statements()) EXPECT_EQ(s.split, Split::Validation);
}

TEST(Reify, QualifiedTwoHopQueryHasNineNodesEightEdges) {
  const QueryGraph q = instantiate(Pattern::P2, std::vector{EntityId(0)}, std::vector{RelationId(0), RelationId(1)},
                                   std::vector<Qualifiers>{{{RelationId(2), EntityId(5)}}, {{RelationId(2), EntityId(6)}}});
  const ReificationScheme scheme{10, 3};
  const QueryGraph r = reify(q, scheme);
  EXPECT_EQ(r.nodes().size(), 9u);
  EXPECT_EQ(r.statements().size(), 8u);
  EXPECT_EQ(r.num_vars(), 3u);
  EXPECT_TRUE(validate(r).usable());
}

TEST(Reify, DistinctStatementsGiveDistinctTripleSets) {
  std::mt19937_64 rng(9);
  const KnowledgeGraph g = testing::random_graph(rng, 10, 3, 80);
  const KnowledgeGraph r = reify(g);
  const ReificationScheme scheme{g.num_entities(), g.num_relations()};
  // Collect each blank node's outgoing triple set with the blank itself erased.
  std::set<std::vector<std::tuple<std::uint32_t, std::uint32_t>>> seen;
  for (StatementId i = 0; i < g.num_statements(); ++i) {
    std::vector<std::tuple<std::uint32_t, std::uint32_t>> out;
    for (StatementId sid : r.by_head(scheme.blank_node(i))) out.emplace_back(r.statement(sid).relation.value, r.statement(sid).tail.value);
    std::sort(out.begin(), out.end());
    EXPECT_TRUE(seen.insert(out).second);
  }
}

TEST(Reify, VocabularyCollisionThrows) {
  Vocabulary<EntityId> e;
  Vocabulary<RelationId> r;
  r.intern("x");
  e.intern("rel:x");
  EXPECT_THROW(extend_vocabulary_for_reification(e, r), Error);
}

TEST(CanonicalForm, RenamedVariablesCollapse) {
  const QueryGraph a({edge(A(1), 1, V(0)), edge(V(0), 2, V(1)), edge(V(1), 3, T)});
  const QueryGraph b({edge(A(1), 1, V(1)), edge(V(1), 2, V(0)), edge(V(0), 3, T)});
  EXPECT_NE(a, b);
  EXPECT_EQ(canonical_form(a), canonical_form(b));
  const QueryGraph c({edge(A(1), 1, V(0)), edge(V(0), 3, V(1)), edge(V(1), 2, T)});
  EXPECT_NE(canonical_form(a), canonical_form(c));
}

TEST(CanonicalForm, SymmetricBranches) {
  const QueryGraph a({edge(A(1), 1, V(0)), edge(A(2), 1, V(1)), edge(V(0), 2, T), edge(V(1), 3, T)});
  const QueryGraph b({edge(A(1), 1, V(1)), edge(A(2), 1, V(0)), edge(V(1), 2, T), edge(V(0), 3, T)});
  EXPECT_EQ(canonical_form(a), canonical_form(b));
  EXPECT_EQ(canonical_form(canonical_form(a)), canonical_form(a));
}

TEST(Json, RoundTripAndStableLayout) {
  const KnowledgeGraph g = testing::einstein_graph();
  const QueryGraph q = testing::einstein_query(g);
  const auto j = to_json(q, VocabView::of(g));
  EXPECT_EQ(j.dump(),
            R"({"pattern":"2p","nodes":[{"kind":"anchor","id":"PhotoelectricEffect"},{"kind":"var","id":0},{"kind":"target"}],)"
            R"("statements":[{"head":0,"relation":"discovered_by","direction":"forward","tail":1,"qualifiers":[]},)"
            R"({"head":1,"relation":"educated_at","direction":"forward","tail":2,"qualifiers":[["degree","BSc"]]}]})");
  const QueryGraph back = query_from_json(nlohmann::json::parse(j.dump()), VocabView::of(g));
  EXPECT_EQ(back, q);
  EXPECT_EQ(back.pattern(), q.pattern());
}

TEST(Json, RejectsVariablesInRelationOrQualifierPosition) {
  const KnowledgeGraph g = testing::einstein_graph();
  auto j = nlohmann::json::parse(to_json(testing::einstein_query(g), VocabView::of(g)).dump());
  auto bad_rel = j;
  bad_rel["statements"][0]["relation"] = 0;
  EXPECT_THROW(query_from_json(bad_rel, VocabView::of(g)), Error);
  auto bad_q = j;
  bad_q["statements"][1]["qualifiers"][0][1] = nlohmann::json{{"kind", "var"}, {"id", 0}};
  EXPECT_THROW(query_from_json(bad_q, VocabView::of(g)), Error);
}

}  // namespace
}  // namespace hyperq
