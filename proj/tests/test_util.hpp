#pragma once

// Shared generators and independent reference implementations for the test suites.

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "hyperq/kg.hpp"
#include "hyperq/query.hpp"

namespace hyperq::testing {

/// Small random hyper-relational graph with dense collisions so that queries match.
inline KnowledgeGraph random_graph(std::mt19937_64& rng, std::size_t n_entities, std::size_t n_relations,
                                   std::size_t n_statements, std::size_t max_qualifiers = 2) {
  KnowledgeGraph g;
  for (std::size_t i = 0; i < n_entities; ++i) g.entities().intern("e" + std::to_string(i));
  for (std::size_t i = 0; i < n_relations; ++i) g.relations().intern("r" + std::to_string(i));
  std::uniform_int_distribution<std::uint32_t> ent(0, static_cast<std::uint32_t>(n_entities - 1));
  std::uniform_int_distribution<std::uint32_t> rel(0, static_cast<std::uint32_t>(n_relations - 1));
  std::uniform_int_distribution<std::size_t> nq(0, max_qualifiers);
  std::uniform_int_distribution<int> split(0, 2);
  // Qualifier values come from a small pool so that subset matches are frequent.
  std::uniform_int_distribution<std::uint32_t> qval(0, static_cast<std::uint32_t>(std::min<std::size_t>(3, n_entities) - 1));
  for (std::size_t i = 0; i < n_statements; ++i) {
    Statement s;
    s.head = EntityId(ent(rng));
    s.relation = RelationId(rel(rng));
    s.tail = EntityId(ent(rng));
    const std::size_t k = nq(rng);
    for (std::size_t j = 0; j < k; ++j) s.qualifiers.push_back({RelationId(rel(rng)), EntityId(qval(rng))});
    s.split = static_cast<Split>(split(rng));
    g.add(std::move(s));
  }
  return g;
}

/// Random query of a random pattern. With probability 1/2 the query is grounded on an
/// actual walk of the graph (so it usually has answers); qualifiers are random subsets of
/// the grounding statements' qualifiers, or random pairs otherwise.
inline QueryGraph random_query(std::mt19937_64& rng, const KnowledgeGraph& g, std::optional<Pattern> fixed = std::nullopt) {
  std::uniform_int_distribution<std::size_t> pat(0, kAllPatterns.size() - 1);
  const Pattern p = fixed ? *fixed : kAllPatterns[pat(rng)];
  const PatternArity ar = arity(p);
  std::uniform_int_distribution<std::uint32_t> ent(0, static_cast<std::uint32_t>(g.num_entities() - 1));
  std::uniform_int_distribution<std::uint32_t> rel(0, static_cast<std::uint32_t>(g.num_relations() - 1));
  std::bernoulli_distribution coin(0.5);
  std::vector<EntityId> anchors;
  for (std::size_t i = 0; i < ar.anchors; ++i) anchors.push_back(EntityId(ent(rng)));
  std::vector<RelationId> relations;
  std::vector<Qualifiers> quals;
  for (std::size_t i = 0; i < ar.edges; ++i) {
    relations.push_back(RelationId(rel(rng)));
    Qualifiers q;
    if (coin(rng)) q.push_back({RelationId(rel(rng)), EntityId(ent(rng) % 3)});
    quals.push_back(q);
  }
  if (coin(rng) && g.num_statements() > 0) {
    // Ground the pattern on a backward walk from a random target so the query is likely
    // satisfiable; slots: anchors 0..2, variables 10..11, target 20.
    std::vector<std::pair<int, int>> edges;
    switch (p) {
      case Pattern::P1: edges = {{0, 20}}; break;
      case Pattern::P2: edges = {{0, 10}, {10, 20}}; break;
      case Pattern::P3: edges = {{0, 10}, {10, 11}, {11, 20}}; break;
      case Pattern::I2: edges = {{0, 20}, {1, 20}}; break;
      case Pattern::I3: edges = {{0, 20}, {1, 20}, {2, 20}}; break;
      case Pattern::IP: edges = {{0, 10}, {1, 10}, {10, 20}}; break;
      case Pattern::PI: edges = {{0, 10}, {10, 20}, {1, 20}}; break;
    }
    std::map<int, EntityId> bound;
    std::uniform_int_distribution<std::size_t> st(0, g.num_statements() - 1);
    bool ok = true;
    for (std::size_t k = edges.size(); k-- > 0 && ok;) {
      const auto [from, to] = edges[k];
      StatementId sid = static_cast<StatementId>(st(rng));
      if (auto it = bound.find(to); it != bound.end()) {
        const auto in = g.by_tail(it->second);
        if (in.empty()) {
          ok = false;
          break;
        }
        sid = in[std::uniform_int_distribution<std::size_t>(0, in.size() - 1)(rng)];
      }
      const Statement& s = g.statement(sid);
      bound.emplace(to, s.tail);
      bound.emplace(from, s.head);
      relations[k] = s.relation;
      quals[k].clear();
      for (const auto& qp : s.qualifiers)
        if (coin(rng)) quals[k].push_back(qp);
    }
    if (ok)
      for (std::size_t a = 0; a < ar.anchors; ++a) anchors[a] = bound.at(static_cast<int>(a));
  }
  return instantiate(p, anchors, relations, quals);
}

/// Independent oracle: enumerate every assignment of variables and target.
inline std::vector<EntityId> brute_force_answers(const KnowledgeGraph& g, const QueryGraph& q,
                                                 SplitSet splits = SplitSet::all(), bool ignore_qualifiers = false) {
  const auto& nodes = q.nodes();
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (!nodes[i].is_anchor()) free.push_back(i);
  std::vector<std::uint32_t> value(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].is_anchor()) value[i] = nodes[i].id;
  const auto idx = [&](const QueryNode& n) {
    return static_cast<std::size_t>(std::find(nodes.begin(), nodes.end(), n) - nodes.begin());
  };
  std::set<std::uint32_t> answers;
  const std::size_t n = g.num_entities();
  if (n == 0) return {};
  std::vector<std::size_t> counter(free.size(), 0);
  for (;;) {
    for (std::size_t k = 0; k < free.size(); ++k) value[free[k]] = static_cast<std::uint32_t>(counter[k]);
    bool ok = true;
    for (const auto& qs : q.statements()) {
      std::uint32_t h = value[idx(qs.head)], t = value[idx(qs.tail)];
      if (qs.direction == Direction::Inverse) std::swap(h, t);
      bool any = false;
      for (const auto& s : g.statements()) {
        if (!splits.contains(s.split) || s.head.value != h || s.tail.value != t || s.relation != qs.relation) continue;
        bool sub = true;
        if (!ignore_qualifiers)
          for (const auto& qp : qs.qualifiers)
            if (std::find(s.qualifiers.begin(), s.qualifiers.end(), qp) == s.qualifiers.end()) sub = false;
        if (sub) {
          any = true;
          break;
        }
      }
      if (!any) {
        ok = false;
        break;
      }
    }
    if (ok) answers.insert(value[idx(QueryNode::target())]);
    std::size_t k = 0;
    while (k < counter.size() && ++counter[k] == n) counter[k++] = 0;
    if (k == counter.size()) break;
  }
  std::vector<EntityId> out;
  for (auto a : answers) out.push_back(EntityId(a));
  return out;
}

/// Photoelectric-effect example: the law was discovered by Einstein, who was educated at
/// ETH (BSc degree) and at the University of Zurich (PhD degree).
inline KnowledgeGraph einstein_graph() {
  KnowledgeGraph g;
  using Q = std::vector<std::pair<std::string, std::string>>;
  g.add("PhotoelectricEffect", "discovered_by", "AlbertEinstein", Q{}, Split::Train);
  g.add("AlbertEinstein", "educated_at", "ETHZurich", Q{{"degree", "BSc"}}, Split::Train);
  g.add("AlbertEinstein", "educated_at", "UniversityOfZurich", Q{{"degree", "PhD"}}, Split::Train);
  return g;
}

/// ?U : exists P. discovered_by(PhotoelectricEffect, P) and educated_at{degree: BSc}(P, U)
inline QueryGraph einstein_query(const KnowledgeGraph& g) {
  const EntityId law = g.entities().at("PhotoelectricEffect");
  const RelationId rels[] = {g.relations().at("discovered_by"), g.relations().at("educated_at")};
  const Qualifiers quals[] = {{}, {{g.relations().at("degree"), g.entities().at("BSc")}}};
  return instantiate(Pattern::P2, std::span(&law, 1), rels, quals);
}

}  // namespace hyperq::testing
