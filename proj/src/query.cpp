#include "hyperq/query.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace hyperq {

std::string_view to_string(Pattern p) {
  switch (p) {
    case Pattern::P1: return "1p";
    case Pattern::P2: return "2p";
    case Pattern::P3: return "3p";
    case Pattern::I2: return "2i";
    case Pattern::I3: return "3i";
    case Pattern::IP: return "2i-1p";
    case Pattern::PI: return "1p-2i";
  }
  return "?";
}

Pattern pattern_from_string(std::string_view s) {
  for (Pattern p : kAllPatterns)
    if (to_string(p) == s) return p;
  throw Error("config_error", "unknown pattern '" + std::string(s) + "'");
}

bool has_join(Pattern p) { return p == Pattern::I2 || p == Pattern::I3 || p == Pattern::IP || p == Pattern::PI; }

QueryGraph::QueryGraph(std::vector<QueryStatement> statements, std::optional<Pattern> pattern)
    : statements_(std::move(statements)), pattern_(pattern) {
  for (auto& s : statements_) normalize(s.qualifiers);
  std::sort(statements_.begin(), statements_.end());
  statements_.erase(std::unique(statements_.begin(), statements_.end()), statements_.end());
  for (const auto& s : statements_) {
    nodes_.push_back(s.head);
    nodes_.push_back(s.tail);
  }
  std::sort(nodes_.begin(), nodes_.end());
  nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
}

std::size_t QueryGraph::num_vars() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const QueryNode& n) { return n.is_var(); }));
}

namespace {

std::size_t node_index(const std::vector<QueryNode>& nodes, const QueryNode& n) {
  return static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), n) - nodes.begin());
}

bool has_directed_cycle(const QueryGraph& q) {
  const auto& nodes = q.nodes();
  std::vector<std::vector<std::size_t>> out(nodes.size());
  std::vector<std::size_t> indeg(nodes.size(), 0);
  for (const auto& s : q.statements()) {
    const std::size_t h = node_index(nodes, s.head), t = node_index(nodes, s.tail);
    out[h].push_back(t);
    ++indeg[t];
  }
  std::deque<std::size_t> ready;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (indeg[i] == 0) ready.push_back(i);
  std::size_t seen = 0;
  while (!ready.empty()) {
    std::size_t n = ready.front();
    ready.pop_front();
    ++seen;
    for (std::size_t m : out[n])
      if (--indeg[m] == 0) ready.push_back(m);
  }
  return seen != nodes.size();
}

// An edge violates the ordering conditions if it enters an anchor from a non-anchor, or
// leaves the target.
bool violates_order(const QueryStatement& s) {
  return (s.tail.is_anchor() && !s.head.is_anchor()) || s.head.is_target();
}

}  // namespace

Validity validate(const QueryGraph& q) {
  using S = Validity::Status;
  if (q.empty()) return {S::Invalid, "empty query"};
  const auto& nodes = q.nodes();
  if (!nodes.back().is_target()) return {S::Invalid, "no target node"};
  std::uint32_t expected_var = 0;
  for (const auto& n : nodes)
    if (n.is_var() && n.id != expected_var++) return {S::Invalid, "variable ids are not dense"};
  for (const auto& s : q.statements())
    if (s.head == s.tail) return {S::Invalid, "self-loop"};
  if (has_directed_cycle(q)) return {S::Invalid, "cycle"};
  for (const auto& s : q.statements())
    if (violates_order(s)) return {S::Relaxable, "edge direction violates anchor/target ordering"};
  return {S::Valid, {}};
}

QueryGraph canonicalize(const QueryGraph& q) {
  const Validity v = validate(q);
  if (v.status == Validity::Status::Invalid) throw Error("invalid_query", "cannot canonicalize: " + v.reason);
  if (v.valid()) return q;
  std::vector<QueryStatement> out;
  out.reserve(q.statements().size());
  for (const auto& s : q.statements()) {
    if (!violates_order(s)) {
      out.push_back(s);
      continue;
    }
    QueryStatement f = s;
    std::swap(f.head, f.tail);
    f.direction = flip(s.direction);
    out.push_back(std::move(f));
  }
  QueryGraph result(std::move(out), q.pattern());
  if (!validate(result).valid()) throw std::logic_error("canonicalize produced an invalid query");
  return result;
}

PatternArity arity(Pattern p) {
  switch (p) {
    case Pattern::P1: return {1, 1};
    case Pattern::P2: return {1, 2};
    case Pattern::P3: return {1, 3};
    case Pattern::I2: return {2, 2};
    case Pattern::I3: return {3, 3};
    case Pattern::IP: return {2, 3};
    case Pattern::PI: return {2, 3};
  }
  return {0, 0};
}

QueryGraph instantiate(Pattern p, std::span<const EntityId> anchors, std::span<const RelationId> relations,
                       std::span<const Qualifiers> qualifiers) {
  const PatternArity ar = arity(p);
  if (anchors.size() != ar.anchors || relations.size() != ar.edges || qualifiers.size() != ar.edges)
    throw Error("arity_mismatch", "pattern " + std::string(to_string(p)) + " needs " + std::to_string(ar.anchors) +
                                      " anchors and " + std::to_string(ar.edges) + " edges");
  const auto A = [&](std::size_t i) { return QueryNode::anchor(anchors[i]); };
  const auto V = [](std::uint32_t i) { return QueryNode::var(i); };
  const QueryNode T = QueryNode::target();
  std::vector<std::pair<QueryNode, QueryNode>> edges;
  switch (p) {
    case Pattern::P1: edges = {{A(0), T}}; break;
    case Pattern::P2: edges = {{A(0), V(0)}, {V(0), T}}; break;
    case Pattern::P3: edges = {{A(0), V(0)}, {V(0), V(1)}, {V(1), T}}; break;
    case Pattern::I2: edges = {{A(0), T}, {A(1), T}}; break;
    case Pattern::I3: edges = {{A(0), T}, {A(1), T}, {A(2), T}}; break;
    case Pattern::IP: edges = {{A(0), V(0)}, {A(1), V(0)}, {V(0), T}}; break;
    case Pattern::PI: edges = {{A(0), V(0)}, {V(0), T}, {A(1), T}}; break;
  }
  std::vector<QueryStatement> st;
  for (std::size_t i = 0; i < edges.size(); ++i)
    st.push_back({edges[i].first, relations[i], Direction::Forward, edges[i].second, qualifiers[i]});
  return QueryGraph(std::move(st), p);
}

QueryGraph strip_qualifiers(const QueryGraph& q) {
  std::vector<QueryStatement> st = q.statements();
  for (auto& s : st) s.qualifiers.clear();
  return QueryGraph(std::move(st), q.pattern());
}

std::size_t diameter(const QueryGraph& q) {
  const auto& nodes = q.nodes();
  std::vector<std::vector<std::size_t>> adj(nodes.size());
  for (const auto& s : q.statements()) {
    const std::size_t h = node_index(nodes, s.head), t = node_index(nodes, s.tail);
    adj[h].push_back(t);
    adj[t].push_back(h);
  }
  std::size_t best = 0;
  constexpr std::size_t inf = std::numeric_limits<std::size_t>::max();
  for (std::size_t src = 0; src < nodes.size(); ++src) {
    std::vector<std::size_t> dist(nodes.size(), inf);
    std::deque<std::size_t> queue{src};
    dist[src] = 0;
    while (!queue.empty()) {
      const std::size_t n = queue.front();
      queue.pop_front();
      for (std::size_t m : adj[n])
        if (dist[m] == inf) {
          dist[m] = dist[n] + 1;
          queue.push_back(m);
        }
    }
    for (std::size_t d : dist)
      if (d != inf) best = std::max(best, d);
  }
  return best;
}

// --- canonical form ---------------------------------------------------------------

namespace {

std::uint64_t node_colour(const QueryNode& n, const std::vector<std::uint64_t>& var_colour) {
  if (n.is_var()) return mix64(0x7661720000000000ull ^ var_colour[n.id]);
  return mix64((std::uint64_t(n.kind) << 40) ^ n.id);
}

std::uint64_t statement_label(const QueryStatement& s) {
  std::uint64_t h = mix64((std::uint64_t(s.relation.value) << 8) ^ static_cast<std::uint64_t>(s.direction));
  for (const auto& q : s.qualifiers) h = mix64(h ^ ((std::uint64_t(q.relation.value) << 32) | q.value.value));
  return h;
}

QueryNode rename(const QueryNode& n, const std::vector<std::uint32_t>& mapping) {
  return n.is_var() ? QueryNode::var(mapping[n.id]) : n;
}

}  // namespace

QueryGraph canonical_form(const QueryGraph& q) {
  // Collect variables in node order; ids may be sparse in unvalidated input.
  std::vector<std::uint32_t> vars;
  std::uint32_t max_var = 0;
  for (const auto& n : q.nodes())
    if (n.is_var()) {
      vars.push_back(n.id);
      max_var = std::max(max_var, n.id);
    }
  if (vars.empty()) return q;

  std::vector<std::uint64_t> colour(max_var + 1, 0);
  for (std::size_t round = 0; round <= vars.size(); ++round) {
    std::vector<std::vector<std::uint64_t>> signature(max_var + 1);
    for (const auto& s : q.statements()) {
      const std::uint64_t label = statement_label(s);
      if (s.head.is_var()) signature[s.head.id].push_back(mix64(label ^ 0x1ull ^ node_colour(s.tail, colour)));
      if (s.tail.is_var()) signature[s.tail.id].push_back(mix64(label ^ 0x2ull ^ node_colour(s.head, colour)));
    }
    std::vector<std::uint64_t> next(max_var + 1, 0);
    for (std::uint32_t v : vars) {
      auto& sig = signature[v];
      std::sort(sig.begin(), sig.end());
      std::uint64_t h = mix64(colour[v]);
      for (std::uint64_t x : sig) h = mix64(h ^ x);
      next[v] = h;
    }
    colour = std::move(next);
  }

  std::vector<std::uint32_t> order = vars;
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return colour[a] < colour[b]; });
  // Group boundaries: variables with equal colour may be permuted among themselves.
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  double combos = 1;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && colour[order[j]] == colour[order[i]]) ++j;
    groups.emplace_back(i, j);
    for (std::size_t k = 2; k <= j - i; ++k) combos *= double(k);
    i = j;
  }
  if (combos > 1e6) throw Error("query_too_symmetric", "canonical form search space too large");

  for (auto [b, e] : groups) std::sort(order.begin() + static_cast<std::ptrdiff_t>(b), order.begin() + static_cast<std::ptrdiff_t>(e));

  std::vector<QueryStatement> best;
  std::vector<std::uint32_t> mapping(max_var + 1, 0);
  const auto evaluate = [&]() {
    for (std::uint32_t pos = 0; pos < order.size(); ++pos) mapping[order[pos]] = pos;
    std::vector<QueryStatement> st;
    st.reserve(q.statements().size());
    for (const auto& s : q.statements()) st.push_back({rename(s.head, mapping), s.relation, s.direction, rename(s.tail, mapping), s.qualifiers});
    std::sort(st.begin(), st.end());
    if (best.empty() || st < best) best = std::move(st);
  };
  // Odometer over per-group permutations.
  const std::function<void(std::size_t)> recurse = [&](std::size_t g) {
    if (g == groups.size()) {
      evaluate();
      return;
    }
    auto [b, e] = groups[g];
    auto first = order.begin() + static_cast<std::ptrdiff_t>(b);
    auto last = order.begin() + static_cast<std::ptrdiff_t>(e);
    do {
      recurse(g + 1);
    } while (std::next_permutation(first, last));
  };
  recurse(0);
  return QueryGraph(std::move(best), q.pattern());
}

// --- reification --------------------------------------------------------------------

KnowledgeGraph reify(const KnowledgeGraph& g) {
  const ReificationScheme scheme{g.num_entities(), g.num_relations()};
  KnowledgeGraph out;
  for (const auto& label : g.entities().labels()) out.entities().intern(label);
  for (const auto& label : g.relations().labels()) out.relations().intern(label);
  extend_vocabulary_for_reification(out.entities(), out.relations());
  for (StatementId i = 0; i < g.num_statements(); ++i) out.entities().intern("_:s" + std::to_string(i));

  for (StatementId i = 0; i < g.num_statements(); ++i) {
    const auto& s = g.statement(i);
    const EntityId blank = scheme.blank_node(i);
    const auto triple = [&](RelationId r, EntityId t) { out.add(Statement{blank, r, t, {}, s.split}); };
    triple(scheme.rdf_subject(), s.head);
    triple(scheme.rdf_predicate(), scheme.relation_node(s.relation));
    triple(scheme.rdf_object(), s.tail);
    for (const auto& q : s.qualifiers) triple(q.relation, q.value);
  }
  return out;
}

void extend_vocabulary_for_reification(Vocabulary<EntityId>& entities, Vocabulary<RelationId>& relations) {
  const std::size_t n_rel = relations.size();
  const std::size_t n_ent = entities.size();
  std::vector<std::string> labels(relations.labels().begin(), relations.labels().end());
  for (const auto& l : labels) entities.intern("rel:" + l);
  relations.intern("rdf:subject");
  relations.intern("rdf:predicate");
  relations.intern("rdf:object");
  if (entities.size() != n_ent + n_rel || relations.size() != n_rel + 3)
    throw Error("reification_collision", "vocabulary already contains reification labels");
}

QueryGraph reify(const QueryGraph& q, const ReificationScheme& scheme) {
  std::uint32_t next_var = 0;
  for (const auto& n : q.nodes())
    if (n.is_var()) next_var = std::max(next_var, n.id + 1);
  std::vector<QueryStatement> out;
  for (const auto& s : q.statements()) {
    const QueryNode blank = QueryNode::var(next_var++);
    const QueryNode subject = s.direction == Direction::Forward ? s.head : s.tail;
    const QueryNode object = s.direction == Direction::Forward ? s.tail : s.head;
    out.push_back({blank, scheme.rdf_subject(), Direction::Forward, subject, {}});
    out.push_back({blank, scheme.rdf_predicate(), Direction::Forward, QueryNode::anchor(scheme.relation_node(s.relation)), {}});
    out.push_back({blank, scheme.rdf_object(), Direction::Forward, object, {}});
    for (const auto& qp : s.qualifiers) out.push_back({blank, qp.relation, Direction::Forward, QueryNode::anchor(qp.value), {}});
  }
  return QueryGraph(std::move(out), q.pattern());
}

// --- JSON -------------------------------------------------------------------------------

nlohmann::ordered_json to_json(const QueryGraph& q, const VocabView& vocab) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["pattern"] = q.pattern() ? ordered_json(std::string(to_string(*q.pattern()))) : ordered_json(nullptr);
  ordered_json nodes = ordered_json::array();
  for (const auto& n : q.nodes()) {
    ordered_json node;
    switch (n.kind) {
      case NodeKind::Anchor:
        node["kind"] = "anchor";
        node["id"] = vocab.entities.label(n.entity());
        break;
      case NodeKind::Var:
        node["kind"] = "var";
        node["id"] = n.id;
        break;
      case NodeKind::Target: node["kind"] = "target"; break;
    }
    nodes.push_back(std::move(node));
  }
  j["nodes"] = std::move(nodes);
  ordered_json st = ordered_json::array();
  for (const auto& s : q.statements()) {
    ordered_json e;
    e["head"] = node_index(q.nodes(), s.head);
    e["relation"] = vocab.relations.label(s.relation);
    e["direction"] = s.direction == Direction::Forward ? "forward" : "inverse";
    e["tail"] = node_index(q.nodes(), s.tail);
    ordered_json quals = ordered_json::array();
    for (const auto& qp : s.qualifiers)
      quals.push_back(ordered_json::array({vocab.relations.label(qp.relation), vocab.entities.label(qp.value)}));
    e["qualifiers"] = std::move(quals);
    st.push_back(std::move(e));
  }
  j["statements"] = std::move(st);
  return j;
}

QueryGraph query_from_json(const nlohmann::json& j, const VocabView& vocab) {
  const auto fail = [](const std::string& what) -> Error { return Error("invalid_query", what); };
  if (!j.is_object() || !j.contains("nodes") || !j.contains("statements")) throw fail("query JSON needs nodes and statements");
  std::vector<QueryNode> nodes;
  for (const auto& n : j.at("nodes")) {
    const std::string kind = n.at("kind").get<std::string>();
    if (kind == "anchor") {
      if (!n.at("id").is_string()) throw fail("anchor id must be an entity label");
      nodes.push_back(QueryNode::anchor(vocab.entities.at(n.at("id").get<std::string>())));
    } else if (kind == "var") {
      nodes.push_back(QueryNode::var(n.at("id").get<std::uint32_t>()));
    } else if (kind == "target") {
      nodes.push_back(QueryNode::target());
    } else {
      throw fail("unknown node kind '" + kind + "'");
    }
  }
  const auto node_at = [&](const nlohmann::json& idx) {
    const auto i = idx.get<std::size_t>();
    if (i >= nodes.size()) throw fail("statement refers to missing node");
    return nodes[i];
  };
  std::vector<QueryStatement> st;
  for (const auto& s : j.at("statements")) {
    if (!s.at("relation").is_string()) throw fail("variables are not allowed in relation position");
    QueryStatement qs;
    qs.head = node_at(s.at("head"));
    qs.relation = vocab.relations.at(s.at("relation").get<std::string>());
    const std::string dir = s.value("direction", std::string("forward"));
    if (dir != "forward" && dir != "inverse") throw fail("direction must be forward or inverse");
    qs.direction = dir == "forward" ? Direction::Forward : Direction::Inverse;
    qs.tail = node_at(s.at("tail"));
    for (const auto& qp : s.value("qualifiers", nlohmann::json::array())) {
      if (!qp.is_array() || qp.size() != 2 || !qp[0].is_string() || !qp[1].is_string())
        throw fail("qualifier pairs must be [relation, entity] labels; variables are not allowed");
      qs.qualifiers.push_back({vocab.relations.at(qp[0].get<std::string>()), vocab.entities.at(qp[1].get<std::string>())});
    }
    st.push_back(std::move(qs));
  }
  std::optional<Pattern> pattern;
  if (j.contains("pattern") && j.at("pattern").is_string()) pattern = pattern_from_string(j.at("pattern").get<std::string>());
  return QueryGraph(std::move(st), pattern);
}

}  // namespace hyperq
