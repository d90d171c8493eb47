#include "hyperq/matcher.hpp"

#include <algorithm>
#include <optional>

namespace hyperq {

namespace {

class Search {
 public:
  Search(const KnowledgeGraph& g, const QueryGraph& q, const MatchOptions& opts)
      : g_(g), q_(q), opts_(opts), nodes_(q.nodes()), binding_(nodes_.size()), matched_(q.statements().size(), false),
        found_(g.num_entities(), false) {
    target_ = static_cast<std::size_t>(std::lower_bound(nodes_.begin(), nodes_.end(), QueryNode::target()) - nodes_.begin());
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].is_anchor()) {
        if (nodes_[i].id >= g.num_entities()) {
          impossible_ = true;
          continue;
        }
        binding_[i] = nodes_[i].entity();
      }
    for (const auto& s : q.statements()) {
      Edge e;
      e.head = index_of(s.direction == Direction::Forward ? s.head : s.tail);
      e.tail = index_of(s.direction == Direction::Forward ? s.tail : s.head);
      e.relation = s.relation;
      e.qualifiers = opts.ignore_qualifiers ? std::span<const QualifierPair>{} : std::span<const QualifierPair>(s.qualifiers);
      if (s.relation.index() >= g.num_relations()) impossible_ = true;
      edges_.push_back(e);
    }
  }

  AnswerSet run() {
    if (!impossible_) recurse(0);
    AnswerSet out;
    for (std::uint32_t e = 0; e < found_.size(); ++e)
      if (found_[e]) out.push_back(EntityId(e));
    return out;
  }

 private:
  struct Edge {
    std::size_t head = 0, tail = 0;  // node indices in data-statement orientation
    RelationId relation;
    std::span<const QualifierPair> qualifiers;
  };

  std::size_t index_of(const QueryNode& n) const {
    return static_cast<std::size_t>(std::lower_bound(nodes_.begin(), nodes_.end(), n) - nodes_.begin());
  }

  std::span<const StatementId> candidates(const Edge& e) const {
    if (binding_[e.head]) return g_.by_head_relation(*binding_[e.head], e.relation);
    if (binding_[e.tail]) return g_.by_tail_relation(*binding_[e.tail], e.relation);
    return g_.by_relation(e.relation);
  }

  void recurse(std::size_t depth) {
    if (count_ >= opts_.result_cap) return;
    if (binding_[target_] && found_[binding_[target_]->index()]) return;
    if (depth == edges_.size()) {
      found_[binding_[target_]->index()] = true;
      ++count_;
      return;
    }
    std::size_t pick = edges_.size();
    std::span<const StatementId> best;
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      if (matched_[i]) continue;
      auto c = candidates(edges_[i]);
      if (pick == edges_.size() || c.size() < best.size()) {
        pick = i;
        best = c;
      }
    }
    const Edge& e = edges_[pick];
    matched_[pick] = true;
    for (StatementId sid : best) {
      const Statement& s = g_.statement(sid);
      if (!opts_.splits.contains(s.split)) continue;
      if (binding_[e.head] && *binding_[e.head] != s.head) continue;
      if (binding_[e.tail] && *binding_[e.tail] != s.tail) continue;
      if (e.head == e.tail && s.head != s.tail) continue;
      if (!qualifier_match(e.qualifiers, s.qualifiers)) continue;
      const bool bind_head = !binding_[e.head];
      if (bind_head) binding_[e.head] = s.head;
      const bool bind_tail = !binding_[e.tail];
      if (bind_tail) binding_[e.tail] = s.tail;
      recurse(depth + 1);
      if (bind_head) binding_[e.head].reset();
      if (bind_tail) binding_[e.tail].reset();
      if (count_ >= opts_.result_cap) break;
    }
    matched_[pick] = false;
  }

  const KnowledgeGraph& g_;
  const QueryGraph& q_;
  const MatchOptions& opts_;
  const std::vector<QueryNode>& nodes_;
  std::vector<std::optional<EntityId>> binding_;
  std::vector<Edge> edges_;
  std::vector<bool> matched_;
  std::vector<bool> found_;
  std::size_t target_ = 0;
  std::size_t count_ = 0;
  bool impossible_ = false;
};

}  // namespace

AnswerSet answer_set(const KnowledgeGraph& g, const QueryGraph& q, const MatchOptions& opts) {
  const Validity v = validate(q);
  if (!v.usable()) throw Error("invalid_query", "cannot match invalid query: " + v.reason);
  if (opts.splits.empty()) throw Error("invalid_argument", "split filter must not be empty");
  return Search(g, q, opts).run();
}

AnswerSet answer_set(const KnowledgeGraph& g, const QueryGraph& q, SplitSet splits) {
  MatchOptions opts;
  opts.splits = splits;
  return answer_set(g, q, opts);
}

AnswerSet answer_set_ignoring_qualifiers(const KnowledgeGraph& g, const QueryGraph& q, SplitSet splits) {
  MatchOptions opts;
  opts.splits = splits;
  opts.ignore_qualifiers = true;
  return answer_set(g, q, opts);
}

}  // namespace hyperq
