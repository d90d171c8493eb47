#include "hyperq/sampler.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "hyperq/evaluator.hpp"

namespace hyperq {

std::uint64_t SamplingConfig::hash() const {
  const std::uint64_t fields[] = {static_cast<std::uint64_t>(pattern),
                                  static_cast<std::uint64_t>(qualifiers.edges),
                                  qualifiers.min_pairs,
                                  qualifiers.max_pairs,
                                  in_degree_threshold,
                                  filter_in_degree ? 1u : 0u,
                                  max_queries_per_split,
                                  max_groundings,
                                  seed};
  return fnv1a(fields, sizeof fields);
}

AnswerSet DatasetQuery::hard_answers() const {
  AnswerSet out;
  std::set_difference(answers.begin(), answers.end(), easy_answers.begin(), easy_answers.end(), std::back_inserter(out));
  return out;
}

namespace {

// Pattern edges over slots: anchors 0..2, variables 10..11, target 20.
constexpr int kTargetSlot = 20;

struct Shape {
  std::vector<std::pair<int, int>> edges;  // same order as instantiate()
  int join_slot = -1;                      // node whose in-degree is filtered, -1 if none
  std::size_t ordered_anchors = 0;         // leading anchors that are interchangeable
};

Shape shape_of(Pattern p) {
  switch (p) {
    case Pattern::P1: return {{{0, 20}}, -1, 0};
    case Pattern::P2: return {{{0, 10}, {10, 20}}, -1, 0};
    case Pattern::P3: return {{{0, 10}, {10, 11}, {11, 20}}, -1, 0};
    case Pattern::I2: return {{{0, 20}, {1, 20}}, kTargetSlot, 2};
    case Pattern::I3: return {{{0, 20}, {1, 20}, {2, 20}}, kTargetSlot, 3};
    case Pattern::IP: return {{{0, 10}, {1, 10}, {10, 20}}, 10, 2};
    case Pattern::PI: return {{{0, 10}, {10, 20}, {1, 20}}, kTargetSlot, 0};
  }
  return {};
}

class Enumerator {
 public:
  Enumerator(const KnowledgeGraph& g, const SamplingConfig& cfg) : g_(g), cfg_(cfg), shape_(shape_of(cfg.pattern)) {
    const auto ar = arity(cfg.pattern);
    anchors_.resize(ar.anchors);
    sids_.resize(ar.edges);
    train_entity_.assign(g.num_entities(), false);
    train_relation_.assign(g.num_relations(), false);
    for (const auto& s : g.statements()) {
      if (s.split != Split::Train) continue;
      train_entity_[s.head.index()] = train_entity_[s.tail.index()] = true;
      train_relation_[s.relation.index()] = true;
      for (const auto& q : s.qualifiers) {
        train_relation_[q.relation.index()] = true;
        train_entity_[q.value.index()] = true;
      }
    }
  }

  void run() { step(shape_.edges.size()); }

  std::array<std::vector<QueryGraph>, 3> found;
  std::size_t groundings = 0;
  bool truncated = false;

 private:
  std::optional<EntityId>& slot(int s) {
    if (s < 10) return bound_anchor_[static_cast<std::size_t>(s)];
    if (s < kTargetSlot) return bound_var_[static_cast<std::size_t>(s - 10)];
    return bound_target_;
  }

  void step(std::size_t k) {
    if (truncated) return;
    if (k == 0) {
      emit();
      return;
    }
    const auto [from, to] = shape_.edges[k - 1];
    const std::optional<EntityId> to_value = slot(to);
    const auto visit = [&](StatementId sid) {
      const Statement& s = g_.statement(sid);
      if (to_value && s.tail != *to_value) return;
      sids_[k - 1] = sid;
      const bool bind_to = !to_value;
      if (bind_to) slot(to) = s.tail;
      slot(from) = s.head;
      step(k - 1);
      slot(from).reset();
      if (bind_to) slot(to).reset();
    };
    if (to_value) {
      for (StatementId sid : g_.by_tail(*to_value)) {
        visit(sid);
        if (truncated) return;
      }
    } else {
      for (StatementId sid = 0; sid < g_.num_statements(); ++sid) {
        visit(sid);
        if (truncated) return;
      }
    }
  }

  bool seen_in_train(EntityId e) const { return train_entity_[e.index()]; }

  void emit() {
    if (++groundings > cfg_.max_groundings) {
      truncated = true;
      return;
    }
    const std::size_t n_anchors = anchors_.size();
    for (std::size_t a = 0; a < n_anchors; ++a) anchors_[a] = *bound_anchor_[a];
    // Distinct anchors; interchangeable branches are taken in ascending anchor order only.
    for (std::size_t a = 0; a < n_anchors; ++a)
      for (std::size_t b = a + 1; b < n_anchors; ++b)
        if (anchors_[a] == anchors_[b]) return;
    for (std::size_t a = 1; a < shape_.ordered_anchors; ++a)
      if (!(anchors_[a - 1] < anchors_[a])) return;

    if (cfg_.filter_in_degree && shape_.join_slot >= 0 && g_.in_degree(*slot(shape_.join_slot)) > cfg_.in_degree_threshold)
      return;

    bool any_validation = false, any_test = false;
    std::vector<RelationId> relations;
    std::vector<Qualifiers> quals;
    std::size_t carrying = 0;
    const std::size_t max_pairs = cfg_.qualifiers.edges == QualifierCondition::Edges::None ? 0 : cfg_.qualifiers.max_pairs;
    for (StatementId sid : sids_) {
      const Statement& s = g_.statement(sid);
      any_validation |= s.split == Split::Validation;
      any_test |= s.split == Split::Test;
      if (!seen_in_train(s.head) || !seen_in_train(s.tail) || !train_relation_[s.relation.index()]) return;
      relations.push_back(s.relation);
      Qualifiers q;
      const std::size_t take = std::min(max_pairs, s.qualifiers.size());
      if (take >= cfg_.qualifiers.min_pairs && take > 0) {
        q.assign(s.qualifiers.begin(), s.qualifiers.begin() + static_cast<std::ptrdiff_t>(take));
        ++carrying;
      }
      for (const auto& qp : q)
        if (!train_relation_[qp.relation.index()] || !seen_in_train(qp.value)) return;
      quals.push_back(std::move(q));
    }
    switch (cfg_.qualifiers.edges) {
      case QualifierCondition::Edges::All:
        if (carrying != sids_.size()) return;
        break;
      case QualifierCondition::Edges::Any:
        if (carrying == 0) return;
        break;
      case QualifierCondition::Edges::None: break;
    }
    const Split split = any_test ? Split::Test : any_validation ? Split::Validation : Split::Train;
    QueryGraph q = canonical_form(instantiate(cfg_.pattern, anchors_, relations, quals));
    auto& seen = seen_[static_cast<std::size_t>(split)];
    if (seen.insert(q.statements()).second) found[static_cast<std::size_t>(split)].push_back(std::move(q));
  }

  const KnowledgeGraph& g_;
  const SamplingConfig& cfg_;
  Shape shape_;
  std::vector<EntityId> anchors_;
  std::vector<StatementId> sids_;
  std::optional<EntityId> bound_anchor_[3], bound_var_[2], bound_target_;
  std::vector<bool> train_entity_, train_relation_;
  std::array<std::set<std::vector<QueryStatement>>, 3> seen_;
};

SplitSet answer_splits(Split s) { return SplitSet::up_to(s); }

std::optional<SplitSet> easy_splits(Split s) {
  switch (s) {
    case Split::Train: return std::nullopt;
    case Split::Validation: return SplitSet{Split::Train};
    case Split::Test: return SplitSet{Split::Train, Split::Validation};
  }
  return std::nullopt;
}

}  // namespace

DatasetBundle generate(const KnowledgeGraph& g, const SamplingConfig& cfg) {
  if (cfg.in_degree_threshold == 0 || cfg.max_queries_per_split == 0)
    throw Error("config_error", "sampling thresholds must be positive");
  if (cfg.qualifiers.max_pairs < cfg.qualifiers.min_pairs) throw Error("config_error", "max_pairs < min_pairs");
  DatasetBundle bundle;
  bundle.pattern = cfg.pattern;
  bundle.config_hash = cfg.hash();

  Enumerator en(g, cfg);
  en.run();
  bundle.groundings = std::min(en.groundings, cfg.max_groundings);
  bundle.truncated = en.truncated;
  if (en.truncated) bundle.warnings.push_back("grounding budget exhausted; enumeration truncated");

  const std::size_t threads = thread_budget();
  for (Split split : kAllSplits) {
    std::vector<QueryGraph> pool = std::move(en.found[static_cast<std::size_t>(split)]);
    std::mt19937_64 rng(mix64(cfg.seed ^ (std::uint64_t(cfg.pattern) << 8) ^ std::uint64_t(split)));
    std::shuffle(pool.begin(), pool.end(), rng);
    auto& out = bundle.split(split);
    const auto easy_from = easy_splits(split);
    std::size_t next = 0;
    while (out.size() < cfg.max_queries_per_split && next < pool.size()) {
      // Answer a chunk in parallel, then accept in shuffled order.
      const std::size_t chunk = std::min(pool.size() - next, std::max<std::size_t>(64, cfg.max_queries_per_split - out.size()));
      std::vector<DatasetQuery> queries(chunk);
      for (std::size_t i = 0; i < chunk; ++i) queries[i].query = std::move(pool[next + i]);
      const auto work = [&](std::size_t i) {
        queries[i].answers = answer_set(g, queries[i].query, answer_splits(split));
        if (easy_from) queries[i].easy_answers = answer_set(g, queries[i].query, *easy_from);
      };
      const auto ranges = std::max<std::size_t>(1, std::min(threads, chunk));
      std::vector<std::thread> pool_threads;
      for (std::size_t t = 0; t < ranges; ++t)
        pool_threads.emplace_back([&, t]() {
          for (std::size_t i = t; i < chunk; i += ranges) work(i);
        });
      for (auto& t : pool_threads) t.join();
      for (auto& dq : queries) {
        if (out.size() >= cfg.max_queries_per_split) break;
        if (dq.hard_answers().empty()) continue;
        out.push_back(std::move(dq));
      }
      next += chunk;
    }
    if (out.empty())
      bundle.warnings.push_back(std::string("no ") + to_string(split) + " queries for pattern " + std::string(to_string(cfg.pattern)));
  }
  return bundle;
}

double constant_ranking_hits(const DatasetBundle& bundle, std::size_t k, std::size_t num_entities, Split split) {
  const auto& queries = bundle.split(split);
  if (queries.empty()) throw Error("invalid_argument", "constant ranking needs a nonempty split");
  std::vector<double> freq(num_entities, 0);
  for (const auto& dq : queries)
    for (EntityId a : dq.hard_answers()) freq.at(a.index()) += 1;
  // Strict order: frequency first, lower id wins ties.
  std::vector<double> scores(num_entities);
  for (std::size_t e = 0; e < num_entities; ++e) scores[e] = freq[e] * double(num_entities + 1) + double(num_entities - e);
  std::vector<RankingResult> results;
  for (const auto& dq : queries) results.push_back(ranks(scores, dq.answers, dq.easy_answers));
  const std::size_t ks[] = {k};
  return aggregate(results, ks).hits.at(k);
}

// --- serialization --------------------------------------------------------------------------

namespace {

nlohmann::ordered_json labels(const AnswerSet& a, const VocabView& vocab) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (EntityId e : a) out.push_back(vocab.entities.label(e));
  return out;
}

AnswerSet parse_answers(const nlohmann::json& j, const VocabView& vocab) {
  AnswerSet out;
  for (const auto& x : j) out.push_back(vocab.entities.at(x.get<std::string>()));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << v;
  return out.str();
}

}  // namespace

std::string bundle_meta_json(const DatasetBundle& bundle) {
  nlohmann::ordered_json j;
  j["pattern"] = std::string(to_string(bundle.pattern));
  j["config_hash"] = hex(bundle.config_hash);
  nlohmann::ordered_json counts;
  for (Split s : kAllSplits) counts[to_string(s)] = bundle.split(s).size();
  j["counts"] = counts;
  j["groundings"] = bundle.groundings;
  j["truncated"] = bundle.truncated;
  j["warnings"] = bundle.warnings;
  return j.dump(2);
}

void write_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir, const VocabView& vocab) {
  std::filesystem::create_directories(dir);
  const std::string p(to_string(bundle.pattern));
  for (Split s : kAllSplits) {
    std::ofstream out(dir / (p + "_" + to_string(s) + ".jsonl"), std::ios::binary);
    if (!out) throw Error("io_error", "cannot write bundle in " + dir.string());
    for (const auto& dq : bundle.split(s)) {
      nlohmann::ordered_json line;
      line["query"] = to_json(dq.query, vocab);
      line["answers"] = labels(dq.answers, vocab);
      line["easy_answers"] = labels(dq.easy_answers, vocab);
      out << line.dump() << '\n';
    }
  }
  std::ofstream meta(dir / (p + "_meta.json"), std::ios::binary);
  meta << bundle_meta_json(bundle) << '\n';
}

DatasetBundle read_bundle(const std::filesystem::path& dir, Pattern pattern, const VocabView& vocab) {
  DatasetBundle bundle;
  bundle.pattern = pattern;
  const std::string p(to_string(pattern));
  const auto meta_path = dir / (p + "_meta.json");
  std::ifstream meta(meta_path);
  if (!meta) throw Error("missing_input", "bundle metadata not found: " + meta_path.string());
  const auto m = nlohmann::json::parse(meta);
  bundle.config_hash = std::stoull(m.at("config_hash").get<std::string>(), nullptr, 16);
  bundle.groundings = m.value("groundings", std::size_t{0});
  bundle.truncated = m.value("truncated", false);
  bundle.warnings = m.value("warnings", std::vector<std::string>{});
  for (Split s : kAllSplits) {
    const auto path = dir / (p + "_" + to_string(s) + ".jsonl");
    std::ifstream in(path);
    if (!in) throw Error("missing_input", "bundle split not found: " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        DatasetQuery dq;
        dq.query = query_from_json(j.at("query"), vocab);
        dq.answers = parse_answers(j.at("answers"), vocab);
        dq.easy_answers = parse_answers(j.value("easy_answers", nlohmann::json::array()), vocab);
        bundle.split(s).push_back(std::move(dq));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string(), lineno, e.what());
      }
    }
  }
  return bundle;
}

}  // namespace hyperq
