#include "hyperq/kg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace hyperq {

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(const char* s) {
  std::string_view v(s);
  if (v == "train") return Split::Train;
  if (v == "validation" || v == "valid") return Split::Validation;
  if (v == "test") return Split::Test;
  throw Error("config_error", "unknown split '" + std::string(v) + "'");
}

void normalize(Qualifiers& q) {
  std::sort(q.begin(), q.end());
  q.erase(std::unique(q.begin(), q.end()), q.end());
}

bool qualifier_match(std::span<const QualifierPair> query_qp, std::span<const QualifierPair> data_qp) {
  return std::includes(data_qp.begin(), data_qp.end(), query_qp.begin(), query_qp.end());
}

std::uint64_t KnowledgeGraph::fact_hash(const Statement& s) const {
  std::uint64_t h = mix64((std::uint64_t(s.head.value) << 32) ^ s.tail.value);
  h = mix64(h ^ s.relation.value);
  for (const auto& q : s.qualifiers) h = mix64(h ^ ((std::uint64_t(q.relation.value) << 32) | q.value.value));
  return h;
}

void KnowledgeGraph::grow_entity_index() {
  if (by_head_.size() < entities_.size()) {
    by_head_.resize(entities_.size());
    by_tail_.resize(entities_.size());
  }
  if (by_relation_.size() < relations_.size()) by_relation_.resize(relations_.size());
}

bool KnowledgeGraph::add(Statement s) {
  normalize(s.qualifiers);
  const auto check_entity = [&](EntityId e) {
    if (e.index() >= entities_.size()) throw Error("invalid_statement", "entity id out of vocabulary");
  };
  const auto check_relation = [&](RelationId r) {
    if (r.index() >= relations_.size()) throw Error("invalid_statement", "relation id out of vocabulary");
  };
  check_entity(s.head);
  check_entity(s.tail);
  check_relation(s.relation);
  for (const auto& q : s.qualifiers) {
    check_entity(q.value);
    check_relation(q.relation);
  }

  const std::uint64_t h = fact_hash(s);
  auto [lo, hi] = facts_.equal_range(h);
  for (auto it = lo; it != hi; ++it)
    if (statements_[it->second].same_fact(s)) return false;

  grow_entity_index();
  const auto id = static_cast<StatementId>(statements_.size());
  by_head_[s.head.index()].push_back(id);
  by_tail_[s.tail.index()].push_back(id);
  by_relation_[s.relation.index()].push_back(id);
  by_head_relation_[pair_key(s.head, s.relation)].push_back(id);
  by_tail_relation_[pair_key(s.tail, s.relation)].push_back(id);
  facts_.emplace(h, id);
  statements_.push_back(std::move(s));
  return true;
}

bool KnowledgeGraph::add(std::string_view h, std::string_view r, std::string_view t,
                         std::span<const std::pair<std::string, std::string>> qualifiers, Split split) {
  Statement s;
  s.head = entities_.intern(h);
  s.relation = relations_.intern(r);
  s.tail = entities_.intern(t);
  for (const auto& [qr, qv] : qualifiers) s.qualifiers.push_back({relations_.intern(qr), entities_.intern(qv)});
  s.split = split;
  return add(std::move(s));
}

namespace {
template <class Map>
std::span<const StatementId> lookup(const Map& m, std::uint64_t key) {
  auto it = m.find(key);
  if (it == m.end()) return {};
  return it->second;
}
}  // namespace

std::span<const StatementId> KnowledgeGraph::by_head(EntityId e) const {
  if (e.index() >= by_head_.size()) return {};
  return by_head_[e.index()];
}
std::span<const StatementId> KnowledgeGraph::by_tail(EntityId e) const {
  if (e.index() >= by_tail_.size()) return {};
  return by_tail_[e.index()];
}
std::span<const StatementId> KnowledgeGraph::by_relation(RelationId r) const {
  if (r.index() >= by_relation_.size()) return {};
  return by_relation_[r.index()];
}
std::span<const StatementId> KnowledgeGraph::by_head_relation(EntityId e, RelationId r) const {
  return lookup(by_head_relation_, pair_key(e, r));
}
std::span<const StatementId> KnowledgeGraph::by_tail_relation(EntityId e, RelationId r) const {
  return lookup(by_tail_relation_, pair_key(e, r));
}

std::size_t KnowledgeGraph::in_degree(EntityId e) const {
  if (e.index() >= entities_.size()) throw Error("unknown_entity", "in_degree of unknown entity");
  return by_tail(e).size();
}

std::size_t KnowledgeGraph::max_in_degree() const {
  std::size_t m = 0;
  for (const auto& v : by_tail_) m = std::max(m, v.size());
  return m;
}

std::vector<std::size_t> KnowledgeGraph::qualifier_histogram() const {
  std::vector<std::size_t> hist;
  for (const auto& s : statements_) {
    if (hist.size() <= s.qualifiers.size()) hist.resize(s.qualifiers.size() + 1, 0);
    ++hist[s.qualifiers.size()];
  }
  return hist;
}

std::size_t KnowledgeGraph::count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(statements_.begin(), statements_.end(), [&](const Statement& s) { return s.split == split; }));
}

// --- CSV ----------------------------------------------------------------------------

std::size_t ingest_csv(KnowledgeGraph& g, std::istream& in, Split split, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  std::size_t added = 0;
  std::vector<std::string> fields;
  std::vector<std::pair<std::string, std::string>> qualifiers;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fields.clear();
    std::size_t start = 0;
    for (;;) {
      std::size_t comma = line.find(',', start);
      fields.emplace_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() < 3) throw ParseError(source, lineno, "expected at least h,r,t");
    if ((fields.size() - 3) % 2 != 0) throw ParseError(source, lineno, "odd number of qualifier columns");
    for (std::size_t i = 0; i < fields.size(); ++i)
      if (fields[i].empty()) throw ParseError(source, lineno, "empty field in column " + std::to_string(i + 1));
    qualifiers.clear();
    for (std::size_t i = 3; i < fields.size(); i += 2) qualifiers.emplace_back(fields[i], fields[i + 1]);
    if (g.add(fields[0], fields[1], fields[2], qualifiers, split)) ++added;
  }
  return added;
}

std::size_t ingest_csv(KnowledgeGraph& g, const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw Error("missing_input", "cannot open " + path.string());
  return ingest_csv(g, in, split, path.string());
}

void write_csv(const KnowledgeGraph& g, std::ostream& out, Split split) {
  for (const auto& s : g.statements()) {
    if (s.split != split) continue;
    out << g.entities().label(s.head) << ',' << g.relations().label(s.relation) << ',' << g.entities().label(s.tail);
    for (const auto& q : s.qualifiers) out << ',' << g.relations().label(q.relation) << ',' << g.entities().label(q.value);
    out << '\n';
  }
}

KnowledgeGraph load_graph_dir(const std::filesystem::path& dir) {
  KnowledgeGraph g;
  for (Split s : kAllSplits) ingest_csv(g, dir / (std::string(to_string(s)) + ".csv"), s);
  return g;
}

void save_graph_dir(const KnowledgeGraph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (Split s : kAllSplits) {
    std::ofstream out(dir / (std::string(to_string(s)) + ".csv"));
    if (!out) throw Error("io_error", "cannot write to " + dir.string());
    write_csv(g, out, s);
  }
}

std::string stats_json(const KnowledgeGraph& g) {
  nlohmann::ordered_json j;
  j["entities"] = g.num_entities();
  j["relations"] = g.num_relations();
  j["statements"] = g.num_statements();
  j["max_in_degree"] = g.max_in_degree();
  j["qualifier_histogram"] = g.qualifier_histogram();
  nlohmann::ordered_json splits;
  for (Split s : kAllSplits) splits[to_string(s)] = g.count(s);
  j["splits"] = splits;
  return j.dump(2);
}

// --- synthetic graphs -----------------------------------------------------------------

SynthProfile SynthProfile::none() { return {}; }

SynthProfile SynthProfile::mixed() {
  SynthProfile p;
  p.frac_q0 = 0.4;
  p.frac_q1 = 0.4;
  p.frac_q2 = 0.2;
  return p;
}

SynthProfile SynthProfile::discriminative_profile() {
  SynthProfile p;
  p.frac_q0 = 0.0;
  p.frac_q1 = 0.8;
  p.frac_q2 = 0.2;
  p.discriminative = true;
  return p;
}

SynthProfile SynthProfile::skewed() {
  SynthProfile p;
  p.tail_skew = 1.0;
  p.hub_fraction = 0.3;
  return p;
}

SynthProfile SynthProfile::by_name(std::string_view name) {
  if (name == "none") return none();
  if (name == "mixed") return mixed();
  if (name == "discriminative") return discriminative_profile();
  if (name == "skewed") return skewed();
  throw Error("config_error", "unknown synth profile '" + std::string(name) + "'");
}

KnowledgeGraph synth_graph(std::uint64_t seed, std::size_t n_entities, std::size_t n_relations,
                           const SynthProfile& profile) {
  if (n_entities < 2) throw Error("config_error", "synth_graph needs at least 2 entities");
  if (n_relations < 1) throw Error("config_error", "synth_graph needs at least 1 relation");
  std::mt19937_64 rng(seed);
  KnowledgeGraph g;
  for (std::size_t i = 0; i < n_entities; ++i) g.entities().intern("e" + std::to_string(i));
  for (std::size_t i = 0; i < n_relations; ++i) g.relations().intern("r" + std::to_string(i));

  const std::size_t n_clusters = std::max<std::size_t>(2, n_entities / 10);
  std::vector<std::uint32_t> perm(n_entities);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::uint32_t>> members(n_clusters);
  for (std::size_t i = 0; i < n_entities; ++i) {
    members[i % n_clusters].push_back(perm[i]);
  }

  // Qualifier relations are the tail of the relation range; with a single relation it
  // doubles as its own qualifier relation.
  const std::size_t n_qual_rel = n_relations >= 5 ? std::max<std::size_t>(1, n_relations / 5) : (n_relations >= 2 ? 1 : 0);
  const std::size_t n_main = n_relations - n_qual_rel;
  const auto qual_relation = [&](std::size_t r, std::size_t shift) -> std::uint32_t {
    if (n_qual_rel == 0) return static_cast<std::uint32_t>(r);
    return static_cast<std::uint32_t>(n_main + (r + shift) % n_qual_rel);
  };

  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t n_values = std::min<std::size_t>(4, n_entities);
  const std::vector<std::uint32_t> value_pool(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_values));

  // cluster_map[r][v]: tail cluster under relation r and qualifier value v (v == n_values
  // means "no qualifier"). Independent of the head so the rule is learnable from few edges.
  std::uniform_int_distribution<std::size_t> pick_cluster(0, n_clusters - 1);
  std::vector<std::vector<std::size_t>> cluster_map(n_main, std::vector<std::size_t>(n_values + 1));
  for (auto& per_rel : cluster_map)
    for (auto& c : per_rel) c = pick_cluster(rng);

  std::vector<double> zipf_weights;
  std::vector<std::uint32_t> hub_ids(n_entities);
  std::iota(hub_ids.begin(), hub_ids.end(), 0u);
  if (profile.tail_skew > 0) {
    std::shuffle(hub_ids.begin(), hub_ids.end(), rng);
    hub_ids.resize(std::clamp<std::size_t>(profile.hubs, 1, n_entities));
    for (std::size_t k = 0; k < hub_ids.size(); ++k) zipf_weights.push_back(1.0 / std::pow(double(k + 1), profile.tail_skew));
  }
  std::discrete_distribution<std::size_t> zipf(zipf_weights.begin(), zipf_weights.end());

  const double qsum = profile.frac_q0 + profile.frac_q1 + profile.frac_q2;
  std::discrete_distribution<int> qual_count({profile.frac_q0 / qsum, profile.frac_q1 / qsum, profile.frac_q2 / qsum});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_value(0, n_values - 1);

  const auto draw_split = [&]() {
    const double u = unit(rng);
    if (u < profile.test_fraction) return Split::Test;
    if (u < profile.test_fraction + profile.valid_fraction) return Split::Validation;
    return Split::Train;
  };
  const auto draw_tail = [&](std::uint32_t head, std::size_t target_cluster) {
    if (profile.tail_skew > 0) {
      if (unit(rng) < profile.hub_fraction) {
        const std::uint32_t t = hub_ids[zipf(rng)];
        if (t != head) return t;
      }
      std::uniform_int_distribution<std::uint32_t> any(0, static_cast<std::uint32_t>(n_entities - 1));
      for (;;)
        if (const std::uint32_t t = any(rng); t != head) return t;
    }
    const auto& pool = members[target_cluster];
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::uint32_t t = pool[pick(rng)];
    if (t == head) t = pool[(std::find(pool.begin(), pool.end(), t) - pool.begin() + 1) % pool.size()];
    if (t == head) t = static_cast<std::uint32_t>((head + 1) % n_entities);
    return t;
  };
  const auto emit = [&](std::uint32_t h, std::size_t r, std::uint32_t t, Qualifiers q) {
    Statement s;
    s.head = EntityId(h);
    s.relation = RelationId(static_cast<std::uint32_t>(r));
    s.tail = EntityId(t);
    s.qualifiers = std::move(q);
    s.split = draw_split();
    g.add(std::move(s));
  };
  const auto noise_pair = [&](std::size_t r) -> std::optional<QualifierPair> {
    if (n_qual_rel < 2) return std::nullopt;
    return QualifierPair{RelationId(qual_relation(r, 1)), EntityId(value_pool[pick_value(rng)])};
  };

  const std::size_t main_count = std::max<std::size_t>(1, n_main);
  std::vector<std::size_t> rel_order(main_count);
  std::iota(rel_order.begin(), rel_order.end(), 0u);
  const std::size_t per_entity = std::min(profile.relations_per_entity, main_count);

  for (std::uint32_t h = 0; h < n_entities; ++h) {
    std::shuffle(rel_order.begin(), rel_order.end(), rng);
    for (std::size_t k = 0; k < per_entity; ++k) {
      const std::size_t r = rel_order[k];
      const auto& cmap = cluster_map[std::min(r, cluster_map.size() - 1)];
      if (profile.discriminative && n_values >= 2 && unit(rng) < profile.discriminative_rate) {
        std::size_t v1 = pick_value(rng);
        std::size_t v2 = (v1 + 1 + std::uniform_int_distribution<std::size_t>(0, n_values - 2)(rng)) % n_values;
        for (std::size_t v : {v1, v2}) {
          Qualifiers q{{RelationId(qual_relation(r, 0)), EntityId(value_pool[v])}};
          if (qual_count(rng) == 2)
            if (auto extra = noise_pair(r)) q.push_back(*extra);
          emit(h, r, draw_tail(h, cmap[v]), std::move(q));
        }
        continue;
      }
      const int nq = qual_count(rng);
      if (nq == 0) {
        emit(h, r, draw_tail(h, cmap[n_values]), {});
        continue;
      }
      const std::size_t v = pick_value(rng);
      Qualifiers q{{RelationId(qual_relation(r, 0)), EntityId(value_pool[v])}};
      if (nq == 2)
        if (auto extra = noise_pair(r)) q.push_back(*extra);
      emit(h, r, draw_tail(h, cmap[v]), std::move(q));
    }
  }
  return g;
}

DiscriminativeStats discriminative_stats(const KnowledgeGraph& g) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<StatementId>> groups;
  for (StatementId i = 0; i < g.num_statements(); ++i) {
    const auto& s = g.statement(i);
    groups[{s.head.value, s.relation.value}].push_back(i);
  }
  DiscriminativeStats out;
  out.head_relation_pairs = groups.size();
  for (const auto& [key, ids] : groups) {
    bool separable = false;
    for (std::size_t a = 0; a < ids.size() && !separable; ++a)
      for (std::size_t b = a + 1; b < ids.size() && !separable; ++b) {
        const auto& x = g.statement(ids[a]);
        const auto& y = g.statement(ids[b]);
        separable = x.tail != y.tail && !x.qualifiers.empty() && !y.qualifiers.empty() && x.qualifiers != y.qualifiers;
      }
    if (separable) ++out.separable_pairs;
  }
  return out;
}

}  // namespace hyperq
