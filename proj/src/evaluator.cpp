#include "hyperq/evaluator.hpp"

#include <algorithm>
#include <numeric>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace hyperq {

RankingResult ranks(std::span<const double> scores, const AnswerSet& answers, const AnswerSet& easy_answers) {
  if (answers.empty()) throw Error("invalid_argument", "ranking needs at least one answer");
  const std::size_t n = scores.size();
  std::vector<bool> filtered(n, false);
  for (EntityId a : answers) {
    if (a.index() >= n) throw Error("invalid_argument", "answer outside the scored entities");
    filtered[a.index()] = true;
  }
  for (EntityId e : easy_answers)
    if (e.index() < n) filtered[e.index()] = true;

  std::vector<double> others;
  others.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(scores[i])) throw Error("numerical_error", "NaN score");
    if (!filtered[i]) others.push_back(scores[i]);
  }
  std::sort(others.begin(), others.end());

  RankingResult out;
  out.candidate_count = others.size() + 1;
  for (EntityId a : answers) {
    if (std::binary_search(easy_answers.begin(), easy_answers.end(), a)) continue;
    const double s = scores[a.index()];
    const auto lo = std::lower_bound(others.begin(), others.end(), s);
    const auto hi = std::upper_bound(others.begin(), others.end(), s);
    const double greater = double(others.end() - hi);
    const double greater_equal = double(others.end() - lo) + 1;  // the answer itself
    out.ranks.push_back({a, (greater + 1 + greater_equal) / 2});
  }
  if (out.ranks.empty()) throw Error("invalid_argument", "every answer is an easy answer");
  out.answer_cardinality = out.ranks.size();
  return out;
}

Metrics aggregate(std::span<const RankingResult> results, std::span<const std::size_t> ks) {
  Metrics m;
  m.queries = results.size();
  for (std::size_t k : ks) m.hits[k] = 0;
  if (results.empty()) return m;
  double total = 0, rr = 0, adjusted = 0, expected = 0;
  for (const auto& r : results) {
    if (r.ranks.empty()) continue;
    const double w = 1.0 / double(r.ranks.size());
    for (const auto& ar : r.ranks) {
      total += w;
      rr += w / ar.rank;
      adjusted += w * (ar.rank - 1);
      expected += w * (double(r.candidate_count) - 1) / 2;
      for (std::size_t k : ks)
        if (ar.rank <= double(k)) m.hits[k] += w;
    }
  }
  if (total == 0) return m;
  for (auto& [k, h] : m.hits) h /= total;
  m.mrr = rr / total;
  // With a single candidate every rank is 1, which counts as perfect.
  m.amri = expected > 0 ? 1 - adjusted / expected : 1.0;
  return m;
}

namespace {

// H_m / m, the mean of 1/r for r uniform on 1..m. Exact as a fraction while it fits in a
// double mantissa so that small cases come out correctly rounded.
double expected_reciprocal_rank(std::size_t m) {
  using u128 = unsigned __int128;
  constexpr u128 limit = u128(1) << 53;
  u128 num = 0, den = 1;
  bool exact = true;
  for (std::size_t i = 1; i <= m && exact; ++i) {
    num = num * i + den;
    den *= i;
    const u128 g = std::gcd(num, den);
    num /= g;
    den /= g;
    exact = den < limit;
  }
  if (exact) {
    den *= m;
    const u128 g = std::gcd(num, den);
    num /= g;
    den /= g;
    if (num < limit && den < limit) return double(std::uint64_t(num)) / double(std::uint64_t(den));
  }
  long double h = 0;
  for (std::size_t i = 1; i <= m; ++i) h += 1.0L / (long double)i;
  return double(h / (long double)m);
}

}  // namespace

Metrics oracle_expected_metrics(const KnowledgeGraph& g_full, std::span<const DatasetQuery> queries,
                                std::span<const std::size_t> ks) {
  Metrics m;
  m.queries = queries.size();
  for (std::size_t k : ks) m.hits[k] = 0;
  double total = 0, rr = 0, adjusted = 0, expected = 0;
  const double n = double(g_full.num_entities());
  for (const auto& dq : queries) {
    const AnswerSet s = answer_set_ignoring_qualifiers(g_full, dq.query, SplitSet::all());
    if (!std::includes(s.begin(), s.end(), dq.answers.begin(), dq.answers.end()))
      throw std::logic_error("oracle: true answers are not contained in the qualifier-free answers");
    const AnswerSet hard = dq.hard_answers();
    if (hard.empty()) continue;
    AnswerSet filter;
    std::set_union(dq.answers.begin(), dq.answers.end(), dq.easy_answers.begin(), dq.easy_answers.end(), std::back_inserter(filter));
    const double big_m = double(s.size() - dq.answers.size() + 1);
    const double candidates = n - double(filter.size()) + 1;
    // |hard| ranks of weight 1/|hard| each sum to one unit per query.
    total += 1;
    rr += expected_reciprocal_rank(s.size() - dq.answers.size() + 1);
    adjusted += (big_m - 1) / 2;
    expected += (candidates - 1) / 2;
    for (std::size_t k : ks) m.hits[k] += std::min(double(k), big_m) / big_m;
  }
  if (total == 0) return m;
  for (auto& [k, h] : m.hits) h /= total;
  m.mrr = rr / total;
  m.amri = expected > 0 ? 1 - adjusted / expected : 1.0;
  return m;
}

std::vector<RankingResult> rank_all(std::span<const DatasetQuery> queries, const Scorer& scorer, std::size_t threads) {
  std::vector<RankingResult> out(queries.size());
  const auto one = [&](std::size_t i) {
    const std::vector<double> s = scorer(queries[i].query);
    out[i] = ranks(s, queries[i].answers, queries[i].easy_answers);
  };
  threads = std::max<std::size_t>(1, std::min(threads, queries.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < queries.size(); ++i) one(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&]() {
      for (std::size_t i; (i = next.fetch_add(1)) < queries.size();) {
        try {
          one(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

std::size_t thread_budget() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HYPERQ_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = static_cast<std::size_t>(v);
  }
  return n;
}

// --- reports ------------------------------------------------------------------------------

namespace {

std::string hits_key(std::size_t k) { return "hits@" + std::to_string(k); }

std::vector<std::string> column_order(const std::vector<std::string>& patterns) {
  std::vector<std::string> out;
  for (Pattern p : kAllPatterns)
    if (std::find(patterns.begin(), patterns.end(), to_string(p)) != patterns.end()) out.emplace_back(to_string(p));
  for (const auto& p : patterns)
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  return out;
}

std::string format_table(const std::vector<std::string>& metrics, const std::vector<std::string>& columns,
                         const std::function<std::string(const std::string&, const std::string&)>& cell) {
  std::vector<std::vector<std::string>> grid;
  grid.push_back({"metric"});
  for (const auto& c : columns) grid[0].push_back(c);
  for (const auto& m : metrics) {
    std::vector<std::string> row{m};
    for (const auto& c : columns) row.push_back(cell(m, c));
    grid.push_back(std::move(row));
  }
  std::vector<std::size_t> width(grid[0].size(), 0);
  for (const auto& row : grid)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  std::string out;
  for (const auto& row : grid) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      const std::string pad(width[i] - row[i].size(), ' ');
      out += i == 0 ? row[i] + pad : "  " + pad + row[i];
    }
    out += '\n';
  }
  return out;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100 * v);
  return buf;
}

}  // namespace

const Metrics* MetricReport::find(const std::string& pattern, const std::string& split) const {
  for (const auto& r : rows)
    if (r.pattern == pattern && r.split == split) return &r.metrics;
  return nullptr;
}

nlohmann::ordered_json MetricReport::to_json() const {
  nlohmann::ordered_json rows_json = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["pattern"] = r.pattern;
    j["split"] = r.split;
    j["queries"] = r.metrics.queries;
    for (const auto& [k, h] : r.metrics.hits) j[hits_key(k)] = h;
    j["mrr"] = r.metrics.mrr;
    j["amri"] = r.metrics.amri;
    rows_json.push_back(std::move(j));
  }
  nlohmann::ordered_json out;
  out["rows"] = std::move(rows_json);
  return out;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport out;
  for (const auto& r : j.at("rows")) {
    Row row;
    row.pattern = r.at("pattern").get<std::string>();
    row.split = r.at("split").get<std::string>();
    row.metrics.queries = r.at("queries").get<std::size_t>();
    row.metrics.mrr = r.at("mrr").get<double>();
    row.metrics.amri = r.at("amri").get<double>();
    for (auto it = r.begin(); it != r.end(); ++it)
      if (it.key().rfind("hits@", 0) == 0) row.metrics.hits[std::stoul(it.key().substr(5))] = it.value().get<double>();
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::string MetricReport::to_table(const std::string& split) const {
  std::vector<std::string> patterns;
  std::vector<std::string> metrics;
  for (const auto& r : rows) {
    if (r.split != split) continue;
    patterns.push_back(r.pattern);
    if (metrics.empty()) {
      for (const auto& [k, h] : r.metrics.hits) metrics.push_back(hits_key(k));
      metrics.insert(metrics.end(), {"mrr", "amri", "queries"});
    }
  }
  return format_table(metrics, column_order(patterns), [&](const std::string& metric, const std::string& pattern) {
    const Metrics* m = find(pattern, split);
    if (!m) return std::string("-");
    if (metric == "mrr") return percent(m->mrr);
    if (metric == "amri") return percent(m->amri);
    if (metric == "queries") return std::to_string(m->queries);
    const auto it = m->hits.find(std::stoul(metric.substr(5)));
    return it == m->hits.end() ? std::string("-") : percent(it->second);
  });
}

MergedReport merge_reports(std::span<const MetricReport> reports) {
  if (reports.empty()) throw Error("invalid_argument", "no reports to merge");
  MergedReport out;
  out.seeds = reports.size();
  for (const auto& row : reports[0].rows) {
    std::map<std::string, std::vector<double>> samples;
    for (const auto& rep : reports) {
      const Metrics* m = rep.find(row.pattern, row.split);
      if (!m) throw Error("report_mismatch", "report lacks row " + row.pattern + "/" + row.split);
      for (const auto& [k, h] : m->hits) samples[hits_key(k)].push_back(h);
      samples["mrr"].push_back(m->mrr);
      samples["amri"].push_back(m->amri);
      samples["queries"].push_back(double(m->queries));
    }
    MergedReport::Row merged{row.pattern, row.split, {}};
    for (const auto& [name, xs] : samples) {
      double mean = 0;
      for (double x : xs) mean += x;
      mean /= double(xs.size());
      double var = 0;
      for (double x : xs) var += (x - mean) * (x - mean);
      merged.values[name] = {mean, xs.size() > 1 ? std::sqrt(var / double(xs.size() - 1)) : 0.0};
    }
    out.rows.push_back(std::move(merged));
  }
  for (const auto& rep : reports)
    if (rep.rows.size() != reports[0].rows.size()) throw Error("report_mismatch", "reports have different rows");
  return out;
}

nlohmann::ordered_json MergedReport::to_json() const {
  nlohmann::ordered_json rows_json = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["pattern"] = r.pattern;
    j["split"] = r.split;
    for (const auto& [name, v] : r.values) j[name] = {{"mean", v.mean}, {"std", v.std}};
    rows_json.push_back(std::move(j));
  }
  nlohmann::ordered_json out;
  out["seeds"] = seeds;
  out["rows"] = std::move(rows_json);
  return out;
}

std::string MergedReport::to_table(const std::string& split) const {
  std::vector<std::string> patterns, metrics;
  for (const auto& r : rows) {
    if (r.split != split) continue;
    patterns.push_back(r.pattern);
    if (metrics.empty())
      for (const auto& [name, v] : r.values)
        if (name != "queries") metrics.push_back(name);
  }
  return format_table(metrics, column_order(patterns), [&](const std::string& metric, const std::string& pattern) {
    for (const auto& r : rows)
      if (r.pattern == pattern && r.split == split) {
        const auto it = r.values.find(metric);
        if (it == r.values.end()) return std::string("-");
        return percent(it->second.mean) + " ± " + percent(it->second.std);
      }
    return std::string("-");
  });
}

}  // namespace hyperq
