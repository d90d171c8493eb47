#include "hyperq/evaluator.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "check_util.hpp"
#include "test_util.hpp"

namespace hyperq {
namespace {

AnswerSet ids(std::initializer_list<std::uint32_t> xs) {
  AnswerSet out;
  for (auto x : xs) out.push_back(EntityId(x));
  return out;
}

// O(|E|^2) reference: position of the first and last member of the tie block in a
// descending ordering of the filtered candidates.
double reference_rank(const std::vector<double>& scores, const AnswerSet& answers, const AnswerSet& easy, EntityId a) {
  std::vector<double> cands;
  for (std::uint32_t e = 0; e < scores.size(); ++e) {
    const bool other_answer = std::binary_search(answers.begin(), answers.end(), EntityId(e)) && EntityId(e) != a;
    const bool is_easy = std::binary_search(easy.begin(), easy.end(), EntityId(e));
    if (!other_answer && !is_easy) cands.push_back(scores[e]);
  }
  std::size_t first = 0, last = 0;
  for (std::size_t pos = 1; pos <= cands.size(); ++pos) {
    // Position `pos` in descending order holds the element with exactly pos-1 larger ones
    // (ties resolved by index, which is irrelevant for the block boundaries).
    std::size_t larger = 0;
    for (double c : cands) larger += c > scores[a.index()];
    std::size_t block = 0;
    for (double c : cands) block += c == scores[a.index()];
    first = larger + 1;
    last = larger + block;
    break;
  }
  return (double(first) + double(last)) / 2;
}

RankingResult make_result(std::vector<double> ranks, std::size_t candidates) {
  RankingResult r;
  for (double x : ranks) r.ranks.push_back({EntityId(0), x});
  r.candidate_count = candidates;
  r.answer_cardinality = ranks.size();
  return r;
}

TEST(Ranks, TieBlockAverages) {
  const std::vector<double> s = {0.9, 0.5, 0.5, 0.1};
  const RankingResult r = ranks(s, ids({1}));
  ASSERT_EQ(r.ranks.size(), 1u);
  EXPECT_EQ(r.ranks[0].rank, 2.5);
  EXPECT_EQ(r.candidate_count, 4u);
}

TEST(Ranks, OtherAnswersAreFiltered) {
  const std::vector<double> s = {0.9, 0.8, 0.7};
  const RankingResult r = ranks(s, ids({0, 1}));
  ASSERT_EQ(r.ranks.size(), 2u);
  EXPECT_EQ(r.ranks[0].rank, 1);
  EXPECT_EQ(r.ranks[1].rank, 1);
  EXPECT_EQ(r.candidate_count, 2u);
}

TEST(Ranks, EasyAnswersAreFilteredAndNotRanked) {
  const std::vector<double> s = {0.9, 0.8, 0.7, 0.1};
  const RankingResult r = ranks(s, ids({0, 2}), ids({0}));
  ASSERT_EQ(r.ranks.size(), 1u);
  EXPECT_EQ(r.ranks[0].answer, EntityId(2));
  EXPECT_EQ(r.ranks[0].rank, 2);
  EXPECT_EQ(r.answer_cardinality, 1u);
}

TEST(Ranks, Errors) {
  const std::vector<double> s = {0.1, 0.2};
  EXPECT_THROW(ranks(s, {}), Error);
  EXPECT_THROW(ranks(s, ids({0}), ids({0})), Error);
  EXPECT_THROW(ranks(s, ids({5})), Error);
}

TEST(Ranks, MatchesQuadraticReference) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> level(0, 6);
  for (int it = 0; it < 500; ++it) {
    const std::size_t n = 5 + rng() % 30;
    std::vector<double> s(n);
    for (double& x : s) x = level(rng) * 0.25;
    AnswerSet answers, easy;
    for (std::uint32_t e = 0; e < n; ++e) {
      if (rng() % 5 == 0) answers.push_back(EntityId(e));
      else if (rng() % 7 == 0) easy.push_back(EntityId(e));
    }
    if (answers.empty()) answers.push_back(EntityId(0));
    // some easy answers that are also answers
    if (answers.size() > 1 && rng() % 2) easy.insert(std::lower_bound(easy.begin(), easy.end(), answers[0]), answers[0]);
    const RankingResult r = ranks(s, answers, easy);
    for (const auto& ar : r.ranks) EXPECT_EQ(ar.rank, reference_rank(s, answers, easy, ar.answer));
  }
}

TEST(Ranks, ConstantScoresGiveMiddleOfTheBlock) {
  for (std::size_t n : {1u, 2u, 7u, 100u}) {
    const std::vector<double> s(n, 0.3);
    const RankingResult r = ranks(s, ids({0}));
    EXPECT_EQ(r.ranks[0].rank, (double(r.candidate_count) + 1) / 2);
  }
}

TEST(Ranks, AddingEasyAnswerNeverIncreasesRank) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (int it = 0; it < 300; ++it) {
    std::vector<double> s(20);
    for (double& x : s) x = std::round(normal(rng) * 2) / 2;
    const AnswerSet answers = ids({1, 4});
    const RankingResult before = ranks(s, answers);
    const RankingResult after = ranks(s, answers, ids({static_cast<std::uint32_t>(5 + rng() % 15)}));
    for (std::size_t i = 0; i < 2; ++i) EXPECT_LE(after.ranks[i].rank, before.ranks[i].rank);
  }
}

TEST(Aggregate, WeightedMrrHandExample) {
  const std::vector<RankingResult> rs = {make_result({1}, 10), make_result({1, 2}, 10)};
  EXPECT_DOUBLE_EQ(aggregate(rs).mrr, 0.875);
}

TEST(Aggregate, PerfectRanking) {
  const std::vector<RankingResult> rs = {make_result({1}, 10), make_result({1, 1, 1}, 4)};
  const Metrics m = aggregate(rs);
  EXPECT_EQ(m.hits.at(1), 1);
  EXPECT_EQ(m.mrr, 1);
  EXPECT_EQ(m.amri, 1);
}

TEST(Aggregate, RandomLevelAmri) {
  const std::vector<RankingResult> rs = {make_result({3}, 5)};
  EXPECT_DOUBLE_EQ(aggregate(rs).amri, 0);
}

TEST(Aggregate, HitsMonotoneAndDuplicationInvariant) {
  std::mt19937_64 rng(9);
  std::vector<RankingResult> rs;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> r;
    const std::size_t c = 5 + rng() % 30;
    for (std::size_t k = 0, n = 1 + rng() % 4; k < n; ++k) r.push_back(1 + double(rng() % (2 * c - 1)) / 2);
    rs.push_back(make_result(r, c));
  }
  const std::size_t ks[] = {1, 2, 3, 5, 10, 20};
  const Metrics m = aggregate(rs, ks);
  double prev = 0;
  for (std::size_t k : ks) {
    EXPECT_GE(m.hits.at(k), prev);
    prev = m.hits.at(k);
  }
  std::vector<RankingResult> twice = rs;
  twice.insert(twice.end(), rs.begin(), rs.end());
  const Metrics m2 = aggregate(twice, ks);
  for (std::size_t k : ks) EXPECT_NEAR(m2.hits.at(k), m.hits.at(k), 1e-12);
  EXPECT_NEAR(m2.mrr, m.mrr, 1e-12);
  EXPECT_NEAR(m2.amri, m.amri, 1e-12);
}

TEST(Aggregate, UniformRandomScoringHasZeroAmri) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> uni;
  std::vector<RankingResult> rs;
  for (int q = 0; q < 1000; ++q) {
    std::vector<double> s(50);
    for (double& x : s) x = uni(rng);
    AnswerSet a;
    for (std::uint32_t e = 0; e < 50; ++e)
      if (rng() % 10 == 0) a.push_back(EntityId(e));
    if (a.empty()) a.push_back(EntityId(rng() % 50));
    rs.push_back(ranks(s, a));
  }
  EXPECT_NEAR(aggregate(rs).amri, 0, 0.05);
}

using testing::oracle_case;
using testing::OracleCase;

TEST(Oracle, SingletonIsPerfect) {
  const OracleCase c = oracle_case(1, 1);
  const Metrics m = oracle_expected_metrics(c.g, std::span(&c.dq, 1));
  EXPECT_EQ(m.hits.at(1), 1);
  EXPECT_EQ(m.mrr, 1);
  EXPECT_EQ(m.amri, 1);
}

TEST(Oracle, ThreeCandidatesOneAnswer) {
  const OracleCase c = oracle_case(3, 1);
  ASSERT_EQ(c.dq.answers.size(), 1u);
  const std::size_t ks[] = {2};
  const Metrics m = oracle_expected_metrics(c.g, std::span(&c.dq, 1), ks);
  EXPECT_EQ(m.hits.at(2), 2.0 / 3.0);
  EXPECT_EQ(m.mrr, 11.0 / 18.0);
}

TEST(Oracle, InconsistentBundleIsAHardFailure) {
  OracleCase c = oracle_case(3, 1);
  c.dq.answers.push_back(c.g.entities().at("x0"));
  std::sort(c.dq.answers.begin(), c.dq.answers.end());
  EXPECT_THROW(oracle_expected_metrics(c.g, std::span(&c.dq, 1)), std::logic_error);
}

TEST(Oracle, ClosedFormMatchesMonteCarlo) {
  std::mt19937_64 rng(77);
  for (int it = 0; it < 200; ++it) {
    const std::size_t s = 1 + rng() % 25;
    const std::size_t a = 1 + rng() % s;
    const std::size_t k = 1 + rng() % 10;
    const OracleCase c = oracle_case(s, a);
    const std::size_t ks[] = {k};
    const Metrics m = oracle_expected_metrics(c.g, std::span(&c.dq, 1), ks);

    const auto [hits, rr] = testing::simulated_oracle(s, a, k, 10000, rng);
    EXPECT_LT(std::abs(m.hits.at(k) - hits), 0.01) << s << " " << a << " " << k;
    EXPECT_LT(std::abs(m.mrr - rr), 0.01) << s << " " << a << " " << k;
  }
}

TEST(RankAll, ParallelEqualsSerial) {
  std::mt19937_64 rng(4);
  const KnowledgeGraph g = testing::random_graph(rng, 20, 3, 100);
  std::vector<DatasetQuery> qs;
  while (qs.size() < 40) {
    DatasetQuery dq{testing::random_query(rng, g), {}, {}};
    dq.answers = answer_set(g, dq.query);
    if (!dq.answers.empty()) qs.push_back(std::move(dq));
  }
  const Scorer scorer = [&](const QueryGraph& q) {
    std::vector<double> s(g.num_entities());
    for (std::size_t e = 0; e < s.size(); ++e) s[e] = double(mix64(e ^ q.statements().size()) % 7);
    return s;
  };
  const auto a = rank_all(qs, scorer, 1), b = rank_all(qs, scorer, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].ranks.size(); ++j) EXPECT_EQ(a[i].ranks[j].rank, b[i].ranks[j].rank);
}

TEST(Report, JsonRoundTripAndSingleSeedMerge) {
  MetricReport rep;
  rep.rows.push_back({"1p", "test", aggregate(std::vector<RankingResult>{make_result({1, 3}, 9)})});
  rep.rows.push_back({"2p", "test", aggregate(std::vector<RankingResult>{make_result({2}, 9)})});
  const MetricReport back = MetricReport::from_json(nlohmann::json::parse(rep.to_json().dump()));
  EXPECT_EQ(back.to_json().dump(), rep.to_json().dump());

  const MergedReport merged = merge_reports(std::span(&rep, 1));
  ASSERT_EQ(merged.rows.size(), 2u);
  EXPECT_EQ(merged.rows[0].values.at("mrr").mean, rep.rows[0].metrics.mrr);
  EXPECT_EQ(merged.rows[0].values.at("mrr").std, 0);
  EXPECT_EQ(merged.rows[1].values.at("hits@10").mean, rep.rows[1].metrics.hits.at(10));
  EXPECT_NE(rep.to_table().find("1p"), std::string::npos);
}

TEST(Report, MergeUsesSampleStd) {
  MetricReport a, b;
  Metrics ma, mb;
  ma.mrr = 0.2;
  mb.mrr = 0.4;
  a.rows.push_back({"1p", "test", ma});
  b.rows.push_back({"1p", "test", mb});
  const MetricReport reps[] = {a, b};
  const MergedReport m = merge_reports(reps);
  EXPECT_DOUBLE_EQ(m.rows[0].values.at("mrr").mean, 0.3);
  EXPECT_DOUBLE_EQ(m.rows[0].values.at("mrr").std, std::sqrt(0.02));
}

}  // namespace
}  // namespace hyperq
