#include "hyperq/trainer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace hyperq {
namespace {

struct Fixture {
  KnowledgeGraph g;
  DatasetBundle bundle;
  ModelShape shape;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture f;
    f.g = synth_graph(5, 80, 6, SynthProfile::mixed());
    SamplingConfig cfg;
    cfg.pattern = Pattern::P1;
    cfg.max_queries_per_split = 40;
    f.bundle = generate(f.g, cfg);
    f.shape = {f.g.num_entities(), f.g.num_relations(), f.g.num_entities()};
    return f;
  }();
  return f;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.hp.dim = 8;
  cfg.hp.layers = 2;
  cfg.hp.dropout = 0.2;
  cfg.batch_size = 8;
  cfg.max_epochs = 3;
  cfg.learning_rate = 1e-2;
  cfg.init_seed = 3;
  cfg.shuffle_seed = 4;
  return cfg;
}

std::vector<const DatasetQuery*> pointers(std::span<const DatasetQuery> qs, std::size_t n) {
  std::vector<const DatasetQuery*> out;
  for (std::size_t i = 0; i < n && i < qs.size(); ++i) out.push_back(&qs[i]);
  return out;
}

// Textbook form, without the overflow-safe rewrite.
double reference_bce(const std::vector<double>& s, const AnswerSet& a) {
  double total = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double y = std::binary_search(a.begin(), a.end(), EntityId(static_cast<std::uint32_t>(i))) ? 1.0 : 0.0;
    const double p = 1 / (1 + std::exp(-s[i]));
    total += -(y * std::log(p) + (1 - y) * std::log(1 - p));
  }
  return total / double(s.size());
}

TEST(Loss, AllZeroScoresGiveLn2) {
  for (std::size_t n : {1u, 5u, 100u}) {
    const std::vector<double> s(n, 0.0);
    EXPECT_NEAR(bce_loss(s, {EntityId(0)}), std::log(2.0), 1e-15);
  }
}

TEST(Loss, PerfectSeparationApproachesZero) {
  double prev = 1;
  for (double m : {1.0, 5.0, 20.0, 60.0}) {
    const std::vector<double> s{m, -m, -m};
    const double l = bce_loss(s, {EntityId(0)});
    EXPECT_LT(l, prev);
    prev = l;
  }
  EXPECT_LT(prev, 1e-25);
}

TEST(Loss, GradientMatchesFiniteDifferenceOfReference) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0, 2);
  for (int it = 0; it < 100; ++it) {
    std::vector<double> s(10);
    for (double& x : s) x = normal(rng);
    AnswerSet a{EntityId(static_cast<std::uint32_t>(rng() % 10))};
    if (it % 2) a.push_back(EntityId(10 - 1 - static_cast<std::uint32_t>(rng() % 3)));
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    Vec g;
    EXPECT_NEAR(bce_loss(s, a, &g), reference_bce(s, a), 1e-12);
    for (std::size_t i = 0; i < s.size(); ++i) {
      std::vector<double> up = s, down = s;
      const double h = 1e-5;
      up[i] += h;
      down[i] -= h;
      const double num = (reference_bce(up, a) - reference_bce(down, a)) / (2 * h);
      EXPECT_LT(std::abs(num - g[i]) / std::max(std::abs(num), std::abs(g[i])), 1e-6);
    }
  }
}

TEST(Adam, ZeroLearningRateLeavesParametersBitIdentical) {
  const auto& f = fixture();
  TrainConfig cfg = small_config();
  Parameters p = init_parameters(f.shape, cfg.hp, 1);
  const std::uint64_t before = p.digest();
  Parameters grad = p.zeros_like();
  const auto batch = pointers(f.bundle.split(Split::Train), 8);
  batch_gradient(p, cfg.hp, batch, {}, 1, grad);
  Adam adam(p, 0.0, 0.9, 0.999, 1e-8);
  adam.step(p, grad);
  EXPECT_EQ(p.digest(), before);

  cfg.learning_rate = 0;
  cfg.max_epochs = 1;
  const TrainResult r = train(f.shape, f.bundle.split(Split::Train), {}, cfg);
  EXPECT_EQ(r.params.digest(), init_parameters(f.shape, cfg.hp, cfg.init_seed).digest());
  EXPECT_GT(r.report.steps, 0u);
}

TEST(Adam, FirstStepMovesEachCoordinateByLearningRate) {
  HyperParams hp;
  hp.dim = 2;
  hp.layers = 0;
  Parameters p = init_parameters({2, 1, 2}, hp, 0);
  Parameters g = p.zeros_like();
  g.entity.data[0] = 3;
  g.entity.data[1] = -0.5;
  const double e0 = p.entity.data[0], e1 = p.entity.data[1], e2 = p.entity.data[2];
  Adam adam(p, 0.1, 0.9, 0.999, 1e-8);
  adam.step(p, g);
  EXPECT_NEAR(p.entity.data[0], e0 - 0.1, 1e-8);
  EXPECT_NEAR(p.entity.data[1], e1 + 0.1, 1e-8);
  EXPECT_EQ(p.entity.data[2], e2);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Train, ZeroEpochsReturnsInitialParameters) {
  const auto& f = fixture();
  TrainConfig cfg = small_config();
  cfg.max_epochs = 0;
  const TrainResult r = train(f.shape, f.bundle.split(Split::Train), f.bundle.split(Split::Validation), cfg);
  EXPECT_EQ(r.params.digest(), init_parameters(f.shape, cfg.hp, cfg.init_seed).digest());
  EXPECT_TRUE(r.report.epoch_loss.empty());
  EXPECT_TRUE(r.report.validation_mrr.empty());
  EXPECT_EQ(r.report.steps, 0u);
}

TEST(Train, SameSeedsGiveIdenticalParameters) {
  const auto& f = fixture();
  TrainConfig cfg = small_config();
  const auto a = train(f.shape, f.bundle.split(Split::Train), f.bundle.split(Split::Validation), cfg);
  const auto b = train(f.shape, f.bundle.split(Split::Train), f.bundle.split(Split::Validation), cfg);
  EXPECT_EQ(a.params.digest(), b.params.digest());
  auto ja = a.report.to_json(), jb = b.report.to_json();
  ja.erase("timing");
  jb.erase("timing");
  EXPECT_EQ(ja.dump(), jb.dump());
  cfg.threads = 3;
  const auto c = train(f.shape, f.bundle.split(Split::Train), f.bundle.split(Split::Validation), cfg);
  EXPECT_EQ(a.params.digest(), c.params.digest());
  cfg.threads = 1;
  cfg.shuffle_seed += 1;
  const auto d = train(f.shape, f.bundle.split(Split::Train), f.bundle.split(Split::Validation), cfg);
  EXPECT_NE(a.params.digest(), d.params.digest());
}

TEST(Train, LossNonIncreasingOverFirstTenSteps) {
  const auto& f = fixture();
  TrainConfig cfg = small_config();
  cfg.hp.dropout = 0;
  Parameters p = init_parameters(f.shape, cfg.hp, 7);
  Parameters grad = p.zeros_like();
  const auto batch = pointers(f.bundle.split(Split::Train), 10);
  ASSERT_EQ(batch.size(), 10u);
  Adam adam(p, 1e-3, 0.9, 0.999, 1e-8);
  double prev = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 10; ++step) {
    const double loss = batch_gradient(p, cfg.hp, batch, {}, 1, grad);
    EXPECT_LE(loss, prev) << "step " << step;
    prev = loss;
    adam.step(p, grad);
  }
}

TEST(Train, BatchGradientIsTheMeanOfPerQueryGradients) {
  const auto& f = fixture();
  TrainConfig cfg = small_config();
  const Parameters p = init_parameters(f.shape, cfg.hp, 8);
  const auto batch = pointers(f.bundle.split(Split::Train), 11);
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < batch.size(); ++i) seeds.push_back(100 + i);
  Parameters whole = p.zeros_like();
  const double loss = batch_gradient(p, cfg.hp, batch, seeds, 2, whole);

  Parameters sum = p.zeros_like();
  double loss_sum = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EncodeOptions opts;
    opts.training = true;
    opts.dropout_seed = seeds[i];
    loss_sum += loss_and_gradient(p, cfg.hp, batch[i]->query, batch[i]->answers, opts, sum);
  }
  EXPECT_NEAR(loss * double(batch.size()), loss_sum, 1e-12);
  std::vector<const Tensor*> a, b;
  whole.for_each([&](const Tensor& t) { a.push_back(&t); });
  sum.for_each([&](const Tensor& t) { b.push_back(&t); });
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k]->size(); ++i) EXPECT_NEAR(a[k]->data[i] * double(batch.size()), b[k]->data[i], 1e-12);
}

TEST(Train, ZeroParametersGiveLn2) {
  const auto& f = fixture();
  TrainConfig cfg = small_config();
  const Parameters p = init_parameters(f.shape, cfg.hp, 9).zeros_like();
  Parameters grad = p.zeros_like();
  EXPECT_NEAR(batch_gradient(p, cfg.hp, pointers(f.bundle.split(Split::Train), 5), {}, 1, grad), std::log(2.0), 1e-15);
}

TEST(Train, BestCheckpointHasTheBestValidationMrr) {
  const auto& f = fixture();
  TrainConfig cfg = small_config();
  cfg.max_epochs = 6;
  cfg.patience = 2;
  const auto r = train(f.shape, f.bundle.split(Split::Train), f.bundle.split(Split::Validation), cfg);
  ASSERT_FALSE(r.report.validation_mrr.empty());
  double best = -1;
  std::size_t best_epoch = 0;
  for (const auto& [epoch, mrr] : r.report.validation_mrr)
    if (mrr > best) best = mrr, best_epoch = epoch;
  EXPECT_EQ(r.report.best_epoch, best_epoch);
  EXPECT_EQ(r.report.best_validation_mrr, best);
  EXPECT_EQ(evaluate_model(r.params, cfg.hp, f.bundle.split(Split::Validation)).mrr, best);
  EXPECT_LE(r.report.epoch_loss.size(), cfg.max_epochs);
  EXPECT_FALSE(r.report.diverged);
}

TEST(Train, EarlyStoppingHonoursPatience) {
  const auto& f = fixture();
  TrainConfig cfg = small_config();
  cfg.learning_rate = 0;  // validation MRR never improves after the first evaluation
  cfg.max_epochs = 50;
  cfg.patience = 3;
  const auto r = train(f.shape, f.bundle.split(Split::Train), f.bundle.split(Split::Validation), cfg);
  EXPECT_EQ(r.report.epoch_loss.size(), 4u);
  EXPECT_EQ(r.report.best_epoch, 1u);
}

TEST(Train, DivergenceAbortsWithReport) {
  const auto& f = fixture();
  TrainConfig cfg = small_config();
  Parameters init = init_parameters(f.shape, cfg.hp, 1);
  const std::uint64_t digest = init.digest();
  std::fill(init.relation.data.begin(), init.relation.data.end(), std::numeric_limits<double>::quiet_NaN());
  const std::uint64_t poisoned = init.digest();
  const auto r = train(std::move(init), f.bundle.split(Split::Train), f.bundle.split(Split::Validation), cfg);
  EXPECT_TRUE(r.report.diverged);
  EXPECT_EQ(r.report.steps, 0u);
  EXPECT_EQ(r.params.digest(), poisoned);
  EXPECT_NE(poisoned, digest);
  EXPECT_TRUE(r.report.to_json().at("diverged").get<bool>());
}

TEST(Train, ReportJsonKeepsTimingSeparate) {
  const auto& f = fixture();
  TrainConfig cfg = small_config();
  cfg.max_epochs = 1;
  const auto r = train(f.shape, f.bundle.split(Split::Train), f.bundle.split(Split::Validation), cfg);
  nlohmann::ordered_json j = r.report.to_json();
  EXPECT_TRUE(j.contains("timing"));
  EXPECT_EQ(j.at("epochs").get<std::size_t>(), 1u);
  j.erase("timing");
  auto again = train(f.shape, f.bundle.split(Split::Train), f.bundle.split(Split::Validation), cfg).report.to_json();
  again.erase("timing");
  EXPECT_EQ(j.dump(), again.dump());
}

TEST(Train, TrainingImprovesOverInitialisation) {
  const auto& f = fixture();
  TrainConfig cfg = small_config();
  cfg.hp.dim = 16;
  cfg.max_epochs = 15;
  cfg.patience = 15;
  const auto& train_q = f.bundle.split(Split::Train);
  const double before = evaluate_model(init_parameters(f.shape, cfg.hp, cfg.init_seed), cfg.hp, train_q).mrr;
  const auto r = train(f.shape, train_q, {}, cfg);
  EXPECT_LT(r.report.epoch_loss.back(), r.report.epoch_loss.front());
  EXPECT_GT(evaluate_model(r.params, cfg.hp, train_q).mrr, before);
}

TEST(TrainConfig, Validation) {
  const auto& f = fixture();
  TrainConfig cfg = small_config();
  cfg.batch_size = 0;
  EXPECT_THROW(train(f.shape, f.bundle.split(Split::Train), {}, cfg), Error);
  cfg = small_config();
  cfg.patience = 0;
  EXPECT_THROW(train(f.shape, f.bundle.split(Split::Train), {}, cfg), Error);
  cfg = small_config();
  cfg.learning_rate = -1;
  EXPECT_THROW(train(f.shape, f.bundle.split(Split::Train), {}, cfg), Error);
  cfg = small_config();
  EXPECT_THROW(train(f.shape, std::span<const DatasetQuery>{}, {}, cfg), Error);
}

}  // namespace
}  // namespace hyperq
