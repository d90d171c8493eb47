#include "hyperq/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace hyperq {

void TrainConfig::validate() const {
  hp.validate();
  if (!(learning_rate >= 0)) throw Error("config_error", "learning rate must be non-negative");
  if (batch_size == 0) throw Error("config_error", "batch size must be positive");
  if (patience == 0) throw Error("config_error", "patience must be at least 1");
  if (eval_every == 0) throw Error("config_error", "eval_every must be at least 1");
}

nlohmann::ordered_json TrainReport::to_json() const {
  nlohmann::ordered_json j;
  j["epochs"] = epoch_loss.size();
  j["steps"] = steps;
  j["epoch_loss"] = epoch_loss;
  nlohmann::ordered_json trace = nlohmann::ordered_json::array();
  for (const auto& [epoch, mrr] : validation_mrr) trace.push_back({{"epoch", epoch}, {"mrr", mrr}});
  j["validation_mrr"] = std::move(trace);
  j["best_epoch"] = best_epoch;
  j["best_validation_mrr"] = best_validation_mrr;
  j["diverged"] = diverged;
  j["timing"] = {{"seconds", seconds}};
  return j;
}

Adam::Adam(const Parameters& like, double lr, double beta1, double beta2, double epsilon)
    : m_(like.zeros_like()), v_(like.zeros_like()), lr_(lr), b1_(beta1), b2_(beta2), eps_(epsilon) {}

void Adam::step(Parameters& params, const Parameters& grad) {
  ++t_;
  const double c1 = 1 - std::pow(b1_, double(t_));
  const double c2 = 1 - std::pow(b2_, double(t_));
  std::vector<Tensor*> p, g, m, v;
  params.for_each([&](Tensor& t) { p.push_back(&t); });
  const_cast<Parameters&>(grad).for_each([&](Tensor& t) { g.push_back(&t); });
  m_.for_each([&](Tensor& t) { m.push_back(&t); });
  v_.for_each([&](Tensor& t) { v.push_back(&t); });
  if (p.size() != g.size() || p.size() != m.size()) throw std::logic_error("Adam: parameter structure mismatch");
  for (std::size_t k = 0; k < p.size(); ++k) {
    double* pd = p[k]->data.data();
    const double* gd = g[k]->data.data();
    double* md = m[k]->data.data();
    double* vd = v[k]->data.data();
    for (std::size_t i = 0; i < p[k]->size(); ++i) {
      md[i] = b1_ * md[i] + (1 - b1_) * gd[i];
      vd[i] = b2_ * vd[i] + (1 - b2_) * gd[i] * gd[i];
      pd[i] -= lr_ * (md[i] / c1) / (std::sqrt(vd[i] / c2) + eps_);
    }
  }
}

namespace {

constexpr std::size_t kGradientChunks = 8;

void add_into(Parameters& dst, const Parameters& src, double scale) {
  std::vector<Tensor*> d;
  dst.for_each([&](Tensor& t) { d.push_back(&t); });
  std::size_t k = 0;
  src.for_each([&](const Tensor& t) {
    Tensor& out = *d[k++];
    for (std::size_t i = 0; i < t.size(); ++i) out.data[i] += scale * t.data[i];
  });
}

void zero(Parameters& p) {
  p.for_each([](Tensor& t) { std::fill(t.data.begin(), t.data.end(), 0.0); });
}

template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex m;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&]() {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(m);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

double batch_gradient(const Parameters& params, const HyperParams& hp, std::span<const DatasetQuery* const> batch,
                      std::span<const std::uint64_t> dropout_seeds, std::size_t threads, Parameters& grad) {
  if (batch.empty()) throw Error("invalid_argument", "empty batch");
  const std::size_t chunks = std::min(kGradientChunks, batch.size());
  std::vector<Parameters> partial(chunks, grad.zeros_like());
  std::vector<double> losses(batch.size(), 0);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * batch.size() / chunks, hi = (c + 1) * batch.size() / chunks;
    for (std::size_t i = lo; i < hi; ++i) {
      EncodeOptions opts;
      opts.training = true;
      opts.dropout_seed = i < dropout_seeds.size() ? dropout_seeds[i] : 0;
      losses[i] = loss_and_gradient(params, hp, batch[i]->query, batch[i]->answers, opts, partial[c]);
    }
  });
  zero(grad);
  const double inv = 1.0 / double(batch.size());
  for (const auto& p : partial) add_into(grad, p, inv);
  double total = 0;
  for (double l : losses) total += l;
  return total * inv;
}

Scorer model_scorer(const Parameters& params, const HyperParams& hp) {
  return [&params, hp](const QueryGraph& q) { return score_all(params, hp.similarity, encode(params, hp, q).x); };
}

Metrics evaluate_model(const Parameters& params, const HyperParams& hp, std::span<const DatasetQuery> queries, std::size_t threads) {
  const auto results = rank_all(queries, model_scorer(params, hp), threads);
  return aggregate(results);
}

TrainResult train(const ModelShape& shape, std::span<const DatasetQuery> train_queries,
                  std::span<const DatasetQuery> validation_queries, const TrainConfig& cfg) {
  return train(init_parameters(shape, cfg.hp, cfg.init_seed), train_queries, validation_queries, cfg);
}

TrainResult train(Parameters init, std::span<const DatasetQuery> train_queries, std::span<const DatasetQuery> validation_queries,
                  const TrainConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  TrainResult out{std::move(init), {}};
  if (cfg.max_epochs == 0) return out;
  if (train_queries.empty()) throw Error("invalid_argument", "training split is empty");

  Parameters& params = out.params;
  TrainReport& report = out.report;
  Parameters best = params;
  Parameters grad = params.zeros_like();
  Adam adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  std::mt19937_64 rng(cfg.shuffle_seed);
  std::vector<std::size_t> order(train_queries.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t evals_without_gain = 0;
  std::uint64_t seen = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      std::vector<const DatasetQuery*> batch;
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = lo; i < hi; ++i) {
        batch.push_back(&train_queries[order[i]]);
        seeds.push_back(mix64(cfg.shuffle_seed ^ mix64(++seen)));
      }
      const double loss = batch_gradient(params, cfg.hp, batch, seeds, cfg.threads, grad);
      if (!std::isfinite(loss)) {
        report.diverged = true;
        report.epoch_loss.push_back(loss);
        params = best;
        report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return out;
      }
      adam.step(params, grad);
      ++report.steps;
      epoch_loss += loss * double(hi - lo);
    }
    report.epoch_loss.push_back(epoch_loss / double(order.size()));

    if (validation_queries.empty()) {
      report.best_epoch = epoch;
      continue;
    }
    if (epoch % cfg.eval_every != 0 && epoch != cfg.max_epochs) continue;
    const double mrr = evaluate_model(params, cfg.hp, validation_queries, cfg.threads).mrr;
    report.validation_mrr.emplace_back(epoch, mrr);
    if (mrr > report.best_validation_mrr) {
      report.best_validation_mrr = mrr;
      report.best_epoch = epoch;
      best = params;
      evals_without_gain = 0;
    } else if (++evals_without_gain >= cfg.patience) {
      break;
    }
  }
  if (!validation_queries.empty()) params = std::move(best);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace hyperq
