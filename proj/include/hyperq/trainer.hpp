#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hyperq/encoder.hpp"
#include "hyperq/evaluator.hpp"
#include "hyperq/sampler.hpp"

namespace hyperq {

struct TrainConfig {
  HyperParams hp;
  double learning_rate = 0.0007741;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::size_t eval_every = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t init_seed = 0;
  std::uint64_t shuffle_seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<std::pair<std::size_t, double>> validation_mrr;  // (epoch, weighted MRR)
  std::size_t best_epoch = 0;
  double best_validation_mrr = -1;
  std::size_t steps = 0;
  bool diverged = false;
  double seconds = 0;

  /// Deterministic fields only; wall-clock time is kept under a separate "timing" key.
  nlohmann::ordered_json to_json() const;
};

struct TrainResult {
  Parameters params;
  TrainReport report;
};

class Adam {
 public:
  Adam(const Parameters& like, double lr, double beta1, double beta2, double epsilon);
  /// p -= lr * m_hat / (sqrt(v_hat) + eps), with bias-corrected moments.
  void step(Parameters& params, const Parameters& grad);
  std::size_t steps() const { return t_; }

 private:
  Parameters m_, v_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

/// Mean BCE loss over `batch` and its gradient (mean of per-query gradients), computed over
/// a fixed number of chunks reduced in chunk order.
double batch_gradient(const Parameters& params, const HyperParams& hp, std::span<const DatasetQuery* const> batch,
                      std::span<const std::uint64_t> dropout_seeds, std::size_t threads, Parameters& grad);

/// Seeded init, shuffled minibatches, Adam, validation weighted MRR every `eval_every`
/// epochs with early stopping; returns the best parameters seen (or the last ones
/// without validation queries).
TrainResult train(const ModelShape& shape, std::span<const DatasetQuery> train_queries,
                  std::span<const DatasetQuery> validation_queries, const TrainConfig& cfg);
TrainResult train(Parameters init, std::span<const DatasetQuery> train_queries, std::span<const DatasetQuery> validation_queries,
                  const TrainConfig& cfg);

Scorer model_scorer(const Parameters& params, const HyperParams& hp);
Metrics evaluate_model(const Parameters& params, const HyperParams& hp, std::span<const DatasetQuery> queries,
                       std::size_t threads = 1);

}  // namespace hyperq
