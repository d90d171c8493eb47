#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hyperq/autodiff.hpp"
#include "hyperq/matcher.hpp"
#include "hyperq/query.hpp"

namespace hyperq {

using ad::Tensor;
using ad::Vec;

enum class RelationAggregation { Sum, Attention };
enum class MessageWeighting { Symmetric, Attention };
enum class Pooling { Sum, Target };
enum class Similarity { Dot, Cosine, NegativeNorm };
enum class Activation { ReLU, LeakyReLU, PReLU };
enum class DepthMode { Fixed, Diameter, DiameterPlusOne };

std::string_view to_string(RelationAggregation v);
std::string_view to_string(MessageWeighting v);
std::string_view to_string(Pooling v);
std::string_view to_string(Similarity v);
std::string_view to_string(Activation v);
std::string_view to_string(DepthMode v);
RelationAggregation relation_aggregation_from_string(std::string_view s);
MessageWeighting message_weighting_from_string(std::string_view s);
Pooling pooling_from_string(std::string_view s);
Similarity similarity_from_string(std::string_view s);
Activation activation_from_string(std::string_view s);
DepthMode depth_mode_from_string(std::string_view s);

struct HyperParams {
  std::size_t dim = 192;
  /// Layers with their own weights; 0 disables message passing (Zero-Layers).
  std::size_t layers = 3;
  RelationAggregation relation_aggregation = RelationAggregation::Attention;
  MessageWeighting message_weighting = MessageWeighting::Attention;
  Pooling pooling = Pooling::Target;
  Similarity similarity = Similarity::Dot;
  Activation activation = Activation::LeakyReLU;
  double dropout = 0.5;
  bool use_bias = true;
  DepthMode depth_mode = DepthMode::Fixed;

  void validate() const;
};

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kAttentionSlope = 0.2;

/// Table sizes. `entities` rows are real entities (for the reified baseline this includes
/// relation nodes); only the first `candidates` of them are scored. `relations` excludes
/// inverses.
struct ModelShape {
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::size_t candidates = 0;

  std::size_t var_row() const { return entities; }
  std::size_t target_row() const { return entities + 1; }
  std::size_t inverse(std::size_t r) const { return relations + r; }
};

struct LayerParams {
  Tensor w_fwd, w_bwd, w_self, w_rel;  // d x d
  Tensor r_self;                       // 1 x d
  Tensor bias;                         // 1 x d
  Tensor att_rel, att_msg;             // 1 x 2d
  Tensor prelu;                        // 1 x 1
};

struct Parameters {
  ModelShape shape;
  std::size_t dim = 0;
  Tensor entity;    // (entities + 2) x d; VAR then TARGET rows at the end
  Tensor relation;  // 2 relations x d; inverse of r at r + relations
  std::vector<LayerParams> layers;

  /// Same shapes, all zeros.
  Parameters zeros_like() const;
  void for_each(const std::function<void(Tensor&)>& fn);
  void for_each(const std::function<void(const Tensor&)>& fn) const;
  std::size_t num_values() const;
  /// FNV-1a over every value, for reproducibility checks.
  std::uint64_t digest() const;
};

/// Uniform(-1/sqrt(d), 1/sqrt(d)) for tables and weights, PReLU slope 0.25, zero biases.
Parameters init_parameters(const ModelShape& shape, const HyperParams& hp, std::uint64_t seed);

void save_parameters(const Parameters& p, const std::filesystem::path& path);
/// Rejects files whose shape manifest differs from `expected` when one is given.
Parameters load_parameters(const std::filesystem::path& path, const Parameters* expected = nullptr);

// --- building blocks (exposed for testing; forward values only) -------------------------

/// h_q = gamma_q(e, r): elementwise product.
Vec compose(std::span<const double> a, std::span<const double> b);
/// phi_r over the main relation vector and qualifier representations.
Vec aggregate_relation(RelationAggregation agg, const Tensor& att, const Vec& relation, const std::vector<Vec>& qualifier_reps);
/// W (e * h_{r,qp}).
Vec message(const Tensor& w, const Vec& entity, const Vec& relation_rep);
/// phi_m over the messages arriving at a node from one direction; zero vector when empty.
Vec aggregate_messages(MessageWeighting mw, const Tensor& att, const Vec& node, const std::vector<Vec>& messages);
/// sigma((W_self(e * r_self) + a_fwd + a_bwd) / 3 + bias), dropout off.
Vec node_update(const HyperParams& hp, const LayerParams& layer, const Vec& node, const std::vector<Vec>& fwd,
                const std::vector<Vec>& bwd);
/// W_r r.
Vec relation_update(const Tensor& w_rel, const Vec& relation);

// --- encoding -------------------------------------------------------------------------------

struct EncodeOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

struct QueryEmbedding {
  Vec x;               // pooled query vector x_Q
  std::vector<Vec> nodes;  // final node vectors in canonical node order
};

/// Message-passing steps the encoder runs for `q` under `hp`.
std::size_t message_passing_steps(const HyperParams& hp, const QueryGraph& q);

/// Canonicalizes `q` (inverse edges, variable numbering) and encodes it.
QueryEmbedding encode(const Parameters& params, const HyperParams& hp, const QueryGraph& q, const EncodeOptions& opts = {});

/// sim(x, E[e]) for every candidate entity e.
Vec score_all(const Parameters& params, Similarity sim, std::span<const double> x);
/// Single similarity value (used by tests and the oracle-vs-model comparisons).
double similarity(Similarity sim, std::span<const double> x, std::span<const double> e);

/// Multi-label binary cross-entropy with logits, mean over the candidates, and its
/// gradient with respect to the scores.
double bce_loss(std::span<const double> scores, const AnswerSet& answers, Vec* grad = nullptr);

/// Forward + backward for one query: returns the loss and adds d(loss)/d(params) to `grad`.
double loss_and_gradient(const Parameters& params, const HyperParams& hp, const QueryGraph& q, const AnswerSet& answers,
                         const EncodeOptions& opts, Parameters& grad);

/// Generic variant: `loss` maps the candidate scores to a loss value and fills its gradient.
using ScoreLoss = std::function<double(std::span<const double> scores, Vec& grad)>;
double loss_and_gradient(const Parameters& params, const HyperParams& hp, const QueryGraph& q, const ScoreLoss& loss,
                         const EncodeOptions& opts, Parameters& grad);

}  // namespace hyperq
