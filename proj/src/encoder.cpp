#include "hyperq/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "json.hpp"

namespace hyperq {

using Tape = ad::Tape;
using TVar = ad::Tape::Var;

// --- enum names -----------------------------------------------------------------------------

namespace {

template <class E, std::size_t N>
E parse_enum(std::string_view s, const std::pair<E, std::string_view> (&table)[N], const char* what) {
  for (const auto& [e, name] : table)
    if (name == s) return e;
  throw Error("config_error", std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <class E, std::size_t N>
std::string_view name_of(E v, const std::pair<E, std::string_view> (&table)[N]) {
  for (const auto& [e, name] : table)
    if (e == v) return name;
  return "?";
}

constexpr std::pair<RelationAggregation, std::string_view> kRelAgg[] = {{RelationAggregation::Sum, "sum"},
                                                                       {RelationAggregation::Attention, "attention"}};
constexpr std::pair<MessageWeighting, std::string_view> kMsgW[] = {{MessageWeighting::Symmetric, "symmetric"},
                                                                  {MessageWeighting::Attention, "attention"}};
constexpr std::pair<Pooling, std::string_view> kPool[] = {{Pooling::Sum, "sum"}, {Pooling::Target, "target"}};
constexpr std::pair<Similarity, std::string_view> kSim[] = {
    {Similarity::Dot, "dot"}, {Similarity::Cosine, "cosine"}, {Similarity::NegativeNorm, "negative-norm"}};
constexpr std::pair<Activation, std::string_view> kAct[] = {
    {Activation::ReLU, "relu"}, {Activation::LeakyReLU, "leakyrelu"}, {Activation::PReLU, "prelu"}};
constexpr std::pair<DepthMode, std::string_view> kDepth[] = {
    {DepthMode::Fixed, "fixed"}, {DepthMode::Diameter, "diameter"}, {DepthMode::DiameterPlusOne, "diameter+1"}};

}  // namespace

std::string_view to_string(RelationAggregation v) { return name_of(v, kRelAgg); }
std::string_view to_string(MessageWeighting v) { return name_of(v, kMsgW); }
std::string_view to_string(Pooling v) { return name_of(v, kPool); }
std::string_view to_string(Similarity v) { return name_of(v, kSim); }
std::string_view to_string(Activation v) { return name_of(v, kAct); }
std::string_view to_string(DepthMode v) { return name_of(v, kDepth); }
RelationAggregation relation_aggregation_from_string(std::string_view s) { return parse_enum(s, kRelAgg, "relation aggregation"); }
MessageWeighting message_weighting_from_string(std::string_view s) { return parse_enum(s, kMsgW, "message weighting"); }
Pooling pooling_from_string(std::string_view s) { return parse_enum(s, kPool, "pooling"); }
Similarity similarity_from_string(std::string_view s) { return parse_enum(s, kSim, "similarity"); }
Activation activation_from_string(std::string_view s) { return parse_enum(s, kAct, "activation"); }
DepthMode depth_mode_from_string(std::string_view s) { return parse_enum(s, kDepth, "depth mode"); }

void HyperParams::validate() const {
  if (dim == 0) throw Error("config_error", "model dimension must be positive");
  if (!(dropout >= 0 && dropout < 1)) throw Error("config_error", "dropout must be in [0, 1)");
}

// --- parameters ---------------------------------------------------------------------------

void Parameters::for_each(const std::function<void(Tensor&)>& fn) {
  fn(entity);
  fn(relation);
  for (auto& l : layers)
    for (Tensor* t : {&l.w_fwd, &l.w_bwd, &l.w_self, &l.w_rel, &l.r_self, &l.bias, &l.att_rel, &l.att_msg, &l.prelu}) fn(*t);
}

void Parameters::for_each(const std::function<void(const Tensor&)>& fn) const {
  const_cast<Parameters*>(this)->for_each([&](Tensor& t) { fn(t); });
}

Parameters Parameters::zeros_like() const {
  Parameters out = *this;
  out.for_each([](Tensor& t) { std::fill(t.data.begin(), t.data.end(), 0.0); });
  return out;
}

std::size_t Parameters::num_values() const {
  std::size_t n = 0;
  for_each([&](const Tensor& t) { n += t.size(); });
  return n;
}

std::uint64_t Parameters::digest() const {
  std::uint64_t h = fnv1a(nullptr, 0);
  for_each([&](const Tensor& t) { h = fnv1a(t.data.data(), t.data.size() * sizeof(double), h); });
  return h;
}

Parameters init_parameters(const ModelShape& shape, const HyperParams& hp, std::uint64_t seed) {
  hp.validate();
  const std::size_t d = hp.dim;
  Parameters p;
  p.shape = shape;
  p.dim = d;
  p.entity = Tensor("entity", shape.entities + 2, d);
  p.relation = Tensor("relation", 2 * shape.relations, d);
  for (std::size_t l = 0; l < hp.layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    LayerParams lp;
    lp.w_fwd = Tensor(pre + "w_fwd", d, d);
    lp.w_bwd = Tensor(pre + "w_bwd", d, d);
    lp.w_self = Tensor(pre + "w_self", d, d);
    lp.w_rel = Tensor(pre + "w_rel", d, d);
    lp.r_self = Tensor(pre + "r_self", 1, d);
    lp.bias = Tensor(pre + "bias", 1, d);
    lp.att_rel = Tensor(pre + "att_rel", 1, 2 * d);
    lp.att_msg = Tensor(pre + "att_msg", 1, 2 * d);
    lp.prelu = Tensor(pre + "prelu", 1, 1);
    p.layers.push_back(std::move(lp));
  }
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(double(d));
  std::uniform_real_distribution<double> uni(-bound, bound);
  p.for_each([&](Tensor& t) {
    const std::string_view n = t.name;
    if (n.ends_with(".bias")) return;
    if (n.ends_with(".prelu")) {
      t.data[0] = 0.25;
      return;
    }
    for (double& x : t.data) x = uni(rng);
  });
  return p;
}

void save_parameters(const Parameters& p, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format"] = "hyperq-parameters";
  j["version"] = 1;
  j["dim"] = p.dim;
  j["shape"] = {{"entities", p.shape.entities}, {"relations", p.shape.relations}, {"candidates", p.shape.candidates}};
  j["layers"] = p.layers.size();
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  p.for_each([&](const Tensor& t) {
    tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}, {"data", t.data}});
  });
  j["tensors"] = std::move(tensors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  out << j.dump() << '\n';
}

Parameters load_parameters(const std::filesystem::path& path, const Parameters* expected) {
  std::ifstream in(path);
  if (!in) throw Error("missing_input", "checkpoint not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("parse_error", path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "hyperq-parameters" || j.value("version", 0) != 1)
    throw Error("checkpoint_error", "unsupported checkpoint format in " + path.string());
  ModelShape shape{j.at("shape").at("entities").get<std::size_t>(), j.at("shape").at("relations").get<std::size_t>(),
                   j.at("shape").at("candidates").get<std::size_t>()};
  HyperParams hp;
  hp.dim = j.at("dim").get<std::size_t>();
  hp.layers = j.at("layers").get<std::size_t>();
  Parameters p = init_parameters(shape, hp, 0);
  const auto& tensors = j.at("tensors");
  std::size_t i = 0;
  p.for_each([&](Tensor& t) {
    if (i >= tensors.size()) throw Error("checkpoint_error", "checkpoint is missing tensor " + t.name);
    const auto& jt = tensors[i++];
    if (jt.at("name").get<std::string>() != t.name || jt.at("rows").get<std::size_t>() != t.rows ||
        jt.at("cols").get<std::size_t>() != t.cols)
      throw Error("checkpoint_error", "shape mismatch for tensor " + t.name);
    t.data = jt.at("data").get<std::vector<double>>();
    if (t.data.size() != t.rows * t.cols) throw Error("checkpoint_error", "payload size mismatch for " + t.name);
  });
  if (i != tensors.size()) throw Error("checkpoint_error", "checkpoint has extra tensors");
  if (expected) {
    bool same = expected->dim == p.dim && expected->layers.size() == p.layers.size() &&
                expected->shape.entities == p.shape.entities && expected->shape.relations == p.shape.relations &&
                expected->shape.candidates == p.shape.candidates;
    if (!same) throw Error("checkpoint_error", "checkpoint shape does not match the model");
  }
  return p;
}

// --- forward graph ----------------------------------------------------------------------------

namespace {

struct LayerGrads {
  Tensor *w_fwd = nullptr, *w_bwd = nullptr, *w_self = nullptr, *w_rel = nullptr, *r_self = nullptr, *bias = nullptr,
         *att_rel = nullptr, *att_msg = nullptr, *prelu = nullptr;
};

LayerGrads layer_grads(Parameters* g, std::size_t l) {
  if (!g) return {};
  LayerParams& x = g->layers[l];
  return {&x.w_fwd, &x.w_bwd, &x.w_self, &x.w_rel, &x.r_self, &x.bias, &x.att_rel, &x.att_msg, &x.prelu};
}

TVar relation_agg(Tape& tape, RelationAggregation agg, const Tensor& att, Tensor* gatt, TVar relation,
                  const std::vector<TVar>& quals) {
  if (quals.empty()) return relation;
  if (agg == RelationAggregation::Sum) {
    std::vector<TVar> xs{relation};
    xs.insert(xs.end(), quals.begin(), quals.end());
    return tape.sum(xs);
  }
  std::vector<TVar> candidates{relation};
  candidates.insert(candidates.end(), quals.begin(), quals.end());
  return tape.attention(att, gatt, relation, candidates, kAttentionSlope);
}

std::optional<TVar> message_agg(Tape& tape, MessageWeighting mw, const Tensor& att, Tensor* gatt, TVar node,
                                const std::vector<TVar>& msgs) {
  if (msgs.empty()) return std::nullopt;
  if (mw == MessageWeighting::Symmetric) return tape.scale(tape.sum(msgs), 1.0 / std::sqrt(double(msgs.size())));
  return tape.attention(att, gatt, node, msgs, kAttentionSlope);
}

TVar activate(Tape& tape, Activation act, TVar x, const LayerParams& lp, Tensor* gprelu) {
  switch (act) {
    case Activation::ReLU: return tape.relu(x);
    case Activation::LeakyReLU: return tape.leaky_relu(x, kLeakySlope);
    case Activation::PReLU: return tape.prelu(x, lp.prelu, gprelu);
  }
  return x;
}

TVar update_node(Tape& tape, const HyperParams& hp, const LayerParams& lp, const LayerGrads& lg, TVar node,
                 const std::vector<TVar>& fwd, const std::vector<TVar>& bwd, std::mt19937_64* dropout_rng) {
  const TVar r_self = tape.row(lp.r_self, 0, lg.r_self);
  std::vector<TVar> parts{tape.matvec(lp.w_self, lg.w_self, tape.hadamard(node, r_self))};
  for (const auto* msgs : {&fwd, &bwd}) {
    auto agg = message_agg(tape, hp.message_weighting, lp.att_msg, lg.att_msg, node, *msgs);
    if (!agg) continue;
    if (dropout_rng && hp.dropout > 0) {
      std::bernoulli_distribution keep(1 - hp.dropout);
      Vec mask(hp.dim);
      for (double& m : mask) m = keep(*dropout_rng) ? 1.0 / (1 - hp.dropout) : 0.0;
      agg = tape.mask(*agg, std::move(mask));
    }
    parts.push_back(*agg);
  }
  TVar pre = tape.scale(tape.sum(parts), 1.0 / 3.0);
  if (hp.use_bias) pre = tape.add_tensor(pre, lp.bias, lg.bias);
  return activate(tape, hp.activation, pre, lp, lg.prelu);
}

std::size_t index_of(const std::vector<QueryNode>& nodes, const QueryNode& n) {
  return static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), n) - nodes.begin());
}

struct Forward {
  Tape tape;
  TVar x{0};
  std::vector<TVar> nodes;
};

QueryGraph prepare(const QueryGraph& q) {
  const Validity v = validate(q);
  if (!v.usable()) throw Error("invalid_query", "cannot encode invalid query: " + v.reason);
  return canonical_form(canonicalize(q));
}

void run_forward(Forward& f, const Parameters& params, const HyperParams& hp, const QueryGraph& raw, const EncodeOptions& opts,
                 Parameters* grad) {
  hp.validate();
  if (params.dim != hp.dim) throw Error("config_error", "parameter dimension does not match hyperparameters");
  const QueryGraph q = prepare(raw);
  const ModelShape& shape = params.shape;
  Tape& tape = f.tape;
  Tensor* g_entity = grad ? &grad->entity : nullptr;
  Tensor* g_relation = grad ? &grad->relation : nullptr;

  const auto& qnodes = q.nodes();
  std::vector<TVar>& E = f.nodes;
  for (const auto& n : qnodes) {
    std::size_t row = shape.target_row();
    if (n.is_anchor()) {
      if (n.id >= shape.entities) throw Error("invalid_query", "anchor entity outside the model vocabulary");
      row = n.id;
    } else if (n.is_var()) {
      row = shape.var_row();
    }
    E.push_back(tape.row(params.entity, row, g_entity));
  }

  // Relation rows in use: both orientations of every edge relation and qualifier relations.
  const auto check_relation = [&](RelationId r) {
    if (r.index() >= shape.relations) throw Error("invalid_query", "relation outside the model vocabulary");
  };
  std::map<std::size_t, TVar> R;
  std::map<std::uint32_t, TVar> qual_entity;
  for (const auto& s : q.statements()) {
    check_relation(s.relation);
    R.emplace(s.relation.index(), TVar{0});
    R.emplace(shape.inverse(s.relation.index()), TVar{0});
    for (const auto& qp : s.qualifiers) {
      check_relation(qp.relation);
      if (qp.value.index() >= shape.entities) throw Error("invalid_query", "qualifier value outside the model vocabulary");
      R.emplace(qp.relation.index(), TVar{0});
      qual_entity.emplace(qp.value.value, TVar{0});
    }
  }
  for (auto& [row, var] : R) var = tape.row(params.relation, row, g_relation);
  for (auto& [id, var] : qual_entity) var = tape.row(params.entity, id, g_entity);

  std::mt19937_64 dropout_rng(opts.dropout_seed);
  const std::size_t steps = message_passing_steps(hp, q);
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t l = std::min(t, hp.layers - 1);
    if (l >= params.layers.size()) throw Error("config_error", "parameters have fewer layers than configured");
    const LayerParams& lp = params.layers[l];
    const LayerGrads lg = layer_grads(grad, l);
    std::vector<std::vector<TVar>> fwd(qnodes.size()), bwd(qnodes.size());
    for (const auto& s : q.statements()) {
      const std::size_t h = index_of(qnodes, s.head), tl = index_of(qnodes, s.tail);
      const std::size_t r = s.relation.index();
      const std::size_t fr = s.direction == Direction::Forward ? r : shape.inverse(r);
      const std::size_t br = s.direction == Direction::Forward ? shape.inverse(r) : r;
      std::vector<TVar> quals;
      for (const auto& qp : s.qualifiers) quals.push_back(tape.hadamard(qual_entity.at(qp.value.value), R.at(qp.relation.index())));
      const TVar h_fwd = relation_agg(tape, hp.relation_aggregation, lp.att_rel, lg.att_rel, R.at(fr), quals);
      const TVar h_bwd = relation_agg(tape, hp.relation_aggregation, lp.att_rel, lg.att_rel, R.at(br), quals);
      fwd[tl].push_back(tape.matvec(lp.w_fwd, lg.w_fwd, tape.hadamard(E[h], h_fwd)));
      bwd[h].push_back(tape.matvec(lp.w_bwd, lg.w_bwd, tape.hadamard(E[tl], h_bwd)));
    }
    std::vector<TVar> next;
    for (std::size_t i = 0; i < qnodes.size(); ++i)
      next.push_back(update_node(tape, hp, lp, lg, E[i], fwd[i], bwd[i], opts.training ? &dropout_rng : nullptr));
    E = std::move(next);
    for (auto& [row, var] : R) var = tape.matvec(lp.w_rel, lg.w_rel, var);
  }

  if (hp.pooling == Pooling::Target) {
    f.x = E[index_of(qnodes, QueryNode::target())];
  } else {
    f.x = tape.sum(E);
  }
}

}  // namespace

std::size_t message_passing_steps(const HyperParams& hp, const QueryGraph& q) {
  if (hp.layers == 0) return 0;
  switch (hp.depth_mode) {
    case DepthMode::Fixed: return hp.layers;
    case DepthMode::Diameter: return diameter(q);
    case DepthMode::DiameterPlusOne: return diameter(q) + 1;
  }
  return hp.layers;
}

QueryEmbedding encode(const Parameters& params, const HyperParams& hp, const QueryGraph& q, const EncodeOptions& opts) {
  Forward f;
  run_forward(f, params, hp, q, opts, nullptr);
  QueryEmbedding out;
  out.x = f.tape.value(f.x);
  for (TVar v : f.nodes) out.nodes.push_back(f.tape.value(v));
  return out;
}

// --- building blocks ------------------------------------------------------------------------

Vec compose(std::span<const double> a, std::span<const double> b) {
  Tape tape;
  const TVar x = tape.constant(Vec(a.begin(), a.end())), y = tape.constant(Vec(b.begin(), b.end()));
  return tape.value(tape.hadamard(x, y));
}

Vec aggregate_relation(RelationAggregation agg, const Tensor& att, const Vec& relation, const std::vector<Vec>& qualifier_reps) {
  Tape tape;
  std::vector<TVar> quals;
  for (const auto& q : qualifier_reps) quals.push_back(tape.constant(q));
  return tape.value(relation_agg(tape, agg, att, nullptr, tape.constant(relation), quals));
}

Vec message(const Tensor& w, const Vec& entity, const Vec& relation_rep) {
  Tape tape;
  return tape.value(tape.matvec(w, nullptr, tape.hadamard(tape.constant(entity), tape.constant(relation_rep))));
}

Vec aggregate_messages(MessageWeighting mw, const Tensor& att, const Vec& node, const std::vector<Vec>& messages) {
  Tape tape;
  std::vector<TVar> msgs;
  for (const auto& m : messages) msgs.push_back(tape.constant(m));
  const auto out = message_agg(tape, mw, att, nullptr, tape.constant(node), msgs);
  return out ? tape.value(*out) : Vec(node.size(), 0.0);
}

Vec node_update(const HyperParams& hp, const LayerParams& layer, const Vec& node, const std::vector<Vec>& fwd,
                const std::vector<Vec>& bwd) {
  Tape tape;
  std::vector<TVar> f, b;
  for (const auto& m : fwd) f.push_back(tape.constant(m));
  for (const auto& m : bwd) b.push_back(tape.constant(m));
  return tape.value(update_node(tape, hp, layer, {}, tape.constant(node), f, b, nullptr));
}

Vec relation_update(const Tensor& w_rel, const Vec& relation) {
  Tape tape;
  return tape.value(tape.matvec(w_rel, nullptr, tape.constant(relation)));
}

// --- scoring and loss ---------------------------------------------------------------------------

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Adds w * d sim / dx into gx and w * d sim / de into ge.
void similarity_grad(Similarity sim, std::span<const double> x, std::span<const double> e, double w, double* gx, double* ge) {
  const std::size_t d = x.size();
  switch (sim) {
    case Similarity::Dot:
      for (std::size_t i = 0; i < d; ++i) {
        gx[i] += w * e[i];
        ge[i] += w * x[i];
      }
      return;
    case Similarity::Cosine: {
      const double nx = std::sqrt(dot(x, x)), ne = std::sqrt(dot(e, e));
      if (nx == 0 || ne == 0) return;
      const double s = dot(x, e) / (nx * ne);
      for (std::size_t i = 0; i < d; ++i) {
        gx[i] += w * (e[i] / (nx * ne) - s * x[i] / (nx * nx));
        ge[i] += w * (x[i] / (nx * ne) - s * e[i] / (ne * ne));
      }
      return;
    }
    case Similarity::NegativeNorm: {
      double dist = 0;
      for (std::size_t i = 0; i < d; ++i) dist += (x[i] - e[i]) * (x[i] - e[i]);
      dist = std::sqrt(dist);
      if (dist == 0) return;
      for (std::size_t i = 0; i < d; ++i) {
        const double u = (x[i] - e[i]) / dist;
        gx[i] -= w * u;
        ge[i] += w * u;
      }
      return;
    }
  }
}

}  // namespace

double similarity(Similarity sim, std::span<const double> x, std::span<const double> e) {
  if (x.size() != e.size()) throw std::invalid_argument("similarity: size mismatch");
  switch (sim) {
    case Similarity::Dot: return dot(x, e);
    case Similarity::Cosine: {
      const double nx = std::sqrt(dot(x, x)), ne = std::sqrt(dot(e, e));
      return nx == 0 || ne == 0 ? 0.0 : dot(x, e) / (nx * ne);
    }
    case Similarity::NegativeNorm: {
      double dist = 0;
      for (std::size_t i = 0; i < x.size(); ++i) dist += (x[i] - e[i]) * (x[i] - e[i]);
      return -std::sqrt(dist);
    }
  }
  return 0;
}

Vec score_all(const Parameters& params, Similarity sim, std::span<const double> x) {
  Vec out(params.shape.candidates);
  for (std::size_t e = 0; e < out.size(); ++e)
    out[e] = similarity(sim, x, std::span<const double>(params.entity.row(e), params.dim));
  return out;
}

double bce_loss(std::span<const double> scores, const AnswerSet& answers, Vec* grad) {
  if (answers.empty()) throw Error("invalid_argument", "loss needs at least one answer");
  const std::size_t n = scores.size();
  std::vector<char> target(n, 0);
  for (EntityId a : answers) {
    if (a.index() >= n) throw Error("invalid_argument", "answer outside the candidate set");
    target[a.index()] = 1;
  }
  if (grad) grad->assign(n, 0.0);
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = scores[i];
    // softplus(s) - y s, computed without overflow
    loss += std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s))) - (target[i] ? s : 0.0);
    if (grad) {
      const double sig = s >= 0 ? 1 / (1 + std::exp(-s)) : std::exp(s) / (1 + std::exp(s));
      (*grad)[i] = (sig - target[i]) / double(n);
    }
  }
  return loss / double(n);
}

double loss_and_gradient(const Parameters& params, const HyperParams& hp, const QueryGraph& q, const ScoreLoss& loss,
                         const EncodeOptions& opts, Parameters& grad) {
  Forward f;
  run_forward(f, params, hp, q, opts, &grad);
  const Vec x = f.tape.value(f.x);
  const Vec scores = score_all(params, hp.similarity, x);
  Vec g;
  const double value = loss(scores, g);
  if (g.size() != scores.size()) throw std::logic_error("loss gradient has the wrong size");
  Vec gx(x.size(), 0.0);
  for (std::size_t e = 0; e < scores.size(); ++e) {
    if (g[e] == 0) continue;
    similarity_grad(hp.similarity, x, std::span<const double>(params.entity.row(e), params.dim), g[e], gx.data(),
                    grad.entity.row(e));
  }
  f.tape.backward(f.x, gx);
  return value;
}

double loss_and_gradient(const Parameters& params, const HyperParams& hp, const QueryGraph& q, const AnswerSet& answers,
                         const EncodeOptions& opts, Parameters& grad) {
  return loss_and_gradient(
      params, hp, q, [&](std::span<const double> scores, Vec& g) { return bce_loss(scores, answers, &g); }, opts, grad);
}

}  // namespace hyperq
