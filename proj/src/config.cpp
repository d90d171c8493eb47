#include "hyperq/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hyperq/error.hpp"

namespace hyperq {

namespace {

constexpr std::pair<Regime, std::string_view> kRegimes[] = {
    {Regime::All, "all"},
    {Regime::Q2BLike, "q2b-like"},
    {Regime::EmQLLike, "emql-like"},
    {Regime::MPQELike, "mpqe-like"},
    {Regime::MPQELikeReif, "mpqe-like+reif"},
};
constexpr std::pair<Baseline, std::string_view> kBaselines[] = {
    {Baseline::StarQE, "starqe"},
    {Baseline::TripleOnly, "triple-only"},
    {Baseline::Reification, "reification"},
    {Baseline::ZeroLayers, "zero-layers"},
    {Baseline::Oracle, "oracle"},
};

template <class E, std::size_t N>
E lookup(std::string_view s, const std::pair<E, std::string_view> (&table)[N], const char* what) {
  for (const auto& [v, name] : table)
    if (name == s) return v;
  std::string names;
  for (const auto& [v, name] : table) names += (names.empty() ? "" : ", ") + std::string(name);
  throw Error("config_error", "unknown " + std::string(what) + " '" + std::string(s) + "' (expected one of " + names + ")");
}

template <class E, std::size_t N>
std::string_view name_of(E v, const std::pair<E, std::string_view> (&table)[N]) {
  for (const auto& [e, name] : table)
    if (e == v) return name;
  return "?";
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Drops a trailing `; comment` or `# comment` that follows whitespace.
std::string strip_inline_comment(const std::string& s) {
  for (std::size_t i = 1; i < s.size(); ++i)
    if ((s[i] == ';' || s[i] == '#') && (s[i - 1] == ' ' || s[i - 1] == '\t')) return s.substr(0, i);
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Field {
  std::string key;
  const std::string* value;
};

[[noreturn]] void bad_value(const Field& f, const char* expected) {
  throw Error("config_error", "'" + f.key + "' = '" + *f.value + "' is not " + expected);
}

std::uint64_t as_uint(const Field& f) {
  const std::string& s = *f.value;
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) bad_value(f, "a non-negative integer");
  return v;
}

double as_double(const Field& f) {
  const std::string& s = *f.value;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    bad_value(f, "a number");
  }
  if (used != s.size()) bad_value(f, "a number");
  return v;
}

bool as_bool(const Field& f) {
  const std::string& s = *f.value;
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  bad_value(f, "a boolean");
}

using Setter = std::function<void(ExperimentConfig&, const Field&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"experiment.seed", [](ExperimentConfig& c, const Field& f) { c.seeds = {as_uint(f)}; }},
      {"experiment.seeds",
       [](ExperimentConfig& c, const Field& f) {
         c.seeds.clear();
         for (const auto& item : split_list(*f.value)) c.seeds.push_back(as_uint({f.key, &item}));
       }},
      {"experiment.out", [](ExperimentConfig& c, const Field& f) { c.out = *f.value; }},
      {"experiment.regime", [](ExperimentConfig& c, const Field& f) { c.regime = regime_from_string(*f.value); }},
      {"experiment.baseline", [](ExperimentConfig& c, const Field& f) { c.baseline = baseline_from_string(*f.value); }},

      {"graph.source",
       [](ExperimentConfig& c, const Field& f) {
         if (*f.value == "synth")
           c.graph.kind = GraphSource::Kind::Synth;
         else if (*f.value == "files")
           c.graph.kind = GraphSource::Kind::Files;
         else
           bad_value(f, "'synth' or 'files'");
       }},
      {"graph.entities", [](ExperimentConfig& c, const Field& f) { c.graph.entities = as_uint(f); }},
      {"graph.relations", [](ExperimentConfig& c, const Field& f) { c.graph.relations = as_uint(f); }},
      {"graph.profile",
       [](ExperimentConfig& c, const Field& f) {
         SynthProfile::by_name(*f.value);
         c.graph.profile = *f.value;
       }},
      {"graph.train_csv", [](ExperimentConfig& c, const Field& f) { c.graph.train_csv = *f.value; }},
      {"graph.validation_csv", [](ExperimentConfig& c, const Field& f) { c.graph.validation_csv = *f.value; }},
      {"graph.test_csv", [](ExperimentConfig& c, const Field& f) { c.graph.test_csv = *f.value; }},

      {"sampling.patterns",
       [](ExperimentConfig& c, const Field& f) {
         c.patterns.clear();
         for (const auto& item : split_list(*f.value)) c.patterns.push_back(pattern_from_string(item));
       }},
      {"sampling.qualifier_edges",
       [](ExperimentConfig& c, const Field& f) {
         using E = QualifierCondition::Edges;
         if (*f.value == "all")
           c.sampling.qualifiers.edges = E::All;
         else if (*f.value == "any")
           c.sampling.qualifiers.edges = E::Any;
         else if (*f.value == "none")
           c.sampling.qualifiers.edges = E::None;
         else
           bad_value(f, "'all', 'any' or 'none'");
       }},
      {"sampling.min_pairs", [](ExperimentConfig& c, const Field& f) { c.sampling.qualifiers.min_pairs = as_uint(f); }},
      {"sampling.max_pairs", [](ExperimentConfig& c, const Field& f) { c.sampling.qualifiers.max_pairs = as_uint(f); }},
      {"sampling.in_degree_threshold", [](ExperimentConfig& c, const Field& f) { c.sampling.in_degree_threshold = as_uint(f); }},
      {"sampling.filter_in_degree", [](ExperimentConfig& c, const Field& f) { c.sampling.filter_in_degree = as_bool(f); }},
      {"sampling.max_queries_per_split", [](ExperimentConfig& c, const Field& f) { c.sampling.max_queries_per_split = as_uint(f); }},
      {"sampling.max_groundings", [](ExperimentConfig& c, const Field& f) { c.sampling.max_groundings = as_uint(f); }},

      {"model.dim", [](ExperimentConfig& c, const Field& f) { c.train.hp.dim = as_uint(f); }},
      {"model.layers", [](ExperimentConfig& c, const Field& f) { c.train.hp.layers = as_uint(f); }},
      {"model.relation_aggregation",
       [](ExperimentConfig& c, const Field& f) { c.train.hp.relation_aggregation = relation_aggregation_from_string(*f.value); }},
      {"model.message_weighting",
       [](ExperimentConfig& c, const Field& f) { c.train.hp.message_weighting = message_weighting_from_string(*f.value); }},
      {"model.pooling", [](ExperimentConfig& c, const Field& f) { c.train.hp.pooling = pooling_from_string(*f.value); }},
      {"model.similarity", [](ExperimentConfig& c, const Field& f) { c.train.hp.similarity = similarity_from_string(*f.value); }},
      {"model.activation", [](ExperimentConfig& c, const Field& f) { c.train.hp.activation = activation_from_string(*f.value); }},
      {"model.dropout", [](ExperimentConfig& c, const Field& f) { c.train.hp.dropout = as_double(f); }},
      {"model.use_bias", [](ExperimentConfig& c, const Field& f) { c.train.hp.use_bias = as_bool(f); }},
      {"model.depth_mode", [](ExperimentConfig& c, const Field& f) { c.train.hp.depth_mode = depth_mode_from_string(*f.value); }},

      {"train.learning_rate", [](ExperimentConfig& c, const Field& f) { c.train.learning_rate = as_double(f); }},
      {"train.batch_size", [](ExperimentConfig& c, const Field& f) { c.train.batch_size = as_uint(f); }},
      {"train.max_epochs", [](ExperimentConfig& c, const Field& f) { c.train.max_epochs = as_uint(f); }},
      {"train.patience", [](ExperimentConfig& c, const Field& f) { c.train.patience = as_uint(f); }},
      {"train.eval_every", [](ExperimentConfig& c, const Field& f) { c.train.eval_every = as_uint(f); }},
  };
  return table;
}

}  // namespace

std::string_view to_string(Regime r) { return name_of(r, kRegimes); }
std::string_view to_string(Baseline b) { return name_of(b, kBaselines); }
Regime regime_from_string(std::string_view s) { return lookup(s, kRegimes, "regime"); }
Baseline baseline_from_string(std::string_view s) { return lookup(s, kBaselines, "baseline"); }

std::vector<Pattern> regime_patterns(Regime r) {
  switch (r) {
    case Regime::All: return {kAllPatterns.begin(), kAllPatterns.end()};
    case Regime::Q2BLike: return {Pattern::P1, Pattern::P2, Pattern::P3, Pattern::I2, Pattern::I3};
    case Regime::EmQLLike: return {Pattern::P1, Pattern::I2};
    case Regime::MPQELike:
    case Regime::MPQELikeReif: return {Pattern::P1};
  }
  return {};
}

bool uses_reification(Regime r, Baseline b) { return b == Baseline::Reification || r == Regime::MPQELikeReif; }

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw Error("config_error", "seed list is empty");
  if (patterns.empty()) throw Error("config_error", "pattern list is empty");
  if (regime == Regime::MPQELikeReif && baseline != Baseline::StarQE && baseline != Baseline::Reification)
    throw Error("config_error", "regime mpqe-like+reif only combines with the starqe or reification baseline");
  if (graph.kind == GraphSource::Kind::Synth && graph.entities < 2)
    throw Error("config_error", "synthetic graph needs at least 2 entities");
  if (graph.kind == GraphSource::Kind::Synth && graph.relations < 1)
    throw Error("config_error", "synthetic graph needs at least 1 relation");
  if (graph.kind == GraphSource::Kind::Files && graph.train_csv.empty())
    throw Error("config_error", "graph source 'files' needs train_csv");
  if (sampling.qualifiers.max_pairs < sampling.qualifiers.min_pairs)
    throw Error("config_error", "max_pairs must be at least min_pairs");
  if (out.empty()) throw Error("config_error", "output directory is empty");
  train.validate();
}

ExperimentConfig ExperimentConfig::parse(std::istream& in, const std::string& source) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error("config_error", source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  ExperimentConfig cfg;
  const auto& table = setters();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw Error("config_error", source + ": key '" + section + "' outside of any section");
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      const auto it = table.find(full);
      if (it == table.end()) throw Error("config_error", source + ": unknown key '" + full + "'");
      const std::string value = trim(strip_inline_comment(node.data()));
      it->second(cfg, Field{full, &value});
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_input", "cannot open config " + path.string());
  return parse(in, path.string());
}

const std::vector<std::string>& config_schema() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

std::uint64_t sub_seed(std::uint64_t seed, std::string_view name) {
  return mix64(seed ^ fnv1a(name.data(), name.size()));
}

}  // namespace hyperq
