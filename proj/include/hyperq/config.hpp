#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "hyperq/kg.hpp"
#include "hyperq/query.hpp"
#include "hyperq/sampler.hpp"
#include "hyperq/trainer.hpp"

namespace hyperq {

enum class Regime { All, Q2BLike, EmQLLike, MPQELike, MPQELikeReif };
enum class Baseline { StarQE, TripleOnly, Reification, ZeroLayers, Oracle };

std::string_view to_string(Regime r);
std::string_view to_string(Baseline b);
Regime regime_from_string(std::string_view s);
Baseline baseline_from_string(std::string_view s);

/// Training patterns of a regime.
std::vector<Pattern> regime_patterns(Regime r);
/// True when the model sees reified queries (the reification baseline or the reified regime).
bool uses_reification(Regime r, Baseline b);

struct GraphSource {
  enum class Kind { Synth, Files };
  Kind kind = Kind::Synth;
  std::size_t entities = 200;
  std::size_t relations = 20;
  std::string profile = "discriminative";
  /// Ingest inputs for Kind::Files; empty paths are skipped.
  std::filesystem::path train_csv, validation_csv, test_csv;
};

struct ExperimentConfig {
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out = "out";
  Regime regime = Regime::All;
  Baseline baseline = Baseline::StarQE;
  GraphSource graph;
  /// Shared by every pattern; `pattern` and `seed` are filled in per run.
  SamplingConfig sampling;
  std::vector<Pattern> patterns{kAllPatterns.begin(), kAllPatterns.end()};
  TrainConfig train;

  /// Rejects inconsistent combinations with config_error.
  void validate() const;

  /// INI text with sections [experiment], [graph], [sampling], [model], [train]. Unknown
  /// sections or keys and malformed values are config errors.
  static ExperimentConfig parse(std::istream& in, const std::string& source = "<config>");
  static ExperimentConfig load(const std::filesystem::path& path);
};

/// Keys accepted by `ExperimentConfig::parse`, as "section.key".
const std::vector<std::string>& config_schema();

/// Independent stream seed for a named component ("graph", "sampler", "init", "shuffle").
std::uint64_t sub_seed(std::uint64_t seed, std::string_view name);

}  // namespace hyperq
