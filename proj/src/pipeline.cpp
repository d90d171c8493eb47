#include "hyperq/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "hyperq/error.hpp"

namespace hyperq {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr Split kEvalSplits[] = {Split::Validation, Split::Test};

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_input", "not found: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("parse_error", path.string() + ": " + e.what());
  }
}

KnowledgeGraph load_graph(const SeedLayout& layout) {
  if (!fs::exists(layout.graph()))
    throw Error("missing_input", "no graph at " + layout.graph().string() + "; run synth or ingest first");
  return load_graph_dir(layout.graph());
}

ordered_json summary(const char* command, std::uint64_t seed) { return {{"command", command}, {"seed", seed}}; }

ordered_json bundle_counts(const DatasetBundle& b) {
  ordered_json j;
  for (Split s : kAllSplits) j[std::string(to_string(s))] = b.split(s).size();
  return j;
}

/// Bundles of one seed in the representation the model of (regime, baseline) consumes.
struct BundleSource {
  KnowledgeGraph graph;
  std::optional<ReifiedVocabulary> reified;
  fs::path dir;

  VocabView vocab() const { return reified ? reified->view() : VocabView::of(graph); }
  DatasetBundle read(Pattern p) const { return read_bundle(dir, p, vocab()); }
};

BundleSource open_bundles(const SeedLayout& layout, bool reified) {
  BundleSource src{load_graph(layout), std::nullopt, reified ? layout.reified_data() : layout.data()};
  if (reified) {
    src.reified = reified_vocabulary(src.graph);
    if (!fs::exists(src.dir)) throw Error("missing_input", "no reified bundles at " + src.dir.string() + "; run reify first");
  } else if (!fs::exists(src.dir)) {
    throw Error("missing_input", "no bundles at " + src.dir.string() + "; run sample first");
  }
  return src;
}

TrainConfig seeded_train_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainConfig tc = cfg.train;
  tc.hp = baseline_hyperparams(tc.hp, cfg.baseline);
  tc.init_seed = sub_seed(seed, "init");
  tc.shuffle_seed = sub_seed(seed, "shuffle");
  tc.threads = thread_budget();
  return tc;
}

ordered_json hyperparams_json(const HyperParams& hp) {
  return {{"dim", hp.dim},
          {"layers", hp.layers},
          {"relation_aggregation", to_string(hp.relation_aggregation)},
          {"message_weighting", to_string(hp.message_weighting)},
          {"pooling", to_string(hp.pooling)},
          {"similarity", to_string(hp.similarity)},
          {"activation", to_string(hp.activation)},
          {"dropout", hp.dropout},
          {"use_bias", hp.use_bias},
          {"depth_mode", to_string(hp.depth_mode)}};
}

void require_trained_baseline(Baseline b) {
  if (b == Baseline::Oracle) throw Error("config_error", "the oracle baseline has no model; use the oracle subcommand");
}

}  // namespace

SeedLayout seed_layout(const ExperimentConfig& cfg, std::uint64_t seed) {
  return {cfg.out / ("seed-" + std::to_string(seed))};
}

fs::path report_dir(const ExperimentConfig& cfg) { return cfg.out / "report"; }

std::string run_name(Baseline b, Regime r) {
  if (b == Baseline::Oracle) return "oracle";
  return std::string(to_string(b)) + "-" + std::string(to_string(r));
}

std::vector<DatasetQuery> baseline_queries(std::span<const DatasetQuery> queries, Baseline b) {
  std::vector<DatasetQuery> out(queries.begin(), queries.end());
  if (b == Baseline::TripleOnly)
    for (auto& q : out) q.query = strip_qualifiers(q.query);
  return out;
}

HyperParams baseline_hyperparams(HyperParams hp, Baseline b) {
  if (b == Baseline::ZeroLayers) {
    hp.layers = 0;
    hp.pooling = Pooling::Sum;
  }
  return hp;
}

ModelShape model_shape(const KnowledgeGraph& g, bool reified) {
  if (!reified) return {g.num_entities(), g.num_relations(), g.num_entities()};
  const ReificationScheme scheme{g.num_entities(), g.num_relations()};
  return {scheme.query_entities(), scheme.reified_relations(), g.num_entities()};
}

ReifiedVocabulary reified_vocabulary(const KnowledgeGraph& g) {
  ReifiedVocabulary v;
  for (const auto& l : g.entities().labels()) v.entities.intern(l);
  for (const auto& l : g.relations().labels()) v.relations.intern(l);
  extend_vocabulary_for_reification(v.entities, v.relations);
  return v;
}

ordered_json run_synth(const ExperimentConfig& cfg, std::uint64_t seed) {
  const SeedLayout layout = seed_layout(cfg, seed);
  const KnowledgeGraph g = synth_graph(sub_seed(seed, "graph"), cfg.graph.entities, cfg.graph.relations,
                                       SynthProfile::by_name(cfg.graph.profile));
  save_graph_dir(g, layout.graph());
  write_text(layout.graph() / "stats.json", stats_json(g) + "\n");
  ordered_json j = summary("synth", seed);
  j["graph"] = layout.graph().string();
  j["statements"] = g.num_statements();
  return j;
}

ordered_json run_ingest(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.graph.kind != GraphSource::Kind::Files) throw Error("config_error", "ingest needs graph.source = files");
  const SeedLayout layout = seed_layout(cfg, seed);
  KnowledgeGraph g;
  ordered_json counts;
  const std::pair<Split, const fs::path*> inputs[] = {
      {Split::Train, &cfg.graph.train_csv}, {Split::Validation, &cfg.graph.validation_csv}, {Split::Test, &cfg.graph.test_csv}};
  for (const auto& [split, path] : inputs) {
    if (path->empty()) continue;
    counts[std::string(to_string(split))] = ingest_csv(g, *path, split);
  }
  save_graph_dir(g, layout.graph());
  write_text(layout.graph() / "stats.json", stats_json(g) + "\n");
  ordered_json j = summary("ingest", seed);
  j["graph"] = layout.graph().string();
  j["ingested"] = std::move(counts);
  return j;
}

ordered_json run_sample(const ExperimentConfig& cfg, std::uint64_t seed) {
  const SeedLayout layout = seed_layout(cfg, seed);
  const KnowledgeGraph g = load_graph(layout);
  ordered_json patterns = ordered_json::object();
  for (Pattern p : cfg.patterns) {
    SamplingConfig sc = cfg.sampling;
    sc.pattern = p;
    sc.seed = sub_seed(seed, "sampler");
    const DatasetBundle b = generate(g, sc);
    write_bundle(b, layout.data(), VocabView::of(g));
    patterns[std::string(to_string(p))] = {
        {"queries", bundle_counts(b)}, {"groundings", b.groundings}, {"truncated", b.truncated}, {"warnings", b.warnings}};
  }
  write_json(layout.data() / "summary.json", patterns);
  ordered_json j = summary("sample", seed);
  j["data"] = layout.data().string();
  j["patterns"] = std::move(patterns);
  return j;
}

ordered_json run_reify(const ExperimentConfig& cfg, std::uint64_t seed) {
  const SeedLayout layout = seed_layout(cfg, seed);
  const BundleSource src = open_bundles(layout, false);
  const KnowledgeGraph rg = reify(src.graph);
  save_graph_dir(rg, layout.reified() / "graph");
  const ReifiedVocabulary vocab = reified_vocabulary(src.graph);
  const ReificationScheme scheme{src.graph.num_entities(), src.graph.num_relations()};
  ordered_json patterns = ordered_json::object();
  for (Pattern p : cfg.patterns) {
    DatasetBundle b = src.read(p);
    for (auto& split : b.splits)
      for (auto& q : split) q.query = reify(q.query, scheme);
    write_bundle(b, layout.reified_data(), vocab.view());
    patterns[std::string(to_string(p))] = bundle_counts(b);
  }
  ordered_json j = summary("reify", seed);
  j["graph"] = (layout.reified() / "graph").string();
  j["statements"] = rg.num_statements();
  j["patterns"] = std::move(patterns);
  return j;
}

ordered_json run_train(const ExperimentConfig& cfg, std::uint64_t seed) {
  require_trained_baseline(cfg.baseline);
  const SeedLayout layout = seed_layout(cfg, seed);
  const bool reified = uses_reification(cfg.regime, cfg.baseline);
  const BundleSource src = open_bundles(layout, reified);
  const TrainConfig tc = seeded_train_config(cfg, seed);

  std::vector<DatasetQuery> train_queries, validation_queries;
  ordered_json used = ordered_json::object();
  for (Pattern p : regime_patterns(cfg.regime)) {
    const DatasetBundle b = src.read(p);
    auto tr = baseline_queries(b.split(Split::Train), cfg.baseline);
    auto va = baseline_queries(b.split(Split::Validation), cfg.baseline);
    used[std::string(to_string(p))] = {{"train", tr.size()}, {"validation", va.size()}};
    train_queries.insert(train_queries.end(), tr.begin(), tr.end());
    validation_queries.insert(validation_queries.end(), va.begin(), va.end());
  }

  const ModelShape shape = model_shape(src.graph, reified);
  const TrainResult result = train(shape, train_queries, validation_queries, tc);
  const fs::path dir = layout.run(run_name(cfg.baseline, cfg.regime));
  fs::create_directories(dir);
  ordered_json report = result.report.to_json();
  report["queries"] = used;
  write_json(dir / "train_report.json", report);
  write_json(dir / "run_config.json", {{"baseline", to_string(cfg.baseline)},
                                       {"regime", to_string(cfg.regime)},
                                       {"reified", reified},
                                       {"hyperparameters", hyperparams_json(tc.hp)},
                                       {"shape", {{"entities", shape.entities}, {"relations", shape.relations}, {"candidates", shape.candidates}}}});
  if (result.report.diverged)
    throw Error("diverged", "training diverged (non-finite loss) after " + std::to_string(result.report.steps) + " steps");
  save_parameters(result.params, dir / "params.json");

  ordered_json j = summary("train", seed);
  j["run"] = dir.string();
  j["epochs"] = result.report.epoch_loss.size();
  j["best_epoch"] = result.report.best_epoch;
  j["best_validation_mrr"] = result.report.best_validation_mrr;
  return j;
}

ordered_json run_oracle(const ExperimentConfig& cfg, std::uint64_t seed) {
  const SeedLayout layout = seed_layout(cfg, seed);
  const BundleSource src = open_bundles(layout, false);
  MetricReport report;
  for (Pattern p : cfg.patterns) {
    const DatasetBundle b = src.read(p);
    for (Split s : kEvalSplits)
      report.rows.push_back({std::string(to_string(p)), std::string(to_string(s)), oracle_expected_metrics(src.graph, b.split(s))});
  }
  const fs::path dir = layout.run(run_name(Baseline::Oracle, cfg.regime));
  write_json(dir / "metrics.json", report.to_json());
  ordered_json j = summary("oracle", seed);
  j["run"] = dir.string();
  j["metrics"] = report.to_json();
  return j;
}

ordered_json run_eval(const ExperimentConfig& cfg, std::uint64_t seed, bool faithfulness) {
  if (cfg.baseline == Baseline::Oracle) {
    if (faithfulness) throw Error("config_error", "faithfulness needs a trained model");
    ordered_json j = run_oracle(cfg, seed);
    j["command"] = "eval";
    return j;
  }
  const SeedLayout layout = seed_layout(cfg, seed);
  const bool reified = uses_reification(cfg.regime, cfg.baseline);
  const BundleSource src = open_bundles(layout, reified);
  const fs::path dir = layout.run(run_name(cfg.baseline, cfg.regime));
  const HyperParams hp = baseline_hyperparams(cfg.train.hp, cfg.baseline);
  if (!fs::exists(dir / "params.json")) throw Error("missing_input", "no trained model at " + dir.string() + "; run train first");
  const Parameters expected = init_parameters(model_shape(src.graph, reified), hp, 0);
  const Parameters params = load_parameters(dir / "params.json", &expected);
  const std::size_t threads = thread_budget();

  MetricReport metrics, faithful;
  for (Pattern p : cfg.patterns) {
    const DatasetBundle b = src.read(p);
    const std::string name(to_string(p));
    for (Split s : kEvalSplits)
      metrics.rows.push_back({name, std::string(to_string(s)), evaluate_model(params, hp, baseline_queries(b.split(s), cfg.baseline), threads)});
    if (faithfulness)
      faithful.rows.push_back({name, std::string(to_string(Split::Train)),
                               evaluate_model(params, hp, baseline_queries(b.split(Split::Train), cfg.baseline), threads)});
  }
  write_json(dir / "metrics.json", metrics.to_json());
  ordered_json j = summary("eval", seed);
  j["run"] = dir.string();
  j["metrics"] = metrics.to_json();
  if (faithfulness) {
    write_json(dir / "faithfulness.json", faithful.to_json());
    j["faithfulness"] = faithful.to_json();
  }
  return j;
}

ordered_json run_answer(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& query_file) {
  const KnowledgeGraph g = load_graph(seed_layout(cfg, seed));
  const QueryGraph q = query_from_json(read_json(query_file), VocabView::of(g));
  const Validity v = validate(q);
  if (!v.usable()) throw Error("invalid_query", "query is not answerable: " + v.reason);
  const auto labels = [&](const AnswerSet& a) {
    std::vector<std::string> out;
    for (EntityId e : a) out.push_back(g.entities().label(e));
    return out;
  };
  ordered_json j = summary("answer", seed);
  j["query"] = to_json(q, VocabView::of(g));
  j["answers"] = labels(answer_set(g, q));
  j["answers_ignoring_qualifiers"] = labels(answer_set_ignoring_qualifiers(g, q));
  return j;
}

ordered_json run_report(const ExperimentConfig& cfg) {
  const fs::path first_runs = seed_layout(cfg, cfg.seeds.front()).root / "runs";
  std::vector<std::string> names;
  if (fs::exists(first_runs))
    for (const auto& entry : fs::directory_iterator(first_runs))
      if (fs::exists(entry.path() / "metrics.json")) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw Error("missing_input", "no evaluated runs under " + first_runs.string() + "; run eval first");

  ordered_json written = ordered_json::array();
  for (const auto& name : names) {
    std::vector<MetricReport> reports;
    for (std::uint64_t seed : cfg.seeds)
      reports.push_back(MetricReport::from_json(read_json(seed_layout(cfg, seed).run(name) / "metrics.json")));
    const MergedReport merged = merge_reports(reports);
    const fs::path base = report_dir(cfg) / name;
    write_json(fs::path(base.string() + ".json"), merged.to_json());
    write_text(fs::path(base.string() + ".txt"),
               name + " (test)\n" + merged.to_table("test") + "\n" + name + " (validation)\n" + merged.to_table("validation"));
    written.push_back(name);
  }
  return {{"command", "report"}, {"seeds", cfg.seeds}, {"runs", written}, {"report", report_dir(cfg).string()}};
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"ingest", "synth", "sample", "reify", "train", "eval", "oracle", "answer", "report"};
  return names;
}

ordered_json run_command(const std::string& command, const ExperimentConfig& cfg, const CommandOptions& opts) {
  cfg.validate();
  if (command == "report") return run_report(cfg);
  if (command == "answer" && !opts.query_file) throw Error("config_error", "answer needs --query");
  ordered_json results = ordered_json::array();
  for (std::uint64_t seed : cfg.seeds) {
    if (command == "ingest")
      results.push_back(run_ingest(cfg, seed));
    else if (command == "synth")
      results.push_back(run_synth(cfg, seed));
    else if (command == "sample")
      results.push_back(run_sample(cfg, seed));
    else if (command == "reify")
      results.push_back(run_reify(cfg, seed));
    else if (command == "train")
      results.push_back(run_train(cfg, seed));
    else if (command == "eval")
      results.push_back(run_eval(cfg, seed, opts.faithfulness));
    else if (command == "oracle")
      results.push_back(run_oracle(cfg, seed));
    else if (command == "answer")
      results.push_back(run_answer(cfg, seed, *opts.query_file));
    else
      throw Error("config_error", "unknown subcommand '" + command + "'");
  }
  return {{"command", command}, {"results", std::move(results)}};
}

}  // namespace hyperq
