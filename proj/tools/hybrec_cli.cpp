#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "hybrec/candidates.hpp"
#include "hybrec/config.hpp"
#include "hybrec/cooc_graph.hpp"
#include "hybrec/data_model.hpp"
#include "hybrec/errors.hpp"
#include "hybrec/eval.hpp"
#include "hybrec/fusion.hpp"
#include "hybrec/gbdt.hpp"
#include "hybrec/gru.hpp"
#include "hybrec/io_util.hpp"
#include "hybrec/itemcf.hpp"
#include "hybrec/synth.hpp"
#include "hybrec/text_dcl.hpp"

namespace fs = std::filesystem;
using namespace hybrec;

namespace {

enum Exit { kOk = 0, kConfig = 1, kMissing = 2, kData = 3 };

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::optional<std::string> artifacts;
  std::optional<std::string> locale;
  std::string log_level = "info";

  std::string fold = "0";
  std::string source;
  std::string query;
  std::optional<int> k;
  std::vector<std::string> variants;
  bool ablation = false;
};

// `fold` is a fold index or "all" (train on every session).
struct Pipeline {
  PipelineConfig cfg;
  std::string fold;

  bool all() const { return fold == "all"; }
  int fold_index() const {
    if (all()) return -1;
    try {
      std::size_t used = 0;
      const int f = std::stoi(fold, &used);
      if (used != fold.size() || f < 0) throw std::invalid_argument(fold);
      return f;
    } catch (const std::exception&) {
      throw ArgumentError("--fold must be a non-negative integer or 'all'");
    }
  }
  fs::path stage(std::string_view name) const { return cfg.artifacts / name; }
  fs::path fold_dir(std::string_view name, std::string_view f) const {
    return stage(name) / (f == "all" ? std::string("all") : "fold" + std::string(f));
  }
  fs::path fold_dir(std::string_view name) const { return fold_dir(name, fold); }

  fs::path ingest_sessions() const { return stage("ingest") / "sessions.csv"; }
  fs::path ingest_catalog() const { return stage("ingest") / "catalog.csv"; }
  fs::path augmented() const { return stage("augment") / "sessions.csv"; }
  fs::path folds_file() const { return stage("split") / "folds.json"; }

  Catalog catalog() const { return load_catalog(ingest_catalog()); }

  // Training sessions for the current fold: originals, or prefix-augmented
  // when `augmented_input` and augmentation is enabled.
  SessionList training(bool augmented_input) const {
    const bool aug = augmented_input && cfg.eval.augment;
    auto sessions = load_sessions(aug ? augmented() : ingest_sessions());
    if (all()) return sessions;
    const auto folds = load_folds(folds_file());
    check_fold(folds);
    return select_fold(sessions, folds, fold_index(), false);
  }

  // Labeled validation sessions of the current fold (every session for "all").
  SessionList validation() const {
    auto sessions = load_sessions(ingest_sessions());
    if (all()) return sessions;
    const auto folds = load_folds(folds_file());
    check_fold(folds);
    SessionList out;
    for (auto& s : select_fold(sessions, folds, fold_index(), true)) {
      if (s.label) out.push_back(std::move(s));
    }
    return out;
  }

  void check_fold(const FoldAssignment& folds) const {
    if (fold_index() >= folds.fold_count) {
      throw ArgumentError("--fold " + fold + " is outside the " +
                          std::to_string(folds.fold_count) + " folds");
    }
  }

  std::uint64_t seed_for(std::uint64_t base) const {
    return all() ? base : fold_seed(base, fold_index());
  }
};

void write_text(const fs::path& path, const std::string& text) {
  auto out = io::open_output(path);
  out << text;
}

int cmd_synth(const Pipeline& p) {
  const auto data = generate_synthetic(p.cfg.synth);
  save_catalog(p.cfg.catalog, data.catalog);
  save_sessions(p.cfg.sessions, data.sessions);
  spdlog::info("synth-data: {} items, {} sessions", data.catalog.size(), data.sessions.size());
  return kOk;
}

int cmd_ingest(const Pipeline& p) {
  auto catalog = load_catalog(p.cfg.catalog);
  auto sessions = load_sessions(p.cfg.sessions);
  if (!p.cfg.locale.empty()) {
    catalog = catalog.filter_locale(p.cfg.locale);
    sessions = filter_locale(sessions, p.cfg.locale);
  }
  const auto dropped = drop_unknown_items(sessions, catalog);
  if (sessions.empty()) throw InvariantError("ingest: no sessions left after filtering");
  save_catalog(p.ingest_catalog(), catalog);
  save_sessions(p.ingest_sessions(), sessions);
  spdlog::info("ingest: {} items, {} sessions, {} unknown item references dropped",
               catalog.size(), sessions.size(), dropped);
  return kOk;
}

int cmd_augment(const Pipeline& p) {
  const auto sessions = load_sessions(p.ingest_sessions());
  const auto out = augment_prefixes(sessions, p.cfg.eval.min_prefix);
  save_sessions(p.augmented(), out);
  spdlog::info("augment: {} sessions -> {}", sessions.size(), out.size());
  return kOk;
}

int cmd_split(const Pipeline& p, std::optional<int> k) {
  const auto sessions = load_sessions(p.ingest_sessions());
  const auto folds = kfold_split(sessions, k.value_or(p.cfg.folds), p.cfg.seed);
  save_folds(p.folds_file(), folds);
  spdlog::info("split: {} sessions into {} folds", folds.assignment.size(), folds.fold_count);
  return kOk;
}

int cmd_build_itemcf(const Pipeline& p) {
  const auto train = p.training(false);
  const auto matrix = build_similarity(train, p.cfg.eval.itemcf);
  const auto dir = p.fold_dir("build-itemcf");
  save_similarity(matrix, dir / "similarity.tsv", dir / "popularity.tsv");
  spdlog::info("build-itemcf: {} items, {} entries", matrix.item_count(), matrix.entry_count());
  return kOk;
}

int cmd_graph_features(const Pipeline& p) {
  const auto dir = p.fold_dir("build-itemcf");
  const auto matrix = load_similarity(dir / "similarity.tsv", dir / "popularity.tsv");
  const auto graph = build_graph(matrix);
  auto opts = p.cfg.eval.graph;
  opts.centrality.seed = p.seed_for(opts.centrality.seed);
  const auto rows = graph_features(graph, opts);
  save_graph_features(p.fold_dir("graph-features") / "features.tsv", rows);
  spdlog::info("graph-features: {} nodes, {} edges", graph.node_count(), graph.edge_count());
  return kOk;
}

int cmd_train_gru(const Pipeline& p) {
  const auto catalog = p.catalog();
  const auto train = p.training(true);
  auto cfg = p.cfg.eval.gru;
  cfg.seed = p.seed_for(cfg.seed);
  const auto result = train_gru(train, catalog, cfg);
  const auto dir = p.fold_dir("train-gru");
  save_gru_params(dir / "params.bin", result.params);
  save_loss_trace(dir / "loss.csv", result.loss_trace);
  spdlog::info("train-gru: {} sessions, final loss {}", train.size(),
               result.loss_trace.empty() ? 0.0 : result.loss_trace.back());
  return kOk;
}

int cmd_train_dcl(const Pipeline& p) {
  const auto catalog = p.catalog();
  const auto train = p.training(true);
  auto cfg = p.cfg.eval.dcl;
  cfg.seed = p.seed_for(cfg.seed);
  const auto result = train_dcl(train, catalog, cfg);
  const auto dir = p.fold_dir("train-dcl");
  save_text_encoder(dir / "encoder.bin", result.params);
  save_item_index(dir / "item_index.bin", build_item_index(result.params, catalog));
  save_loss_trace(dir / "loss.csv", result.loss_trace);
  spdlog::info("train-dcl: {} sessions, final loss {}", train.size(),
               result.loss_trace.empty() ? 0.0 : result.loss_trace.back());
  return kOk;
}

int cmd_retrieve(const Pipeline& p, const std::string& source, const std::string& query) {
  const auto k = p.cfg.eval.retrieve_k;
  const auto sessions = query.empty() ? p.validation() : load_sessions(query);
  std::vector<CandidateList> lists;
  if (source == "itemcf") {
    const auto dir = p.fold_dir("build-itemcf");
    const auto matrix = load_similarity(dir / "similarity.tsv", dir / "popularity.tsv");
    for (const auto& s : sessions) lists.push_back(retrieve_itemcf(s, matrix, k));
  } else if (source == "gru") {
    const auto catalog = p.catalog();
    const auto params = load_gru_params(p.fold_dir("train-gru") / "params.bin");
    for (const auto& s : sessions) {
      lists.push_back(retrieve_gru(s, catalog, params, k, p.cfg.eval.gru.max_len));
    }
  } else if (source == "text") {
    const auto catalog = p.catalog();
    const auto dir = p.fold_dir("train-dcl");
    const auto params = load_text_encoder(dir / "encoder.bin");
    const auto index = load_item_index(dir / "item_index.bin");
    for (const auto& s : sessions) {
      try {
        lists.push_back(retrieve_text(s, params, catalog, index, k, p.cfg.eval.dcl.session_mode,
                                      p.cfg.eval.dcl.max_session_items));
      } catch (const ArgumentError&) {
        lists.push_back(CandidateList{s.session_id, "text", {}});
      }
    }
  } else {
    throw ArgumentError("--source must be itemcf, gru or text");
  }
  save_candidates(p.fold_dir("retrieve") / (source + ".jsonl"), lists);
  spdlog::info("retrieve {}: {} sessions", source, lists.size());
  return kOk;
}

int cmd_fuse(const Pipeline& p) {
  const auto dir = p.fold_dir("retrieve");
  std::array<std::vector<CandidateList>, kRetrieverCount> inputs = {
      load_candidates(dir / "itemcf.jsonl"), load_candidates(dir / "gru.jsonl"),
      load_candidates(dir / "text.jsonl")};
  for (const auto& in : inputs) {
    if (in.size() != inputs[0].size()) {
      throw InvariantError("fuse: retriever outputs cover different sessions");
    }
  }
  std::vector<FusedList> fused;
  std::vector<CandidateList> plain;
  for (std::size_t i = 0; i < inputs[0].size(); ++i) {
    std::array<CandidateList, kRetrieverCount> lists = {inputs[0][i], inputs[1][i], inputs[2][i]};
    for (const auto& l : lists) {
      if (l.session_id != lists[0].session_id) {
        throw InvariantError("fuse: session order differs between retrievers");
      }
    }
    auto f = fuse_detailed(lists, p.cfg.eval.fusion_floor, p.cfg.eval.fusion_cut);
    f.session_id = lists[0].session_id;
    plain.push_back(f.to_candidates());
    fused.push_back(std::move(f));
  }
  const auto out = p.fold_dir("fuse");
  save_fused(out / "fused.jsonl", fused);
  save_candidates(out / "candidates.jsonl", plain);
  spdlog::info("fuse: {} sessions", fused.size());
  return kOk;
}

// Fused lists of one fold with their feature rows and sessions.
struct FoldCandidates {
  std::vector<FusedList> fused;
  std::vector<FeatureMatrix> features;
  std::vector<Session> sessions;
};

FoldCandidates fold_candidates(const Pipeline& p, const std::string& fold,
                               const Catalog& catalog, const SessionList& sessions) {
  FoldCandidates out;
  out.fused = load_fused(p.fold_dir("fuse", fold) / "fused.jsonl");
  const auto cf = p.fold_dir("build-itemcf", fold);
  const auto popularity =
      load_similarity(cf / "similarity.tsv", cf / "popularity.tsv").popularity_map();
  GraphFeatureTable graph;
  if (p.cfg.rerank_full_features) {
    graph = index_features(load_graph_features(p.fold_dir("graph-features", fold) / "features.tsv"));
  }
  std::unordered_map<std::string, const Session*> by_id;
  for (const auto& s : sessions) by_id.emplace(s.session_id, &s);
  const auto width = p.cfg.rerank_full_features ? std::size_t{kFeatureCount} : kScoreFeatureCount;
  for (const auto& f : out.fused) {
    auto it = by_id.find(f.session_id);
    if (it == by_id.end()) throw InvariantError("fused list for unknown session " + f.session_id);
    out.features.push_back(
        assemble_list_features(f, *it->second, catalog, popularity, graph, width));
    out.sessions.push_back(*it->second);
  }
  return out;
}

int cmd_train_reranker(const Pipeline& p) {
  const auto catalog = p.catalog();
  const auto sessions = load_sessions(p.ingest_sessions());
  std::vector<std::string> sources;
  if (p.all()) {
    sources.push_back("all");
  } else {
    const auto folds = load_folds(p.folds_file());
    p.check_fold(folds);
    for (int g = 0; g < folds.fold_count; ++g) {
      if (g != p.fold_index()) sources.push_back(std::to_string(g));
    }
  }
  RerankRows rows;
  rows.features.cols = p.cfg.rerank_full_features ? std::size_t{kFeatureCount} : kScoreFeatureCount;
  for (const auto& src : sources) {
    const auto data = fold_candidates(p, src, catalog, sessions);
    const int g = src == "all" ? 0 : std::stoi(src);
    for (std::size_t i = 0; i < data.fused.size(); ++i) {
      if (!data.sessions[i].label) continue;
      append_rerank_rows(rows, data.features[i], data.fused[i], *data.sessions[i].label,
                         p.cfg.eval.max_negatives,
                         fold_seed(p.cfg.eval.seed, static_cast<int>(g * 100003 + static_cast<int>(i))));
    }
  }
  auto cfg = p.cfg.eval.gbdt;
  cfg.seed = p.seed_for(cfg.seed);
  const auto result = train_gbdt(rows.features, rows.labels, cfg);
  const auto dir = p.fold_dir("train-reranker");
  save_rerank_rows(dir / "rows.tsv", rows);
  save_gbdt(dir / "model.json", result.model);
  save_loss_trace(dir / "loss.csv", result.loss_trace);
  spdlog::info("train-reranker: {} rows, final loss {}", rows.labels.size(),
               result.loss_trace.back());
  return kOk;
}

int cmd_rerank(const Pipeline& p) {
  const auto model = load_gbdt(p.fold_dir("train-reranker") / "model.json");
  const auto catalog = p.catalog();
  const auto sessions = load_sessions(p.ingest_sessions());
  const auto data = fold_candidates(p, p.fold, catalog, sessions);
  std::vector<CandidateList> ranked;
  for (std::size_t i = 0; i < data.fused.size(); ++i) {
    ranked.push_back(rerank(data.fused[i], data.features[i], model, p.cfg.eval.top_k));
  }
  const auto dir = p.fold_dir("rerank");
  save_candidates(dir / "ranked.jsonl", ranked);
  save_predictions(dir / "predictions.jsonl", ranked);
  spdlog::info("rerank: {} sessions", ranked.size());
  return kOk;
}

int cmd_evaluate(const Pipeline& p, const std::vector<std::string>& names, bool ablation) {
  const auto catalog = p.catalog();
  const auto sessions = load_sessions(p.ingest_sessions());
  const auto folds = load_folds(p.folds_file());
  std::vector<Variant> variants;
  for (const auto& n : names) variants.push_back(parse_variant(n));
  if (variants.empty() && !ablation) {
    variants = {Variant::Popularity, Variant::ItemCF,       Variant::Gru,
                Variant::Text,       Variant::FusionNoFeat, Variant::FusionFull};
  }
  nlohmann::json out;
  if (!variants.empty()) {
    const auto report = evaluate(sessions, catalog, folds, p.cfg.eval, variants);
    std::cout << report.table();
    out["report"] = report.to_json();
  }
  if (ablation) {
    const auto report =
        evaluate_lambda_ablation(sessions, catalog, folds, p.cfg.eval, p.cfg.ablation_lambdas);
    std::cout << report.table();
    out["ablation"] = report.to_json();
  }
  write_text(p.stage("evaluate") / "report.json", out.dump(2) + "\n");
  return kOk;
}

PipelineConfig load_config(const Options& o) {
  auto doc = o.config_path.empty() ? ConfigDocument{} : ConfigDocument::load(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value: " + kv);
    doc.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) doc.set("seed", std::to_string(*o.seed));
  if (o.jobs) doc.set("eval.jobs", std::to_string(*o.jobs));
  if (o.artifacts) doc.set("paths.artifacts", *o.artifacts);
  if (o.locale) doc.set("locale", *o.locale);
  return PipelineConfig::from_document(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid session recommender pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("-c,--config", o.config_path, "Configuration file");
  app.add_option("--set", o.overrides, "Override a config key (section.key=value)");
  app.add_option("--seed", o.seed, "Global seed");
  app.add_option("-j,--jobs", o.jobs, "Worker threads for parallel stages");
  app.add_option("--artifacts", o.artifacts, "Artifacts directory");
  app.add_option("--locale", o.locale, "Locale filter (empty keeps all)");
  app.add_option("--log-level", o.log_level, "trace, debug, info, warn, error or off");

  auto fold_opt = [&](CLI::App* sub) {
    sub->add_option("--fold", o.fold, "Validation fold index, or 'all'");
  };
  auto* synth = app.add_subcommand("synth-data", "Write a synthetic catalog and sessions");
  auto* ingest = app.add_subcommand("ingest", "Validate and filter the raw inputs");
  auto* augment = app.add_subcommand("augment", "Expand sessions into labeled prefixes");
  auto* split = app.add_subcommand("split", "Assign sessions to folds");
  split->add_option("-k,--folds", o.k, "Fold count");
  auto* itemcf = app.add_subcommand("build-itemcf", "Build the item similarity matrix");
  auto* graph = app.add_subcommand("graph-features", "Centrality features of the similarity graph");
  auto* gru = app.add_subcommand("train-gru", "Train the sequence retriever");
  auto* dcl = app.add_subcommand("train-dcl", "Train the text retriever");
  auto* retrieve = app.add_subcommand("retrieve", "Produce candidate lists");
  retrieve->add_option("--source", o.source, "itemcf, gru or text")->required();
  retrieve->add_option("--query", o.query, "Sessions CSV to score instead of the fold");
  auto* fuse = app.add_subcommand("fuse", "Combine the three candidate lists");
  auto* train_rr = app.add_subcommand("train-reranker", "Fit the reranker on out-of-fold candidates");
  auto* rr = app.add_subcommand("rerank", "Rank fused candidates and write predictions");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Cross-validated MRR report");
  evaluate_cmd->add_option("--variants", o.variants,
                           "popularity, itemcf, gru, text, fusion-nofeat, fusion-full");
  evaluate_cmd->add_flag("--ablation", o.ablation, "Also compare the two lambda settings");
  for (auto* sub : {itemcf, graph, gru, dcl, retrieve, fuse, train_rr, rr}) fold_opt(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  auto logger = spdlog::stderr_color_mt("hybrec");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(o.log_level));

  try {
    Pipeline p{load_config(o), o.fold};
    if (*synth) return cmd_synth(p);
    if (*ingest) return cmd_ingest(p);
    if (*augment) return cmd_augment(p);
    if (*split) return cmd_split(p, o.k);
    if (*itemcf) return cmd_build_itemcf(p);
    if (*graph) return cmd_graph_features(p);
    if (*gru) return cmd_train_gru(p);
    if (*dcl) return cmd_train_dcl(p);
    if (*retrieve) return cmd_retrieve(p, o.source, o.query);
    if (*fuse) return cmd_fuse(p);
    if (*train_rr) return cmd_train_reranker(p);
    if (*rr) return cmd_rerank(p);
    if (*evaluate_cmd) return cmd_evaluate(p, o.variants, o.ablation);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kConfig;
  } catch (const ArgumentError& e) {
    spdlog::error("{}", e.what());
    return kConfig;
  } catch (const MissingArtifactError& e) {
    spdlog::error("missing dependency: {}", e.path());
    return kMissing;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kData;
  }
  return kOk;
}
