#include "hybrec/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "hybrec/errors.hpp"
#include "hybrec/metrics.hpp"

namespace hybrec {

namespace {

constexpr Variant kAllVariants[] = {Variant::Popularity, Variant::ItemCF,
                                    Variant::Gru,        Variant::Text,
                                    Variant::FusionNoFeat, Variant::FusionFull};

template <typename F>
void parallel_for(std::size_t n, unsigned jobs, F&& body) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

SessionList originals(const SessionList& sessions) {
  SessionList out;
  for (const auto& s : sessions) {
    if (!is_augmented_id(s.session_id)) out.push_back(s);
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double list_mrr(const CandidateList& list, const std::string& truth, std::size_t k) {
  const auto ids = list.item_ids();
  return mrr_at_k(ids, truth, k);
}

struct FoldData {
  SessionList valid;
  std::vector<CandidateList> popular;
  std::array<std::vector<CandidateList>, kRetrieverCount> lists;
  std::vector<FusedList> fused;
  std::vector<FeatureMatrix> features;  // full width, aligned with fused
};

struct Needs {
  bool popularity = false;
  std::array<bool, kRetrieverCount> retriever{};
  bool fusion = false;
  bool graph = false;
};

Needs needs_of(const std::vector<Variant>& variants) {
  Needs n;
  for (auto v : variants) {
    switch (v) {
      case Variant::Popularity: n.popularity = true; break;
      case Variant::ItemCF: n.retriever[0] = true; break;
      case Variant::Gru: n.retriever[1] = true; break;
      case Variant::Text: n.retriever[2] = true; break;
      case Variant::FusionFull:
        n.graph = true;
        [[fallthrough]];
      case Variant::FusionNoFeat:
        n.fusion = true;
        n.retriever.fill(true);
        break;
    }
  }
  return n;
}

FoldData run_fold(const SessionList& all, const Catalog& catalog,
                  const FoldAssignment& folds, const EvalConfig& config, const Needs& needs,
                  int fold) {
  FoldData out;
  const SessionList train = select_fold(all, folds, fold, false);
  for (auto& s : select_fold(all, folds, fold, true)) {
    if (s.label) out.valid.push_back(std::move(s));
  }
  const SessionList train_aug =
      config.augment ? augment_prefixes(train, config.min_prefix) : train;
  const auto popularity = popularity_counts(train, true);

  SimMatrix matrix;
  if (needs.retriever[0]) matrix = build_similarity(train, config.itemcf);
  GruParams gru;
  if (needs.retriever[1]) {
    auto cfg = config.gru;
    cfg.seed = fold_seed(cfg.seed, fold);
    gru = train_gru(train_aug, catalog, cfg).params;
  }
  TextEncoderParams text;
  ItemIndex index;
  if (needs.retriever[2]) {
    auto cfg = config.dcl;
    cfg.seed = fold_seed(cfg.seed, fold);
    text = train_dcl(train_aug, catalog, cfg).params;
    index = build_item_index(text, catalog);
  }
  GraphFeatureTable graph;
  if (needs.graph) graph = index_features(graph_features(build_graph(matrix), config.graph));

  const auto n = out.valid.size();
  for (auto& l : out.lists) l.resize(n);
  if (needs.popularity) out.popular.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = out.valid[i];
    if (needs.popularity) out.popular[i] = retrieve_popular(s, popularity, config.top_k);
    if (needs.retriever[0]) out.lists[0][i] = retrieve_itemcf(s, matrix, config.retrieve_k);
    if (needs.retriever[1]) {
      out.lists[1][i] = retrieve_gru(s, catalog, gru, config.retrieve_k, config.gru.max_len);
    }
    if (needs.retriever[2]) {
      try {
        out.lists[2][i] = retrieve_text(s, text, catalog, index, config.retrieve_k,
                                        config.dcl.session_mode,
                                        config.dcl.max_session_items);
      } catch (const ArgumentError&) {
        out.lists[2][i] = CandidateList{s.session_id, "text", {}};
      }
    }
  }
  if (needs.fusion) {
    for (std::size_t i = 0; i < n; ++i) {
      auto fused = fuse_detailed({out.lists[0][i], out.lists[1][i], out.lists[2][i]},
                                 config.fusion_floor, config.fusion_cut);
      fused.session_id = out.valid[i].session_id;
      out.features.push_back(
          assemble_list_features(fused, out.valid[i], catalog, popularity, graph));
      out.fused.push_back(std::move(fused));
    }
  }
  return out;
}

FeatureMatrix narrow(const FeatureMatrix& m, std::size_t width) {
  if (width == m.cols) return m;
  FeatureMatrix out(width);
  for (std::size_t r = 0; r < m.rows(); ++r) out.push_row(m.row(r).first(width));
  return out;
}

// Reranker for `fold` trained on the out-of-fold candidates of the others.
std::vector<double> rerank_fold(const std::vector<FoldData>& data, int fold,
                                std::size_t width, const EvalConfig& config) {
  RerankRows rows;
  rows.features.cols = width;
  for (std::size_t g = 0; g < data.size(); ++g) {
    if (static_cast<int>(g) == fold) continue;
    for (std::size_t i = 0; i < data[g].fused.size(); ++i) {
      append_rerank_rows(rows, narrow(data[g].features[i], width), data[g].fused[i],
                         *data[g].valid[i].label, config.max_negatives,
                         fold_seed(config.seed, static_cast<int>(g * 100003 + i)));
    }
  }
  auto gcfg = config.gbdt;
  gcfg.seed = fold_seed(gcfg.seed, fold);
  const auto model = train_gbdt(rows.features, rows.labels, gcfg).model;
  const auto& d = data[static_cast<std::size_t>(fold)];
  std::vector<double> scores;
  for (std::size_t i = 0; i < d.fused.size(); ++i) {
    const auto ranked = rerank(d.fused[i], narrow(d.features[i], width), model, config.top_k);
    scores.push_back(list_mrr(ranked, *d.valid[i].label, config.top_k));
  }
  return scores;
}

}  // namespace

std::uint64_t fold_seed(std::uint64_t seed, int fold) {
  // splitmix64 step so neighbouring folds get unrelated streams
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(fold + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Variant parse_variant(std::string_view name) {
  for (auto v : kAllVariants) {
    if (variant_name(v) == name) return v;
  }
  throw ArgumentError("unknown variant: " + std::string(name));
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Popularity: return "popularity";
    case Variant::ItemCF: return "itemcf";
    case Variant::Gru: return "gru";
    case Variant::Text: return "text";
    case Variant::FusionNoFeat: return "fusion-nofeat";
    case Variant::FusionFull: return "fusion-full";
  }
  return "";
}

const VariantRow* EvalReport::find(std::string_view name) const {
  for (const auto& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

std::string EvalReport::table() const {
  std::size_t width = 8, folds = 0;
  for (const auto& r : rows) {
    width = std::max(width, r.name.size());
    folds = std::max(folds, r.folds.size());
  }
  std::ostringstream os;
  char buf[32];
  os << metric << '\n';
  os << std::string(width - 7, ' ') << "variant";
  for (std::size_t f = 0; f < folds; ++f) os << "   fold" << f;
  os << "     mean\n";
  for (const auto& r : rows) {
    os << std::string(width - r.name.size(), ' ') << r.name;
    for (double v : r.folds) {
      std::snprintf(buf, sizeof buf, "  %.4f", v);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "   %.4f", r.mean);
    os << buf << '\n';
  }
  return os.str();
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["metric"] = metric;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"variant", r.name}, {"folds", r.folds}, {"mean", r.mean}});
  }
  return j;
}

CandidateList retrieve_popular(const Session& session, const PopularityCounts& popularity,
                               std::size_t top_k) {
  std::vector<std::pair<std::string, std::int64_t>> items;
  for (const auto& [id, count] : popularity) {
    if (std::find(session.items.begin(), session.items.end(), id) == session.items.end()) {
      items.emplace_back(id, count);
    }
  }
  const auto k = std::min(top_k, items.size());
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(k), items.end(),
                    [](const auto& a, const auto& b) {
                      return a.second != b.second ? a.second > b.second : a.first < b.first;
                    });
  CandidateList out;
  out.session_id = session.session_id;
  out.source = "popularity";
  for (std::size_t i = 0; i < k; ++i) {
    out.entries.push_back({items[i].first, static_cast<double>(items[i].second)});
  }
  return out;
}

VariantRow evaluate_rankings(std::string name, const SessionList& sessions,
                             const FoldAssignment& folds, const RankFn& rank, std::size_t k) {
  VariantRow row;
  row.name = std::move(name);
  std::vector<double> sum(static_cast<std::size_t>(folds.fold_count), 0.0);
  std::vector<std::size_t> count(sum.size(), 0);
  for (const auto& s : sessions) {
    if (!s.label || is_augmented_id(s.session_id)) continue;
    const auto f = static_cast<std::size_t>(folds.fold_of(s.session_id));
    const auto ranked = rank(s, static_cast<int>(f));
    sum[f] += mrr_at_k(ranked, *s.label, k);
    ++count[f];
  }
  for (std::size_t f = 0; f < sum.size(); ++f) {
    row.folds.push_back(count[f] ? sum[f] / static_cast<double>(count[f]) : 0.0);
  }
  row.mean = mean_of(row.folds);
  return row;
}

EvalReport evaluate(const SessionList& sessions, const Catalog& catalog,
                    const FoldAssignment& folds, const EvalConfig& config,
                    const std::vector<Variant>& variants) {
  if (variants.empty()) throw ArgumentError("evaluate: no variants requested");
  if (folds.fold_count < 2) throw ArgumentError("evaluate: need at least two folds");
  const SessionList base = originals(sessions);
  const auto needs = needs_of(variants);
  const auto k = static_cast<std::size_t>(folds.fold_count);

  std::vector<FoldData> data(k);
  parallel_for(k, config.jobs, [&](std::size_t f) {
    spdlog::info("evaluate: fold {} retrieval", f);
    data[f] = run_fold(base, catalog, folds, config, needs, static_cast<int>(f));
  });

  EvalReport report;
  report.metric = "MRR@" + std::to_string(config.top_k);
  auto per_list = [&](std::string_view name, auto&& pick) {
    VariantRow row;
    row.name = name;
    for (const auto& d : data) {
      double sum = 0;
      for (std::size_t i = 0; i < d.valid.size(); ++i) {
        sum += list_mrr(pick(d, i), *d.valid[i].label, config.top_k);
      }
      row.folds.push_back(d.valid.empty() ? 0.0 : sum / static_cast<double>(d.valid.size()));
    }
    row.mean = mean_of(row.folds);
    report.rows.push_back(std::move(row));
  };
  for (auto v : variants) {
    switch (v) {
      case Variant::Popularity:
        per_list(variant_name(v), [](const FoldData& d, std::size_t i) { return d.popular[i]; });
        break;
      case Variant::ItemCF:
      case Variant::Gru:
      case Variant::Text: {
        const std::size_t t = v == Variant::ItemCF ? 0 : v == Variant::Gru ? 1 : 2;
        per_list(variant_name(v), [&](const FoldData& d, std::size_t i) {
          auto list = d.lists[t][i];
          if (list.entries.size() > config.top_k) list.entries.resize(config.top_k);
          return list;
        });
        break;
      }
      case Variant::FusionNoFeat:
      case Variant::FusionFull: {
        const std::size_t width =
            v == Variant::FusionFull ? std::size_t{kFeatureCount} : kScoreFeatureCount;
        std::vector<std::vector<double>> scores(k);
        parallel_for(k, config.jobs, [&](std::size_t f) {
          spdlog::info("evaluate: fold {} rerank ({})", f, variant_name(v));
          scores[f] = rerank_fold(data, static_cast<int>(f), width, config);
        });
        VariantRow row;
        row.name = variant_name(v);
        for (const auto& s : scores) row.folds.push_back(mean_of(s));
        row.mean = mean_of(row.folds);
        report.rows.push_back(std::move(row));
        break;
      }
    }
  }
  return report;
}

EvalReport evaluate_variant(Variant variant, const SessionList& sessions,
                            const Catalog& catalog, const FoldAssignment& folds,
                            const EvalConfig& config) {
  return evaluate(sessions, catalog, folds, config, {variant});
}

EvalReport evaluate_lambda_ablation(const SessionList& sessions, const Catalog& catalog,
                                    const FoldAssignment& folds, const EvalConfig& config,
                                    const std::vector<std::array<double, 4>>& settings) {
  EvalReport report;
  report.metric = "MRR@" + std::to_string(config.top_k);
  for (const auto& lambdas : settings) {
    auto cfg = config;
    cfg.dcl.lambdas = lambdas;
    cfg.dcl.validate();
    auto sub = evaluate(sessions, catalog, folds, cfg, {Variant::Text});
    auto row = std::move(sub.rows.front());
    std::ostringstream name;
    name << "text lambda=(";
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      name << (i ? "," : "") << lambdas[i];
    }
    name << ")";
    row.name = name.str();
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace hybrec
