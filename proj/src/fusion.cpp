#include "hybrec/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "hybrec/errors.hpp"
#include "hybrec/io_util.hpp"
#include "hybrec/rng.hpp"

namespace hybrec {

CandidateList FusedList::to_candidates() const {
  CandidateList out;
  out.session_id = session_id;
  out.source = "fusion";
  out.entries.reserve(entries.size());
  for (const auto& e : entries) out.entries.push_back({e.item_id, e.fused});
  return out;
}

FusedList fuse_detailed(const std::array<CandidateList, kRetrieverCount>& lists,
                        double floor, int cut) {
  if (!(floor > 0 && floor < 1)) throw ArgumentError("fuse: floor must be in (0, 1)");
  if (cut < 1) throw ArgumentError("fuse: cut must be positive");
  FusedList out;
  for (const auto& l : lists) {
    if (l.entries.empty()) continue;
    if (out.session_id.empty()) {
      out.session_id = l.session_id;
    } else if (l.session_id != out.session_id) {
      throw ArgumentError("fuse: session ids differ (" + out.session_id + " vs " +
                          l.session_id + ")");
    }
  }
  if (out.session_id.empty()) out.session_id = lists[0].session_id;

  std::map<std::string, FusedEntry> merged;
  for (std::size_t t = 0; t < kRetrieverCount; ++t) {
    const auto& entries = lists[t].entries;
    if (entries.empty()) continue;
    double lo = entries[0].score, hi = entries[0].score;
    for (const auto& c : entries) {
      lo = std::min(lo, c.score);
      hi = std::max(hi, c.score);
    }
    for (std::size_t r = 0; r < entries.size(); ++r) {
      const auto& c = entries[r];
      auto [it, inserted] = merged.try_emplace(c.item_id);
      auto& e = it->second;
      if (inserted) {
        e.item_id = c.item_id;
        e.normalized.fill(floor);
        e.rank.fill(cut + 1);
      }
      if (e.present[t]) throw ArgumentError("fuse: duplicate item " + c.item_id);
      e.present[t] = true;
      e.rank[t] = static_cast<int>(r) + 1;
      e.normalized[t] = hi > lo ? floor + (1 - floor) * (c.score - lo) / (hi - lo) : 1.0;
    }
  }
  out.entries.reserve(merged.size());
  for (auto& [id, e] : merged) {
    e.fused = e.normalized[0] * e.normalized[1] * e.normalized[2];
    out.entries.push_back(std::move(e));
  }
  // merged iterates by id, so stable sort leaves ties in id order
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const FusedEntry& a, const FusedEntry& b) { return a.fused > b.fused; });
  if (out.entries.size() > static_cast<std::size_t>(cut)) {
    out.entries.resize(static_cast<std::size_t>(cut));
  }
  return out;
}

CandidateList fuse_scores(const std::array<CandidateList, kRetrieverCount>& lists,
                          double floor, int cut) {
  return fuse_detailed(lists, floor, cut).to_candidates();
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = {
      "fused_score",       "norm_itemcf",      "norm_gru",
      "norm_text",         "rank_itemcf",      "rank_gru",
      "rank_text",         "in_itemcf",        "in_gru",
      "in_text",           "item_popularity",  "item_price",
      "has_item_price",    "session_mean_popularity", "session_mean_price",
      "has_session_price", "session_length",   "pagerank",
      "degree_centrality", "katz",             "betweenness",
      "edge_mean",         "edge_count",       "edge_max",
      "edge_std",          "in_graph",         "sort_order"};
  return names;
}

SessionContext session_context(const Session& session, const Catalog& catalog,
                               const PopularityCounts& popularity) {
  SessionContext ctx;
  ctx.length = static_cast<double>(session.items.size());
  double pop_sum = 0, price_sum = 0;
  std::size_t known = 0, priced = 0;
  for (const auto& id : session.items) {
    const auto* meta = catalog.find(id);
    if (!meta) continue;
    ++known;
    if (auto it = popularity.find(id); it != popularity.end()) {
      pop_sum += static_cast<double>(it->second);
    }
    if (meta->price) {
      ++priced;
      price_sum += *meta->price;
    }
  }
  if (known) ctx.mean_popularity = pop_sum / static_cast<double>(known);
  if (priced) {
    ctx.has_price = true;
    ctx.mean_price = price_sum / static_cast<double>(priced);
  }
  return ctx;
}

std::vector<double> assemble_features(const FusedEntry& candidate,
                                      std::size_t sort_order,
                                      const SessionContext& context,
                                      const Catalog& catalog,
                                      const PopularityCounts& popularity,
                                      const GraphFeatureTable& graph) {
  std::vector<double> f(kFeatureCount, 0.0);
  f[kFusedScore] = candidate.fused;
  for (std::size_t t = 0; t < kRetrieverCount; ++t) {
    f[kNormScore0 + t] = candidate.normalized[t];
    f[kRank0 + t] = candidate.rank[t];
    f[kPresent0 + t] = candidate.present[t] ? 1.0 : 0.0;
  }
  if (auto it = popularity.find(candidate.item_id); it != popularity.end()) {
    f[kItemPopularity] = static_cast<double>(it->second);
  }
  if (const auto* meta = catalog.find(candidate.item_id); meta && meta->price) {
    f[kItemPrice] = *meta->price;
    f[kItemPriceFlag] = 1;
  }
  f[kSessionMeanPopularity] = context.mean_popularity;
  f[kSessionMeanPrice] = context.mean_price;
  f[kSessionPriceFlag] = context.has_price ? 1.0 : 0.0;
  f[kSessionLength] = context.length;
  if (auto it = graph.find(candidate.item_id); it != graph.end()) {
    const auto& g = it->second;
    const double metrics[] = {g.pagerank, g.degree_centrality, g.katz, g.betweenness,
                              g.edge_mean, g.edge_count, g.edge_max, g.edge_std};
    std::copy(std::begin(metrics), std::end(metrics), f.begin() + kGraph0);
    f[kGraphFlag] = 1;
  }
  f[kSortOrder] = static_cast<double>(sort_order);
  for (double v : f) {
    if (!std::isfinite(v)) throw InvariantError("non-finite feature for " + candidate.item_id);
  }
  return f;
}

FeatureMatrix assemble_list_features(const FusedList& fused, const Session& session,
                                     const Catalog& catalog,
                                     const PopularityCounts& popularity,
                                     const GraphFeatureTable& graph,
                                     std::size_t width) {
  if (width == 0 || width > kFeatureCount) throw ArgumentError("invalid feature width");
  FeatureMatrix out(width);
  const auto ctx = session_context(session, catalog, popularity);
  for (std::size_t i = 0; i < fused.entries.size(); ++i) {
    auto f = assemble_features(fused.entries[i], i, ctx, catalog, popularity, graph);
    out.push_row(std::span<const double>(f.data(), width));
  }
  return out;
}

CandidateList rerank(const FusedList& fused, const FeatureMatrix& features,
                     const GbdtModel& model, std::size_t top_k) {
  if (features.rows() != fused.entries.size()) {
    throw ArgumentError("rerank: feature rows do not match candidates");
  }
  std::vector<double> pred(fused.entries.size());
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = gbdt_predict(model, features.row(i));
  std::vector<std::size_t> order(pred.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (pred[a] != pred[b]) return pred[a] > pred[b];
    const auto& ea = fused.entries[a];
    const auto& eb = fused.entries[b];
    if (ea.fused != eb.fused) return ea.fused > eb.fused;
    return ea.item_id < eb.item_id;
  });
  if (order.size() > top_k) order.resize(top_k);
  CandidateList out;
  out.session_id = fused.session_id;
  out.source = "rerank";
  for (auto i : order) out.entries.push_back({fused.entries[i].item_id, pred[i]});
  return out;
}

void append_rerank_rows(RerankRows& rows, const FeatureMatrix& list_features,
                        const FusedList& fused, const std::string& label,
                        std::size_t max_negatives, std::uint64_t seed) {
  if (rows.features.cols == 0) rows.features.cols = list_features.cols;
  if (rows.features.cols != list_features.cols) {
    throw ArgumentError("rerank rows: feature width mismatch");
  }
  std::vector<std::size_t> negatives;
  std::size_t positive = fused.entries.size();
  for (std::size_t i = 0; i < fused.entries.size(); ++i) {
    if (fused.entries[i].item_id == label) {
      positive = i;
    } else {
      negatives.push_back(i);
    }
  }
  if (positive == fused.entries.size()) return;
  if (negatives.size() > max_negatives) {
    Rng rng(seed);
    rng.shuffle(negatives.begin(), negatives.end());
    negatives.resize(max_negatives);
    std::sort(negatives.begin(), negatives.end());
  }
  rows.features.push_row(list_features.row(positive));
  rows.labels.push_back(1);
  for (auto i : negatives) {
    rows.features.push_row(list_features.row(i));
    rows.labels.push_back(0);
  }
}

void save_rerank_rows(const std::filesystem::path& path, const RerankRows& rows) {
  auto out = io::open_output(path);
  const auto& names = feature_names();
  out << "label";
  for (std::size_t c = 0; c < rows.features.cols; ++c) out << '\t' << names[c];
  out << '\n';
  for (std::size_t r = 0; r < rows.labels.size(); ++r) {
    out << rows.labels[r];
    for (double v : rows.features.row(r)) out << '\t' << io::format_double(v);
    out << '\n';
  }
}

RerankRows load_rerank_rows(const std::filesystem::path& path) {
  auto in = io::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  const auto header = io::split(line, '\t');
  if (header.empty() || header[0] != "label" || header.size() - 1 > kFeatureCount) {
    throw ParseError(path.string() + ": bad header", 1);
  }
  RerankRows rows;
  rows.features.cols = header.size() - 1;
  std::vector<double> buf(rows.features.cols);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = io::split(line, '\t');
    if (cells.size() != header.size()) throw ParseError("wrong column count", lineno);
    const auto label = io::parse_int(cells[0], lineno);
    if (label != 0 && label != 1) throw ParseError("bad label", lineno);
    for (std::size_t c = 0; c < buf.size(); ++c) buf[c] = io::parse_double(cells[c + 1], lineno);
    rows.labels.push_back(static_cast<int>(label));
    rows.features.push_row(buf);
  }
  return rows;
}

void save_fused(const std::filesystem::path& path, const std::vector<FusedList>& lists) {
  auto out = io::open_output(path);
  for (const auto& l : lists) {
    auto entries = nlohmann::ordered_json::array();
    for (const auto& e : l.entries) {
      entries.push_back({{"item_id", e.item_id},
                         {"fused", e.fused},
                         {"normalized", e.normalized},
                         {"rank", e.rank},
                         {"present", e.present}});
    }
    out << nlohmann::ordered_json{{"session_id", l.session_id}, {"entries", entries}}.dump() << '\n';
  }
}

std::vector<FusedList> load_fused(const std::filesystem::path& path) {
  auto in = io::open_input(path);
  std::vector<FusedList> lists;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      FusedList l;
      l.session_id = j.at("session_id").get<std::string>();
      for (const auto& e : j.at("entries")) {
        FusedEntry fe;
        fe.item_id = e.at("item_id").get<std::string>();
        fe.fused = e.at("fused").get<double>();
        fe.normalized = e.at("normalized").get<std::array<double, kRetrieverCount>>();
        fe.rank = e.at("rank").get<std::array<int, kRetrieverCount>>();
        fe.present = e.at("present").get<std::array<bool, kRetrieverCount>>();
        l.entries.push_back(std::move(fe));
      }
      lists.push_back(std::move(l));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), lineno);
    }
  }
  return lists;
}

}  // namespace hybrec
