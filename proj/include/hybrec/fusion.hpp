#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hybrec/candidates.hpp"
#include "hybrec/cooc_graph.hpp"
#include "hybrec/data_model.hpp"
#include "hybrec/gbdt.hpp"
#include "hybrec/itemcf.hpp"

namespace hybrec {

inline constexpr std::size_t kRetrieverCount = 3;
inline constexpr int kDefaultCut = 120;
inline constexpr double kDefaultFloor = 0.01;

// Per-candidate detail kept alongside the fused score.
struct FusedEntry {
  std::string item_id;
  double fused = 0;
  std::array<double, kRetrieverCount> normalized{};  // floor when absent
  std::array<int, kRetrieverCount> rank{};           // 1-based; cut + 1 when absent
  std::array<bool, kRetrieverCount> present{};
};

struct FusedList {
  std::string session_id;
  std::vector<FusedEntry> entries;  // descending fused score, ties by id

  CandidateList to_candidates() const;
};

// Min-max normalizes each list to [floor, 1] (a constant list maps to 1),
// fills absent items with floor, multiplies, and keeps the top `cut`.
// Throws ArgumentError on mismatched session ids or floor outside (0, 1).
FusedList fuse_detailed(const std::array<CandidateList, kRetrieverCount>& lists,
                        double floor = kDefaultFloor, int cut = kDefaultCut);

CandidateList fuse_scores(const std::array<CandidateList, kRetrieverCount>& lists,
                          double floor = kDefaultFloor, int cut = kDefaultCut);

// Fixed feature layout; `kScoreFeatureCount` leading entries are the
// score-only subset.
enum FeatureIndex : std::size_t {
  kFusedScore = 0,
  kNormScore0 = 1,
  kRank0 = 4,
  kPresent0 = 7,
  kItemPopularity = 10,
  kItemPrice = 11,
  kItemPriceFlag = 12,
  kSessionMeanPopularity = 13,
  kSessionMeanPrice = 14,
  kSessionPriceFlag = 15,
  kSessionLength = 16,
  kGraph0 = 17,
  kGraphFlag = 25,
  kSortOrder = 26,
  kFeatureCount = 27,
};
inline constexpr std::size_t kScoreFeatureCount = 10;

const std::vector<std::string>& feature_names();

// Statistics reused across every candidate of one session.
struct SessionContext {
  double mean_popularity = 0;
  double mean_price = 0;
  bool has_price = false;
  double length = 0;
};

SessionContext session_context(const Session& session, const Catalog& catalog,
                               const PopularityCounts& popularity);

std::vector<double> assemble_features(const FusedEntry& candidate,
                                      std::size_t sort_order,
                                      const SessionContext& context,
                                      const Catalog& catalog,
                                      const PopularityCounts& popularity,
                                      const GraphFeatureTable& graph);

// Feature rows for every entry of a fused list, in list order.
FeatureMatrix assemble_list_features(const FusedList& fused, const Session& session,
                                     const Catalog& catalog,
                                     const PopularityCounts& popularity,
                                     const GraphFeatureTable& graph,
                                     std::size_t width = kFeatureCount);

// Orders by descending prediction, then descending fused score, then id,
// and keeps `top_k`. `features` rows align with `fused.entries`.
CandidateList rerank(const FusedList& fused, const FeatureMatrix& features,
                     const GbdtModel& model, std::size_t top_k = 100);

// Labeled reranker rows: a fused list contributes only when its session
// label is among the candidates; negatives are capped at
// `max_negatives` per positive by seeded sampling.
struct RerankRows {
  FeatureMatrix features;
  std::vector<int> labels;
};

void append_rerank_rows(RerankRows& rows, const FeatureMatrix& list_features,
                        const FusedList& fused, const std::string& label,
                        std::size_t max_negatives, std::uint64_t seed);

void save_rerank_rows(const std::filesystem::path& path, const RerankRows& rows);
RerankRows load_rerank_rows(const std::filesystem::path& path);

void save_fused(const std::filesystem::path& path, const std::vector<FusedList>& lists);
std::vector<FusedList> load_fused(const std::filesystem::path& path);

}  // namespace hybrec
