#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "hybrec/cooc_graph.hpp"
#include "hybrec/data_model.hpp"
#include "hybrec/fusion.hpp"
#include "hybrec/gbdt.hpp"
#include "hybrec/gru.hpp"
#include "hybrec/itemcf.hpp"
#include "hybrec/text_dcl.hpp"

#include "json.hpp"

namespace hybrec {

// Per-fold (or per-item) seed derived from a base seed.
std::uint64_t fold_seed(std::uint64_t seed, int fold);

enum class Variant { Popularity, ItemCF, Gru, Text, FusionNoFeat, FusionFull };

Variant parse_variant(std::string_view name);  // ArgumentError when unknown
std::string_view variant_name(Variant v);

struct EvalConfig {
  PairWeightConfig itemcf;
  GruConfig gru;
  DclConfig dcl;
  GbdtConfig gbdt;
  GraphFeatureOptions graph;
  std::size_t retrieve_k = 120;  // per-retriever shortlist
  std::size_t top_k = 100;       // ranking length and MRR cutoff
  double fusion_floor = kDefaultFloor;
  int fusion_cut = kDefaultCut;
  std::size_t max_negatives = 20;
  // Train the neural retrievers on every session prefix.
  bool augment = true;
  int min_prefix = 1;
  std::uint64_t seed = 42;
  unsigned jobs = 1;  // folds evaluated concurrently
};

struct VariantRow {
  std::string name;
  std::vector<double> folds;
  double mean = 0;
};

struct EvalReport {
  std::string metric = "MRR@100";
  std::vector<VariantRow> rows;

  const VariantRow* find(std::string_view name) const;
  std::string table() const;
  nlohmann::json to_json() const;
};

// Mean MRR@k per fold of an arbitrary ranking function applied to every
// labeled validation session. Unlabeled sessions are ignored.
using RankFn = std::function<std::vector<std::string>(const Session&, int fold)>;
VariantRow evaluate_rankings(std::string name, const SessionList& sessions,
                             const FoldAssignment& folds, const RankFn& rank,
                             std::size_t k = 100);

// Cross-validated report over the requested variants. For fold f every
// model is trained on the other folds; the reranker is fit on out-of-fold
// fused candidates of the other folds.
EvalReport evaluate(const SessionList& sessions, const Catalog& catalog,
                    const FoldAssignment& folds, const EvalConfig& config,
                    const std::vector<Variant>& variants);

EvalReport evaluate_variant(Variant variant, const SessionList& sessions,
                            const Catalog& catalog, const FoldAssignment& folds,
                            const EvalConfig& config);

// The text retriever evaluated once per lambda setting; rows are named
// after the lambdas.
EvalReport evaluate_lambda_ablation(const SessionList& sessions, const Catalog& catalog,
                                    const FoldAssignment& folds, const EvalConfig& config,
                                    const std::vector<std::array<double, 4>>& settings);

// Top-k most popular items of `popularity` not in the session; ties by id.
CandidateList retrieve_popular(const Session& session, const PopularityCounts& popularity,
                               std::size_t top_k);

}  // namespace hybrec
