#include "hybrec/metrics.hpp"

#include <string_view>
#include <unordered_set>

#include "hybrec/errors.hpp"

namespace hybrec {

namespace {

std::size_t rank_of(std::span<const std::string> ranked, const std::string& truth,
                    std::size_t k) {
  if (k < 1) throw ArgumentError("k must be at least 1");
  std::unordered_set<std::string_view> seen;
  seen.reserve(ranked.size());
  std::size_t rank = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (!seen.insert(ranked[i]).second) {
      throw InvariantError("duplicate item in ranking: " + ranked[i]);
    }
    if (rank == 0 && ranked[i] == truth) rank = i + 1;
  }
  return rank != 0 && rank <= k ? rank : 0;
}

}  // namespace

double mrr_at_k(std::span<const std::string> ranked, const std::string& truth,
                std::size_t k) {
  const auto r = rank_of(ranked, truth, k);
  return r ? 1.0 / static_cast<double>(r) : 0.0;
}

double recall_at_k(std::span<const std::string> ranked, const std::string& truth,
                   std::size_t k) {
  return rank_of(ranked, truth, k) ? 1.0 : 0.0;
}

}  // namespace hybrec
