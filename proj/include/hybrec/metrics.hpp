#pragma once

#include <span>
#include <string>

namespace hybrec {

// 1/rank when `truth` sits at 1-based rank <= k, else 0. Throws
// InvariantError on duplicate ranked items and ArgumentError when k < 1.
double mrr_at_k(std::span<const std::string> ranked, const std::string& truth,
                std::size_t k = 100);

// 1 when `truth` is within the top k, else 0.
double recall_at_k(std::span<const std::string> ranked, const std::string& truth,
                   std::size_t k = 100);

}  // namespace hybrec
