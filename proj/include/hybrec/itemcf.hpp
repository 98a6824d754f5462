#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hybrec/candidates.hpp"
#include "hybrec/data_model.hpp"

namespace hybrec {

struct PairWeightConfig {
  double dist_exponent = 2.0;
  double dire_backward = 1.0 / 3.0;
  double pos_last_boost = 1.8;
  double pop_exp_x = 0.8;
  double pop_exp_y = 0.15;
  // Append the label as the final session position before pairing.
  bool include_label = true;
  // Entries kept per row after accumulation; 0 keeps everything.
  std::size_t max_row_entries = 200;

  void validate() const;
};

using PopularityCounts = std::map<std::string, std::int64_t>;

// Occurrences across session items and labels.
PopularityCounts popularity_counts(const SessionList& sessions,
                                   bool include_labels = true);

// Pair weight components for two positions in one session.
double w_dist(std::size_t pos_x, std::size_t pos_y,
              double exponent = 2.0);
double w_dire(std::size_t pos_x, std::size_t pos_y,
              double backward = 1.0 / 3.0);
double w_pos(std::size_t pos_y, std::size_t session_len,
             double last_boost = 1.8);

// Sparse asymmetric item-to-item similarity. Items are indexed in
// lexicographic id order; each row is sorted by target index.
class SimMatrix {
 public:
  struct Entry {
    std::int32_t target;
    double score;
    bool operator==(const Entry&) const = default;
  };

  SimMatrix() = default;
  SimMatrix(std::vector<std::string> ids, std::vector<std::int64_t> popularity,
            std::vector<std::vector<Entry>> rows);

  std::size_t item_count() const { return ids_.size(); }
  std::size_t entry_count() const;
  bool empty() const { return entry_count() == 0; }

  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(std::int32_t index) const {
    return ids_[static_cast<std::size_t>(index)];
  }
  // -1 when unknown.
  std::int32_t index_of(std::string_view id) const;

  std::int64_t popularity(std::string_view id) const;
  std::int64_t popularity_at(std::int32_t index) const {
    return popularity_[static_cast<std::size_t>(index)];
  }
  PopularityCounts popularity_map() const;

  // 0 when the entry is absent.
  double sim(std::string_view x, std::string_view y) const;
  const std::vector<Entry>& row(std::int32_t index) const {
    return rows_[static_cast<std::size_t>(index)];
  }

  bool operator==(const SimMatrix&) const = default;

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::vector<std::int64_t> popularity_;
  std::vector<std::vector<Entry>> rows_;
};

SimMatrix build_similarity(const SessionList& sessions,
                           const PairWeightConfig& config = {});

// score(c) = sum_p sim(item_p, c) / (len - p); session items are excluded.
// Ties go to the more popular item, then the smaller id.
CandidateList retrieve_itemcf(const Session& session, const SimMatrix& matrix,
                              std::size_t top_k);

// Three-column TSV `x\ty\tscore` sorted by (x, y), plus a popularity TSV
// `item\tcount` sorted by item. Scores use shortest round-trip formatting.
void save_similarity(const SimMatrix& matrix,
                     const std::filesystem::path& sim_path,
                     const std::filesystem::path& popularity_path);
SimMatrix load_similarity(const std::filesystem::path& sim_path,
                          const std::filesystem::path& popularity_path);

}  // namespace hybrec
