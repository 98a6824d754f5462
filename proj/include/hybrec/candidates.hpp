#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace hybrec {

struct Candidate {
  std::string item_id;
  double score = 0.0;

  bool operator==(const Candidate&) const = default;
};

// Scored shortlist for one session, sorted by descending score.
struct CandidateList {
  std::string session_id;
  std::string source;
  std::vector<Candidate> entries;

  std::vector<std::string> item_ids() const;
  bool operator==(const CandidateList&) const = default;
};

nlohmann::ordered_json to_json(const CandidateList& list);
CandidateList candidate_list_from_json(const nlohmann::json& j);

void save_candidates(const std::filesystem::path& path,
                     const std::vector<CandidateList>& lists);
std::vector<CandidateList> load_candidates(const std::filesystem::path& path);

// Final predictions: {"session_id": ..., "ranked_items": [...]} per line.
void save_predictions(const std::filesystem::path& path,
                      const std::vector<CandidateList>& lists);

}  // namespace hybrec
