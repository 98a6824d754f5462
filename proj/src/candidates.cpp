#include "hybrec/candidates.hpp"

#include <string>

#include "hybrec/errors.hpp"
#include "hybrec/io_util.hpp"

namespace hybrec {

std::vector<std::string> CandidateList::item_ids() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& c : entries) out.push_back(c.item_id);
  return out;
}

nlohmann::ordered_json to_json(const CandidateList& list) {
  auto entries = nlohmann::ordered_json::array();
  for (const auto& c : list.entries) {
    entries.push_back(nlohmann::ordered_json::array({c.item_id, c.score}));
  }
  return {{"session_id", list.session_id},
          {"source", list.source},
          {"entries", std::move(entries)}};
}

CandidateList candidate_list_from_json(const nlohmann::json& j) {
  CandidateList list;
  try {
    list.session_id = j.at("session_id").get<std::string>();
    list.source = j.at("source").get<std::string>();
    for (const auto& e : j.at("entries")) {
      list.entries.push_back({e.at(0).get<std::string>(), e.at(1).get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("candidate list: ") + e.what());
  }
  return list;
}

void save_candidates(const std::filesystem::path& path,
                     const std::vector<CandidateList>& lists) {
  auto out = io::open_output(path);
  for (const auto& l : lists) out << to_json(l).dump() << '\n';
}

std::vector<CandidateList> load_candidates(const std::filesystem::path& path) {
  auto in = io::open_input(path);
  std::vector<CandidateList> lists;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      lists.push_back(candidate_list_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return lists;
}

void save_predictions(const std::filesystem::path& path,
                      const std::vector<CandidateList>& lists) {
  auto out = io::open_output(path);
  for (const auto& l : lists) {
    nlohmann::ordered_json j;
    j["session_id"] = l.session_id;
    j["ranked_items"] = l.item_ids();
    out << j.dump() << '\n';
  }
}

}  // namespace hybrec
