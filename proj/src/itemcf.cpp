#include "hybrec/itemcf.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "hybrec/errors.hpp"
#include "hybrec/io_util.hpp"

namespace hybrec {

void PairWeightConfig::validate() const {
  for (double v : {dist_exponent, dire_backward, pos_last_boost, pop_exp_x,
                   pop_exp_y}) {
    if (!std::isfinite(v)) throw ArgumentError("pair weight must be finite");
  }
  if (pop_exp_x < 0 || pop_exp_x > 1 || pop_exp_y < 0 || pop_exp_y > 1) {
    throw ArgumentError("popularity exponents must lie in [0, 1]");
  }
}

PopularityCounts popularity_counts(const SessionList& sessions,
                                   bool include_labels) {
  PopularityCounts counts;
  for (const auto& s : sessions) {
    for (const auto& it : s.items) ++counts[it];
    if (include_labels && s.label) ++counts[*s.label];
  }
  return counts;
}

double w_dist(std::size_t pos_x, std::size_t pos_y, double exponent) {
  const auto d = pos_x > pos_y ? pos_x - pos_y : pos_y - pos_x;
  return 1.0 / std::pow(static_cast<double>(d) + 1.0, exponent);
}

double w_dire(std::size_t pos_x, std::size_t pos_y, double backward) {
  if (pos_x == pos_y) throw ArgumentError("w_dire needs distinct positions");
  return pos_x < pos_y ? 1.0 : backward;
}

double w_pos(std::size_t pos_y, std::size_t session_len, double last_boost) {
  if (pos_y >= session_len) throw ArgumentError("w_pos position out of range");
  return pos_y + 1 == session_len ? last_boost : 1.0;
}

SimMatrix::SimMatrix(std::vector<std::string> ids,
                     std::vector<std::int64_t> popularity,
                     std::vector<std::vector<Entry>> rows)
    : ids_(std::move(ids)),
      popularity_(std::move(popularity)),
      rows_(std::move(rows)) {
  if (popularity_.size() != ids_.size() || rows_.size() != ids_.size()) {
    throw InvariantError("SimMatrix: inconsistent table sizes");
  }
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (i > 0 && !(ids_[i - 1] < ids_[i])) {
      throw InvariantError("SimMatrix: ids must be strictly sorted");
    }
    index_.emplace(ids_[i], static_cast<std::int32_t>(i));
    for (const auto& e : rows_[i]) {
      if (!(e.score > 0) || !std::isfinite(e.score)) {
        throw InvariantError("SimMatrix: entries must be finite and positive");
      }
    }
  }
}

std::size_t SimMatrix::entry_count() const {
  std::size_t n = 0;
  for (const auto& r : rows_) n += r.size();
  return n;
}

std::int32_t SimMatrix::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? -1 : it->second;
}

std::int64_t SimMatrix::popularity(std::string_view id) const {
  const auto i = index_of(id);
  return i < 0 ? 0 : popularity_at(i);
}

PopularityCounts SimMatrix::popularity_map() const {
  PopularityCounts out;
  for (std::size_t i = 0; i < ids_.size(); ++i) out.emplace(ids_[i], popularity_[i]);
  return out;
}

double SimMatrix::sim(std::string_view x, std::string_view y) const {
  const auto xi = index_of(x);
  const auto yi = index_of(y);
  if (xi < 0 || yi < 0) return 0.0;
  const auto& r = row(xi);
  auto it = std::lower_bound(
      r.begin(), r.end(), yi,
      [](const Entry& e, std::int32_t t) { return e.target < t; });
  return it != r.end() && it->target == yi ? it->score : 0.0;
}

SimMatrix build_similarity(const SessionList& sessions,
                           const PairWeightConfig& config) {
  config.validate();
  const auto counts = popularity_counts(sessions, config.include_label);
  std::vector<std::string> ids;
  std::vector<std::int64_t> pop;
  std::unordered_map<std::string, std::int32_t> index;
  for (const auto& [id, c] : counts) {
    index.emplace(id, static_cast<std::int32_t>(ids.size()));
    ids.push_back(id);
    pop.push_back(c);
  }
  const std::size_t n = ids.size();
  std::vector<double> norm_x(n), norm_y(n);
  for (std::size_t i = 0; i < n; ++i) {
    norm_x[i] = std::pow(static_cast<double>(pop[i]), config.pop_exp_x);
    norm_y[i] = std::pow(static_cast<double>(pop[i]), config.pop_exp_y);
  }

  std::vector<std::unordered_map<std::int32_t, double>> acc(n);
  std::vector<std::int32_t> seq;
  for (const auto& s : sessions) {
    seq.clear();
    for (const auto& it : s.items) seq.push_back(index.at(it));
    if (config.include_label && s.label) seq.push_back(index.at(*s.label));
    const std::size_t len = seq.size();
    for (std::size_t p = 0; p < len; ++p) {
      const auto x = seq[p];
      for (std::size_t q = 0; q < len; ++q) {
        if (p == q || seq[q] == x) continue;
        const auto y = seq[q];
        const double w = w_dist(p, q, config.dist_exponent) *
                         w_dire(p, q, config.dire_backward) *
                         w_pos(q, len, config.pos_last_boost);
        acc[static_cast<std::size_t>(x)][y] +=
            w / (norm_x[static_cast<std::size_t>(x)] *
                 norm_y[static_cast<std::size_t>(y)]);
      }
    }
  }

  std::vector<std::vector<SimMatrix::Entry>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = rows[i];
    row.reserve(acc[i].size());
    for (const auto& [t, v] : acc[i]) row.push_back({t, v});
    if (config.max_row_entries && row.size() > config.max_row_entries) {
      std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
        return a.score != b.score ? a.score > b.score : a.target < b.target;
      });
      row.resize(config.max_row_entries);
    }
    std::sort(row.begin(), row.end(),
              [](const auto& a, const auto& b) { return a.target < b.target; });
  }
  return SimMatrix(std::move(ids), std::move(pop), std::move(rows));
}

CandidateList retrieve_itemcf(const Session& session, const SimMatrix& matrix,
                              std::size_t top_k) {
  if (top_k < 1) throw ArgumentError("top_k must be >= 1");
  CandidateList out;
  out.session_id = session.session_id;
  out.source = "itemcf";

  std::set<std::string_view> seen(session.items.begin(), session.items.end());
  std::unordered_map<std::int32_t, double> scores;
  const std::size_t len = session.items.size();
  for (std::size_t p = 0; p < len; ++p) {
    const auto x = matrix.index_of(session.items[p]);
    if (x < 0) continue;
    const double recency = 1.0 / static_cast<double>(len - p);
    for (const auto& e : matrix.row(x)) scores[e.target] += e.score * recency;
  }

  std::vector<std::pair<std::int32_t, double>> ranked;
  ranked.reserve(scores.size());
  for (const auto& [t, v] : scores) {
    if (!seen.contains(matrix.id(t))) ranked.emplace_back(t, v);
  }
  auto better = [&](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    const auto pa = matrix.popularity_at(a.first);
    const auto pb = matrix.popularity_at(b.first);
    if (pa != pb) return pa > pb;
    return a.first < b.first;  // index order is lexicographic id order
  };
  const auto k = std::min(top_k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k),
                    ranked.end(), better);
  for (std::size_t i = 0; i < k; ++i) {
    out.entries.push_back({matrix.id(ranked[i].first), ranked[i].second});
  }
  return out;
}

void save_similarity(const SimMatrix& matrix,
                     const std::filesystem::path& sim_path,
                     const std::filesystem::path& popularity_path) {
  auto out = io::open_output(sim_path);
  out << "x\ty\tscore\n";
  for (std::size_t i = 0; i < matrix.item_count(); ++i) {
    for (const auto& e : matrix.row(static_cast<std::int32_t>(i))) {
      out << matrix.ids()[i] << '\t' << matrix.id(e.target) << '\t'
          << io::format_double(e.score) << '\n';
    }
  }
  auto pop = io::open_output(popularity_path);
  pop << "item\tcount\n";
  for (std::size_t i = 0; i < matrix.item_count(); ++i) {
    pop << matrix.ids()[i] << '\t'
        << matrix.popularity_at(static_cast<std::int32_t>(i)) << '\n';
  }
}

SimMatrix load_similarity(const std::filesystem::path& sim_path,
                          const std::filesystem::path& popularity_path) {
  std::vector<std::string> ids;
  std::vector<std::int64_t> pop;
  std::unordered_map<std::string, std::int32_t> index;
  {
    auto in = io::open_input(popularity_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      if (++lineno == 1) continue;
      if (line.empty()) continue;
      auto cols = io::split(line, '\t');
      if (cols.size() != 2) throw ParseError("popularity: expected 2 columns", lineno);
      index.emplace(std::string(cols[0]), static_cast<std::int32_t>(ids.size()));
      ids.emplace_back(cols[0]);
      pop.push_back(io::parse_int(cols[1], lineno));
    }
  }
  std::vector<std::vector<SimMatrix::Entry>> rows(ids.size());
  {
    auto in = io::open_input(sim_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      if (++lineno == 1) continue;
      if (line.empty()) continue;
      auto cols = io::split(line, '\t');
      if (cols.size() != 3) throw ParseError("similarity: expected 3 columns", lineno);
      auto xi = index.find(std::string(cols[0]));
      auto yi = index.find(std::string(cols[1]));
      if (xi == index.end() || yi == index.end()) {
        throw ParseError("similarity references an item without popularity",
                         lineno);
      }
      rows[static_cast<std::size_t>(xi->second)].push_back(
          {yi->second, io::parse_double(cols[2], lineno)});
    }
  }
  for (auto& r : rows) {
    std::sort(r.begin(), r.end(),
              [](const auto& a, const auto& b) { return a.target < b.target; });
  }
  return SimMatrix(std::move(ids), std::move(pop), std::move(rows));
}

}  // namespace hybrec
