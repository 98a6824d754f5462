#include "hybrec/data_model.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "hybrec/csv.hpp"
#include "hybrec/errors.hpp"
#include "hybrec/io_util.hpp"
#include "hybrec/rng.hpp"

namespace hybrec {

namespace {

constexpr std::array<const char*, 11> kCatalogHeader = {
    "item_id", "locale", "title",    "price",  "brand", "color",
    "size",    "model",  "material", "author", "desc"};

constexpr std::array<const char*, 4> kSessionsHeader = {"session_id", "locale",
                                                        "items", "label"};

std::string key_of(std::string_view id, std::string_view locale) {
  std::string key(locale);
  key.push_back('\x1f');
  key.append(id);
  return key;
}

std::optional<std::string> opt_text(std::string s) {
  if (s.empty()) return std::nullopt;
  return s;
}

template <std::size_t N>
void check_header(const csv::Record& rec, const std::array<const char*, N>& h,
                  std::size_t min_fields) {
  if (rec.fields.size() < min_fields || rec.fields.size() > N) {
    throw ParseError("unexpected header", rec.line);
  }
  for (std::size_t i = 0; i < rec.fields.size(); ++i) {
    if (rec.fields[i] != h[i]) {
      throw ParseError("unexpected header column '" + rec.fields[i] + "'",
                       rec.line);
    }
  }
}

std::vector<std::string> split_items(std::string_view field) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < field.size()) {
    while (i < field.size() && field[i] == ' ') ++i;
    std::size_t j = i;
    while (j < field.size() && field[j] != ' ') ++j;
    if (j > i) out.emplace_back(field.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

Catalog::Catalog(std::vector<ItemMeta> items) : items_(std::move(items)) {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& it = items_[i];
    if (it.item_id.empty()) throw InvariantError("empty item_id in catalog");
    if (it.price && *it.price < 0) {
      throw InvariantError("negative price for item " + it.item_id);
    }
    if (!by_key_.emplace(key_of(it.item_id, it.locale), i).second) {
      throw DuplicateKeyError("duplicate catalog key (" + it.item_id + ", " +
                              it.locale + ")");
    }
    by_id_.emplace(it.item_id, i);
  }
}

const ItemMeta* Catalog::find(std::string_view item_id) const {
  auto it = by_id_.find(std::string(item_id));
  return it == by_id_.end() ? nullptr : &items_[it->second];
}

const ItemMeta* Catalog::find(std::string_view item_id,
                              std::string_view locale) const {
  auto it = by_key_.find(key_of(item_id, locale));
  return it == by_key_.end() ? nullptr : &items_[it->second];
}

Catalog Catalog::filter_locale(std::string_view locale) const {
  std::vector<ItemMeta> out;
  for (const auto& it : items_) {
    if (it.locale == locale) out.push_back(it);
  }
  return Catalog(std::move(out));
}

int FoldAssignment::fold_of(std::string_view session_id) const {
  auto it = assignment.find(std::string(parent_session_id(session_id)));
  if (it == assignment.end()) {
    throw LookupError("session not in fold assignment: " +
                      std::string(session_id));
  }
  return it->second;
}

std::vector<std::size_t> FoldAssignment::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(fold_count), 0);
  for (const auto& [id, f] : assignment) ++sizes[static_cast<std::size_t>(f)];
  return sizes;
}

nlohmann::json FoldAssignment::to_json() const {
  nlohmann::json j;
  j["fold_count"] = fold_count;
  j["assignment"] = nlohmann::json::object();
  for (const auto& [id, f] : assignment) j["assignment"][id] = f;
  return j;
}

FoldAssignment FoldAssignment::from_json(const nlohmann::json& j) {
  FoldAssignment fa;
  try {
    fa.fold_count = j.at("fold_count").get<int>();
    for (const auto& [id, f] : j.at("assignment").items()) {
      const int fold = f.get<int>();
      if (fold < 0 || fold >= fa.fold_count) {
        throw ParseError("fold index out of range for session " + id);
      }
      fa.assignment.emplace(id, fold);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("fold assignment: ") + e.what());
  }
  if (fa.fold_count < 2) throw ParseError("fold_count must be >= 2");
  return fa;
}

Catalog load_catalog(const std::filesystem::path& path) {
  auto in = io::open_input(path);
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header) throw ParseError("empty catalog file");
  check_header(*header, kCatalogHeader, kCatalogHeader.size());

  std::vector<ItemMeta> items;
  std::unordered_map<std::string, std::size_t> seen;
  while (auto rec = reader.next()) {
    if (rec->fields.size() == 1 && rec->fields[0].empty()) continue;
    if (rec->fields.size() != kCatalogHeader.size()) {
      throw ParseError("expected " + std::to_string(kCatalogHeader.size()) +
                           " fields, got " + std::to_string(rec->fields.size()),
                       rec->line);
    }
    auto& f = rec->fields;
    ItemMeta m;
    m.item_id = std::move(f[0]);
    m.locale = std::move(f[1]);
    m.title = std::move(f[2]);
    if (m.item_id.empty()) throw ParseError("empty item_id", rec->line);
    if (!f[3].empty()) {
      m.price = io::parse_double(f[3], rec->line);
      if (*m.price < 0 || !std::isfinite(*m.price)) {
        throw ParseError("price must be a non-negative number", rec->line);
      }
    }
    m.brand = opt_text(std::move(f[4]));
    m.color = opt_text(std::move(f[5]));
    m.size = opt_text(std::move(f[6]));
    m.model = opt_text(std::move(f[7]));
    m.material = opt_text(std::move(f[8]));
    m.author = opt_text(std::move(f[9]));
    m.description = opt_text(std::move(f[10]));
    const auto key = key_of(m.item_id, m.locale);
    if (auto it = seen.find(key); it != seen.end()) {
      throw DuplicateKeyError("line " + std::to_string(rec->line) +
                              ": duplicate (item_id, locale) (" + m.item_id +
                              ", " + m.locale + "), first seen on line " +
                              std::to_string(it->second));
    }
    seen.emplace(key, rec->line);
    items.push_back(std::move(m));
  }
  return Catalog(std::move(items));
}

void save_catalog(const std::filesystem::path& path, const Catalog& catalog) {
  auto out = io::open_output(path);
  csv::write_row(out, {kCatalogHeader.begin(), kCatalogHeader.end()});
  auto opt = [](const std::optional<std::string>& s) { return s.value_or(""); };
  for (const auto& m : catalog.items()) {
    csv::write_row(out, {m.item_id, m.locale, m.title,
                         m.price ? io::format_double(*m.price) : "",
                         opt(m.brand), opt(m.color), opt(m.size), opt(m.model),
                         opt(m.material), opt(m.author), opt(m.description)});
  }
}

SessionList load_sessions(const std::filesystem::path& path) {
  auto in = io::open_input(path);
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header) throw ParseError("empty sessions file");
  check_header(*header, kSessionsHeader, 3);

  SessionList sessions;
  while (auto rec = reader.next()) {
    if (rec->fields.size() == 1 && rec->fields[0].empty()) continue;
    if (rec->fields.size() < 3 || rec->fields.size() > 4) {
      throw ParseError("expected 3 or 4 fields, got " +
                           std::to_string(rec->fields.size()),
                       rec->line);
    }
    Session s;
    s.session_id = std::move(rec->fields[0]);
    s.locale = std::move(rec->fields[1]);
    s.items = split_items(rec->fields[2]);
    if (s.session_id.empty()) throw ParseError("empty session_id", rec->line);
    if (s.items.empty()) throw ParseError("empty items field", rec->line);
    if (rec->fields.size() == 4 && !rec->fields[3].empty()) {
      s.label = std::move(rec->fields[3]);
    }
    sessions.push_back(std::move(s));
  }
  return sessions;
}

void save_sessions(const std::filesystem::path& path,
                   const SessionList& sessions) {
  auto out = io::open_output(path);
  csv::write_row(out, {kSessionsHeader.begin(), kSessionsHeader.end()});
  for (const auto& s : sessions) {
    std::string items;
    for (std::size_t i = 0; i < s.items.size(); ++i) {
      if (i) items.push_back(' ');
      items += s.items[i];
    }
    csv::write_row(out, {s.session_id, s.locale, items, s.label.value_or("")});
  }
}

FoldAssignment load_folds(const std::filesystem::path& path) {
  auto in = io::open_input(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return FoldAssignment::from_json(j);
}

void save_folds(const std::filesystem::path& path,
                const FoldAssignment& folds) {
  auto out = io::open_output(path);
  out << folds.to_json().dump(2) << '\n';
}

std::string augmented_id(std::string_view parent, std::size_t prefix_len) {
  return std::string(parent) + "#" + std::to_string(prefix_len);
}

bool is_augmented_id(std::string_view session_id) {
  const auto pos = session_id.rfind('#');
  if (pos == std::string_view::npos || pos == 0 ||
      pos + 1 == session_id.size()) {
    return false;
  }
  return std::all_of(session_id.begin() + static_cast<std::ptrdiff_t>(pos) + 1,
                     session_id.end(),
                     [](char c) { return c >= '0' && c <= '9'; });
}

std::string_view parent_session_id(std::string_view session_id) {
  if (!is_augmented_id(session_id)) return session_id;
  return session_id.substr(0, session_id.rfind('#'));
}

SessionList augment_prefixes(const SessionList& sessions, int min_prefix) {
  if (min_prefix < 1) throw ArgumentError("min_prefix must be >= 1");
  SessionList out;
  const auto min_k = static_cast<std::size_t>(min_prefix);
  for (const auto& s : sessions) {
    const std::size_t n = s.items.size();
    for (std::size_t k = min_k; k < n; ++k) {
      Session child;
      child.session_id = augmented_id(s.session_id, k);
      child.locale = s.locale;
      child.items.assign(s.items.begin(),
                         s.items.begin() + static_cast<std::ptrdiff_t>(k));
      child.label = s.items[k];
      out.push_back(std::move(child));
    }
    if (s.label) {
      Session full = s;
      full.session_id = augmented_id(s.session_id, n);
      out.push_back(std::move(full));
    }
  }
  return out;
}

FoldAssignment kfold_split(const SessionList& sessions, int k,
                           std::uint64_t seed) {
  if (k < 2) throw ArgumentError("k must be >= 2");
  if (sessions.empty()) throw ArgumentError("no sessions to split");
  std::set<std::string> originals;
  for (const auto& s : sessions) {
    originals.emplace(parent_session_id(s.session_id));
  }
  if (static_cast<std::size_t>(k) > originals.size()) {
    throw ArgumentError("k=" + std::to_string(k) + " exceeds the " +
                        std::to_string(originals.size()) +
                        " original sessions");
  }
  std::vector<std::string> ids(originals.begin(), originals.end());
  Rng rng(seed);
  rng.shuffle(ids.begin(), ids.end());
  FoldAssignment fa;
  fa.fold_count = k;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    fa.assignment.emplace(ids[i], static_cast<int>(i % static_cast<std::size_t>(k)));
  }
  return fa;
}

SessionList filter_locale(const SessionList& sessions,
                          std::string_view locale) {
  SessionList out;
  for (const auto& s : sessions) {
    if (s.locale == locale) out.push_back(s);
  }
  return out;
}

std::size_t drop_unknown_items(SessionList& sessions, const Catalog& catalog) {
  std::size_t dropped = 0;
  SessionList kept;
  kept.reserve(sessions.size());
  for (auto& s : sessions) {
    const auto before = s.items.size();
    std::erase_if(s.items,
                  [&](const std::string& id) { return !catalog.contains(id); });
    dropped += before - s.items.size();
    if (s.label && !catalog.contains(*s.label)) {
      s.label.reset();
      ++dropped;
    }
    if (!s.items.empty()) kept.push_back(std::move(s));
  }
  sessions = std::move(kept);
  return dropped;
}

SessionList select_fold(const SessionList& sessions,
                        const FoldAssignment& folds, int fold, bool include) {
  SessionList out;
  for (const auto& s : sessions) {
    if ((folds.fold_of(s.session_id) == fold) == include) out.push_back(s);
  }
  return out;
}

}  // namespace hybrec
