#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace hybrec {

// One catalog record. Optional text fields are absent (not empty) when the
// source cell was empty.
struct ItemMeta {
  std::string item_id;
  std::string locale;
  std::string title;
  std::optional<double> price;
  std::optional<std::string> brand;
  std::optional<std::string> color;
  std::optional<std::string> size;
  std::optional<std::string> model;
  std::optional<std::string> material;
  std::optional<std::string> author;
  std::optional<std::string> description;

  bool operator==(const ItemMeta&) const = default;
};

// Item records keyed by (item_id, locale). Bare-id lookups resolve to the
// first record with that id, which is exact for single-locale catalogs.
class Catalog {
 public:
  Catalog() = default;
  // Throws DuplicateKeyError on a repeated (item_id, locale) pair.
  explicit Catalog(std::vector<ItemMeta> items);

  const ItemMeta* find(std::string_view item_id) const;
  const ItemMeta* find(std::string_view item_id, std::string_view locale) const;
  bool contains(std::string_view item_id) const { return find(item_id); }

  const std::vector<ItemMeta>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  Catalog filter_locale(std::string_view locale) const;

 private:
  std::vector<ItemMeta> items_;
  std::unordered_map<std::string, std::size_t> by_key_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct Session {
  std::string session_id;
  std::string locale;
  std::vector<std::string> items;
  std::optional<std::string> label;

  bool operator==(const Session&) const = default;
};

using SessionList = std::vector<Session>;

// Maps each original session to a fold in [0, fold_count). Augmented
// children ("<parent>#<k>") resolve through their parent.
struct FoldAssignment {
  int fold_count = 0;
  std::map<std::string, int> assignment;

  // Throws LookupError for sessions whose parent is not assigned.
  int fold_of(std::string_view session_id) const;
  std::vector<std::size_t> fold_sizes() const;

  nlohmann::json to_json() const;
  static FoldAssignment from_json(const nlohmann::json& j);
};

Catalog load_catalog(const std::filesystem::path& path);
void save_catalog(const std::filesystem::path& path, const Catalog& catalog);

SessionList load_sessions(const std::filesystem::path& path);
void save_sessions(const std::filesystem::path& path,
                   const SessionList& sessions);

FoldAssignment load_folds(const std::filesystem::path& path);
void save_folds(const std::filesystem::path& path, const FoldAssignment& folds);

// Augmented ids are "<parent>#<prefix length>".
std::string augmented_id(std::string_view parent, std::size_t prefix_len);
bool is_augmented_id(std::string_view session_id);
std::string_view parent_session_id(std::string_view session_id);

// Every prefix [i1..ik] with min_prefix <= k < n predicts i(k+1); a labeled
// session additionally emits its full item list with the label. Unlabeled
// sessions contribute only their proper prefixes.
SessionList augment_prefixes(const SessionList& sessions, int min_prefix = 1);

// Deterministic partition of the original sessions into k folds whose
// sizes differ by at most one.
FoldAssignment kfold_split(const SessionList& sessions, int k,
                           std::uint64_t seed);

SessionList filter_locale(const SessionList& sessions, std::string_view locale);

// Removes items (and labels) missing from the catalog. Sessions left with no
// items are dropped. Returns the number of removed item references.
std::size_t drop_unknown_items(SessionList& sessions, const Catalog& catalog);

// Sessions of the given fold (validation) or of every other fold (training).
SessionList select_fold(const SessionList& sessions,
                        const FoldAssignment& folds, int fold, bool include);

}  // namespace hybrec
