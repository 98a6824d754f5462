#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hybrec/eval.hpp"
#include "hybrec/synth.hpp"

namespace hybrec {

// Parsed key/value document. Keys are "section.key" ("key" at top level);
// values keep their source text with quotes removed, arrays split into
// elements. Syntax errors throw ConfigError naming the line.
class ConfigDocument {
 public:
  struct Value {
    std::vector<std::string> items;  // one element unless an array
    bool is_array = false;
    std::size_t line = 0;
  };

  static ConfigDocument parse(std::string_view text);
  static ConfigDocument load(const std::filesystem::path& path);

  const std::map<std::string, Value>& values() const { return values_; }
  // Overrides one key; `value` uses file syntax, arrays included.
  void set(const std::string& key, const std::string& value);

 private:
  std::map<std::string, Value> values_;
};

struct PipelineConfig {
  std::filesystem::path sessions = "data/sessions.csv";
  std::filesystem::path catalog = "data/catalog.csv";
  std::filesystem::path artifacts = "artifacts";
  std::string locale = "UK";  // empty keeps every locale
  std::uint64_t seed = 42;
  int folds = 5;
  // Reranker inputs: every engineered feature, or the score-only subset.
  bool rerank_full_features = true;
  EvalConfig eval;
  SynthConfig synth;
  std::vector<std::array<double, 4>> ablation_lambdas = {{0.5, 0.5, 0.0, 0.0},
                                                         {0.35, 0.35, 0.15, 0.15}};

  // Overlays the document onto the defaults. Unknown keys and bad values
  // throw ConfigError. A top-level seed also seeds every stage that has no
  // explicit seed of its own.
  static PipelineConfig from_document(const ConfigDocument& doc);
  void validate() const;
};

}  // namespace hybrec
