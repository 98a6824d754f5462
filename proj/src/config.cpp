#include "hybrec/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "hybrec/errors.hpp"

namespace hybrec {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

// Drops a trailing comment that is not inside quotes.
std::string_view strip_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

std::string scalar(std::string_view raw, std::size_t line) {
  raw = trim(raw);
  if (raw.empty()) fail(line, "missing value");
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') fail(line, "unterminated string");
    auto inner = raw.substr(1, raw.size() - 2);
    if (inner.find('"') != std::string_view::npos) fail(line, "stray quote");
    return std::string(inner);
  }
  if (raw.find_first_of(" \t\"") != std::string_view::npos) fail(line, "bad value '" + std::string(raw) + "'");
  return std::string(raw);
}

class Reader {
 public:
  explicit Reader(const ConfigDocument& doc) : doc_(doc) {}

  template <typename T>
  void number(const std::string& key, T& out) {
    const auto* v = take(key);
    if (!v) return;
    if (v->is_array) fail(v->line, key + " must be a scalar");
    out = parse_number<T>(v->items[0], key, v->line);
  }

  void boolean(const std::string& key, bool& out) {
    const auto* v = take(key);
    if (!v) return;
    if (v->is_array || (v->items[0] != "true" && v->items[0] != "false")) {
      fail(v->line, key + " must be true or false");
    }
    out = v->items[0] == "true";
  }

  void string(const std::string& key, std::string& out) {
    const auto* v = take(key);
    if (!v) return;
    if (v->is_array) fail(v->line, key + " must be a scalar");
    out = v->items[0];
  }

  void path(const std::string& key, std::filesystem::path& out) {
    std::string s;
    if (!has(key)) return;
    string(key, s);
    out = s;
  }

  template <std::size_t N>
  void array(const std::string& key, std::array<double, N>& out) {
    const auto* v = take(key);
    if (!v) return;
    if (!v->is_array || v->items.size() != N) {
      fail(v->line, key + " must be an array of " + std::to_string(N) + " numbers");
    }
    for (std::size_t i = 0; i < N; ++i) out[i] = parse_number<double>(v->items[i], key, v->line);
  }

  void choice(const std::string& key, const std::map<std::string, std::function<void()>>& options) {
    const auto* v = take(key);
    if (!v) return;
    auto it = options.find(v->is_array ? "" : v->items[0]);
    if (it == options.end()) fail(v->line, "unsupported value for " + key);
    it->second();
  }

  bool has(const std::string& key) const { return doc_.values().count(key) != 0; }

  void finish() const {
    for (const auto& [key, v] : doc_.values()) {
      if (!used_.count(key)) fail(v.line, "unknown key '" + key + "'");
    }
  }

 private:
  const ConfigDocument::Value* take(const std::string& key) {
    auto it = doc_.values().find(key);
    if (it == doc_.values().end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  template <typename T>
  static T parse_number(const std::string& s, const std::string& key, std::size_t line) {
    T v{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      fail(line, key + ": not a valid number '" + s + "'");
    }
    return v;
  }

  const ConfigDocument& doc_;
  std::set<std::string> used_;
};

}  // namespace

ConfigDocument ConfigDocument::parse(std::string_view text) {
  ConfigDocument doc;
  std::string section;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++lineno;
    const auto line = trim(strip_comment(text.substr(start, end - start)));
    start = end + 1;
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(lineno, "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) fail(lineno, "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(lineno, "expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty() || key.find_first_of(" \t\"") != std::string_view::npos) {
      fail(lineno, "bad key");
    }
    const auto full = section.empty() ? std::string(key) : section + "." + std::string(key);
    if (doc.values_.count(full)) fail(lineno, "duplicate key '" + full + "'");
    Value v;
    v.line = lineno;
    const auto raw = trim(line.substr(eq + 1));
    if (!raw.empty() && raw.front() == '[') {
      if (raw.back() != ']') fail(lineno, "unterminated array");
      v.is_array = true;
      const auto inner = trim(raw.substr(1, raw.size() - 2));
      std::size_t p = 0;
      while (!inner.empty() && p <= inner.size()) {
        auto comma = inner.find(',', p);
        if (comma == std::string_view::npos) comma = inner.size();
        v.items.push_back(scalar(inner.substr(p, comma - p), lineno));
        p = comma + 1;
      }
    } else {
      v.items.push_back(scalar(raw, lineno));
    }
    doc.values_.emplace(full, std::move(v));
  }
  return doc;
}

ConfigDocument ConfigDocument::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void ConfigDocument::set(const std::string& key, const std::string& value) {
  auto one = parse(key + " = " + value);
  auto node = one.values_.extract(key);
  if (node.empty()) throw ConfigError("bad override key '" + key + "'");
  values_.insert_or_assign(key, std::move(node.mapped()));
}

PipelineConfig PipelineConfig::from_document(const ConfigDocument& doc) {
  PipelineConfig c;
  Reader r(doc);
  r.number("seed", c.seed);
  r.string("locale", c.locale);
  r.path("paths.sessions", c.sessions);
  r.path("paths.catalog", c.catalog);
  r.path("paths.artifacts", c.artifacts);

  auto& e = c.eval;
  e.seed = c.seed;
  e.gru.seed = c.seed + 1;
  e.dcl.seed = c.seed + 2;
  e.gbdt.seed = c.seed + 3;
  e.graph.centrality.seed = c.seed + 4;
  c.synth.seed = c.seed + 5;

  r.number("itemcf.dist_exponent", e.itemcf.dist_exponent);
  r.number("itemcf.dire_backward", e.itemcf.dire_backward);
  r.number("itemcf.pos_last_boost", e.itemcf.pos_last_boost);
  r.number("itemcf.pop_exp_x", e.itemcf.pop_exp_x);
  r.number("itemcf.pop_exp_y", e.itemcf.pop_exp_y);
  r.boolean("itemcf.include_label", e.itemcf.include_label);
  r.number("itemcf.max_row_entries", e.itemcf.max_row_entries);

  r.number("graph.damping", e.graph.damping);
  r.number("graph.katz_alpha", e.graph.centrality.katz_alpha);
  r.number("graph.katz_beta", e.graph.centrality.katz_beta);
  r.boolean("graph.weighted_betweenness", e.graph.centrality.weighted_betweenness);
  r.number("graph.exact_betweenness_limit", e.graph.centrality.exact_betweenness_limit);
  r.number("graph.betweenness_pivots", e.graph.centrality.betweenness_pivots);
  r.number("graph.seed", e.graph.centrality.seed);
  r.choice("graph.edge_direction",
           {{"out", [&] { e.graph.edge_direction = EdgeDirection::Out; }},
            {"in", [&] { e.graph.edge_direction = EdgeDirection::In; }},
            {"both", [&] { e.graph.edge_direction = EdgeDirection::Both; }}});

  r.number("gru.dim", e.gru.dim);
  r.number("gru.lr", e.gru.lr);
  r.number("gru.epochs", e.gru.epochs);
  r.number("gru.batch", e.gru.batch);
  r.number("gru.negatives", e.gru.negatives);
  r.number("gru.max_len", e.gru.max_len);
  r.number("gru.price_buckets", e.gru.price_buckets);
  r.number("gru.brand_buckets", e.gru.brand_buckets);
  r.number("gru.init_scale", e.gru.init_scale);
  r.number("gru.seed", e.gru.seed);

  r.number("dcl.beta", e.dcl.beta);
  r.number("dcl.queue_size", e.dcl.queue_size);
  r.number("dcl.s", e.dcl.s);
  r.number("dcl.m", e.dcl.m);
  r.array("dcl.lambdas", e.dcl.lambdas);
  r.number("dcl.dim", e.dcl.dim);
  r.number("dcl.batch", e.dcl.batch);
  r.number("dcl.epochs", e.dcl.epochs);
  r.number("dcl.lr", e.dcl.lr);
  r.number("dcl.min_freq", e.dcl.min_freq);
  r.number("dcl.max_session_items", e.dcl.max_session_items);
  r.choice("dcl.session_mode",
           {{"concat", [&] { e.dcl.session_mode = SessionTextMode::Concat; }},
            {"mean_items", [&] { e.dcl.session_mode = SessionTextMode::MeanItems; }}});
  r.boolean("dcl.momentum_from_base", e.dcl.momentum_from_base);
  r.number("dcl.init_scale", e.dcl.init_scale);
  r.number("dcl.seed", e.dcl.seed);

  r.number("fusion.floor", e.fusion_floor);
  r.number("fusion.cut", e.fusion_cut);
  r.number("fusion.retrieve_k", e.retrieve_k);
  r.number("fusion.top_k", e.top_k);
  r.number("fusion.max_negatives", e.max_negatives);
  r.choice("fusion.features", {{"full", [&] { c.rerank_full_features = true; }},
                               {"scores", [&] { c.rerank_full_features = false; }}});

  r.number("gbdt.trees", e.gbdt.trees);
  r.number("gbdt.depth", e.gbdt.depth);
  r.number("gbdt.lr", e.gbdt.lr);
  r.number("gbdt.bins", e.gbdt.bins);
  r.number("gbdt.l2", e.gbdt.l2);
  r.number("gbdt.min_child_hessian", e.gbdt.min_child_hessian);
  r.number("gbdt.subsample", e.gbdt.subsample);
  r.number("gbdt.seed", e.gbdt.seed);

  r.number("eval.folds", c.folds);
  r.boolean("eval.augment", e.augment);
  r.number("eval.min_prefix", e.min_prefix);
  r.number("eval.jobs", e.jobs);
  r.number("eval.seed", e.seed);
  std::array<double, 4> first{}, second{};
  if (r.has("eval.ablation_a") || r.has("eval.ablation_b")) {
    first = c.ablation_lambdas[0];
    second = c.ablation_lambdas[1];
    r.array("eval.ablation_a", first);
    r.array("eval.ablation_b", second);
    c.ablation_lambdas = {first, second};
  }

  r.number("synth.sessions", c.synth.sessions);
  r.number("synth.items", c.synth.items);
  r.number("synth.clusters", c.synth.clusters);
  r.number("synth.p_successor", c.synth.p_successor);
  r.number("synth.p_cluster", c.synth.p_cluster);
  r.number("synth.zipf_exponent", c.synth.zipf_exponent);
  r.number("synth.min_length", c.synth.min_length);
  r.number("synth.max_length", c.synth.max_length);
  r.number("synth.seed", c.synth.seed);
  c.synth.locale = c.locale.empty() ? "UK" : c.locale;

  r.finish();
  c.validate();
  return c;
}

void PipelineConfig::validate() const {
  try {
    eval.itemcf.validate();
    eval.dcl.validate();
    synth.validate();
  } catch (const std::exception& ex) {
    throw ConfigError(ex.what());
  }
  if (folds < 2) throw ConfigError("eval.folds must be at least 2");
  if (eval.gru.dim < 1 || eval.gru.epochs < 0 || eval.gru.batch < 1 || eval.gru.negatives < 1 ||
      eval.gru.lr <= 0 || eval.gru.max_len < 1 || eval.gru.price_buckets < 1 ||
      eval.gru.brand_buckets < 1) {
    throw ConfigError("invalid [gru] settings");
  }
  if (!(eval.fusion_floor > 0 && eval.fusion_floor < 1) || eval.fusion_cut < 1 ||
      eval.retrieve_k < 1 || eval.top_k < 1) {
    throw ConfigError("invalid [fusion] settings");
  }
  if (eval.gbdt.trees < 0 || eval.gbdt.depth < 0 || eval.gbdt.bins < 2 || eval.gbdt.bins > 256 ||
      eval.gbdt.lr <= 0 || eval.gbdt.l2 < 0 || eval.gbdt.subsample <= 0 ||
      eval.gbdt.subsample > 1) {
    throw ConfigError("invalid [gbdt] settings");
  }
  if (!(eval.graph.damping > 0 && eval.graph.damping < 1)) {
    throw ConfigError("graph.damping must be in (0, 1)");
  }
  if (eval.min_prefix < 1) throw ConfigError("eval.min_prefix must be at least 1");
  for (const auto& l : ablation_lambdas) {
    auto d = eval.dcl;
    d.lambdas = l;
    try {
      d.validate();
    } catch (const std::exception& ex) {
      throw ConfigError(std::string("ablation lambdas: ") + ex.what());
    }
  }
}

}  // namespace hybrec
