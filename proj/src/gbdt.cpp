#include "hybrec/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "hybrec/errors.hpp"
#include "hybrec/io_util.hpp"
#include "hybrec/rng.hpp"

namespace hybrec {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + exp(-y*f)) written for y in {0,1}.
double logistic_loss(double margin, int label) {
  const double z = label ? -margin : margin;
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

struct Binned {
  std::vector<std::vector<double>> thresholds;  // per feature, ascending
  std::vector<std::uint8_t> bins;               // row-major rows x cols
};

// Candidate thresholds at quantiles of the distinct values; a row's bin is
// the number of thresholds strictly below its value.
Binned bin_features(const FeatureMatrix& x, int max_bins) {
  Binned b;
  const std::size_t n = x.rows();
  b.thresholds.resize(x.cols);
  std::vector<double> col(n);
  for (std::size_t f = 0; f < x.cols; ++f) {
    for (std::size_t r = 0; r < n; ++r) col[r] = x.values[r * x.cols + f];
    std::sort(col.begin(), col.end());
    std::vector<double> distinct;
    for (double v : col) {
      if (distinct.empty() || v != distinct.back()) distinct.push_back(v);
    }
    auto& th = b.thresholds[f];
    if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
      // midpoints between consecutive distinct values
      for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
        th.push_back(distinct[i] + (distinct[i + 1] - distinct[i]) / 2);
      }
    } else {
      for (int q = 1; q < max_bins; ++q) {
        const double v = col[static_cast<std::size_t>(q) * n / static_cast<std::size_t>(max_bins)];
        auto it = std::upper_bound(distinct.begin(), distinct.end(), v);
        if (it == distinct.end()) continue;
        const double t = v + (*it - v) / 2;
        if (th.empty() || t > th.back()) th.push_back(t);
      }
    }
  }
  b.bins.resize(n * x.cols);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t f = 0; f < x.cols; ++f) {
      const auto& th = b.thresholds[f];
      const double v = x.values[r * x.cols + f];
      b.bins[r * x.cols + f] = static_cast<std::uint8_t>(
          std::lower_bound(th.begin(), th.end(), v) - th.begin());
    }
  }
  return b;
}

struct TreeBuilder {
  const FeatureMatrix& x;
  const Binned& binned;
  const std::vector<double>& grad;
  const std::vector<double>& hess;
  const GbdtConfig& cfg;
  RegressionTree tree;

  double leaf_value(double g, double h) const { return -g / (h + cfg.l2); }

  int build(std::vector<std::uint32_t>& rows, int depth) {
    double g_sum = 0, h_sum = 0;
    for (auto r : rows) {
      g_sum += grad[r];
      h_sum += hess[r];
    }
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[static_cast<std::size_t>(id)].value = leaf_value(g_sum, h_sum);
    if (depth >= cfg.depth || rows.size() < 2) return id;

    const double parent = g_sum * g_sum / (h_sum + cfg.l2);
    double best_gain = 1e-12;
    int best_feature = -1;
    std::size_t best_bin = 0;
    std::vector<double> hg, hh;
    for (std::size_t f = 0; f < x.cols; ++f) {
      const auto nb = binned.thresholds[f].size() + 1;
      if (nb < 2) continue;
      hg.assign(nb, 0.0);
      hh.assign(nb, 0.0);
      for (auto r : rows) {
        const auto b = binned.bins[r * x.cols + f];
        hg[b] += grad[r];
        hh[b] += hess[r];
      }
      double gl = 0, hl = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        gl += hg[b];
        hl += hh[b];
        const double gr = g_sum - gl, hr = h_sum - hl;
        if (hl < cfg.min_child_hessian || hr < cfg.min_child_hessian) continue;
        const double gain =
            gl * gl / (hl + cfg.l2) + gr * gr / (hr + cfg.l2) - parent;
        // strict '>' keeps the lowest feature index and bin on ties
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_bin = b;
        }
      }
    }
    if (best_feature < 0) return id;

    const auto f = static_cast<std::size_t>(best_feature);
    std::vector<std::uint32_t> left, right;
    for (auto r : rows) {
      (binned.bins[r * x.cols + f] <= best_bin ? left : right).push_back(r);
    }
    if (left.empty() || right.empty()) return id;
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(left, depth + 1);
    const int rgt = build(right, depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = binned.thresholds[f][best_bin];
    node.left = l;
    node.right = rgt;
    return id;
  }
};

int leaf_of(const RegressionTree& tree, std::span<const double> features) {
  int i = 0;
  while (tree.nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const auto& n = tree.nodes[static_cast<std::size_t>(i)];
    i = features[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return i;
}

}  // namespace

void FeatureMatrix::push_row(std::span<const double> r) {
  if (r.size() != cols) throw ArgumentError("feature row arity mismatch");
  values.insert(values.end(), r.begin(), r.end());
}

double RegressionTree::evaluate(std::span<const double> features) const {
  return nodes[static_cast<std::size_t>(leaf_of(*this, features))].value;
}

double GbdtModel::margin(std::span<const double> features) const {
  double sum = 0;
  for (const auto& t : trees) sum += t.evaluate(features);
  return base_score + learning_rate * sum;
}

double gbdt_predict(const GbdtModel& model, std::span<const double> features) {
  if (features.size() != model.feature_count) {
    throw ArgumentError("gbdt_predict: expected " +
                        std::to_string(model.feature_count) + " features, got " +
                        std::to_string(features.size()));
  }
  return sigmoid(model.margin(features));
}

GbdtTrainResult train_gbdt(const FeatureMatrix& features,
                           std::span<const int> labels, const GbdtConfig& config) {
  const std::size_t n = features.rows();
  if (labels.size() != n) throw ArgumentError("train_gbdt: label count mismatch");
  if (config.trees < 0 || config.depth < 0 || config.bins < 2 || config.bins > 256) {
    throw ArgumentError("train_gbdt: invalid config");
  }
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  for (int y : labels) {
    if (y != 0 && y != 1) throw ArgumentError("train_gbdt: labels must be 0 or 1");
  }
  if (positives == 0 || positives == n) {
    throw ArgumentError("train_gbdt: labels must contain both classes");
  }

  GbdtTrainResult result;
  auto& model = result.model;
  model.feature_count = features.cols;
  model.learning_rate = config.lr;
  const double rate = static_cast<double>(positives) / static_cast<double>(n);
  model.base_score = std::log(rate / (1.0 - rate));

  const Binned binned = bin_features(features, config.bins);
  std::vector<double> margin(n, model.base_score), grad(n), hess(n);
  auto mean_loss = [&] {
    double l = 0;
    for (std::size_t i = 0; i < n; ++i) l += logistic_loss(margin[i], labels[i]);
    return l / static_cast<double>(n);
  };
  result.loss_trace.push_back(mean_loss());

  Rng rng(config.seed);
  std::vector<std::uint32_t> all(n);
  std::iota(all.begin(), all.end(), 0u);
  std::vector<int> leaf(n);
  for (int t = 0; t < config.trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      grad[i] = p - labels[i];
      hess[i] = std::max(p * (1.0 - p), 1e-16);
    }
    std::vector<std::uint32_t> rows;
    if (config.subsample < 1.0) {
      for (auto r : all) {
        if (rng.uniform() < config.subsample) rows.push_back(r);
      }
      if (rows.empty()) rows = all;
    } else {
      rows = all;
    }
    TreeBuilder builder{features, binned, grad, hess, config, {}};
    builder.build(rows, 0);
    RegressionTree tree = std::move(builder.tree);

    // Shrink any leaf whose step would raise the loss of its rows.
    for (std::size_t i = 0; i < n; ++i) leaf[i] = leaf_of(tree, features.row(i));
    std::vector<std::vector<std::uint32_t>> members(tree.nodes.size());
    for (std::size_t i = 0; i < n; ++i) {
      members[static_cast<std::size_t>(leaf[i])].push_back(static_cast<std::uint32_t>(i));
    }
    for (std::size_t li = 0; li < tree.nodes.size(); ++li) {
      auto& node = tree.nodes[li];
      if (node.feature >= 0 || members[li].empty()) continue;
      double before = 0;
      for (auto r : members[li]) before += logistic_loss(margin[r], labels[r]);
      for (int attempt = 0; attempt < 60; ++attempt) {
        double after = 0;
        for (auto r : members[li]) {
          after += logistic_loss(margin[r] + config.lr * node.value, labels[r]);
        }
        if (after <= before) break;
        node.value *= 0.5;
        if (attempt == 59) node.value = 0;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      margin[i] += config.lr * tree.nodes[static_cast<std::size_t>(leaf[i])].value;
    }
    model.trees.push_back(std::move(tree));
    result.loss_trace.push_back(mean_loss());
  }
  return result;
}

nlohmann::json GbdtModel::to_json() const {
  nlohmann::json j;
  j["base_score"] = base_score;
  j["learning_rate"] = learning_rate;
  j["feature_count"] = feature_count;
  j["trees"] = nlohmann::json::array();
  for (const auto& t : trees) {
    nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                   left = nlohmann::json::array(), right = nlohmann::json::array(),
                   value = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.value);
    }
    j["trees"].push_back({{"feature", feature},
                          {"threshold", threshold},
                          {"left", left},
                          {"right", right},
                          {"value", value}});
  }
  return j;
}

GbdtModel GbdtModel::from_json(const nlohmann::json& j) {
  GbdtModel m;
  try {
    m.base_score = j.at("base_score").get<double>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.feature_count = j.at("feature_count").get<std::size_t>();
    for (const auto& t : j.at("trees")) {
      RegressionTree tree;
      const auto& f = t.at("feature");
      const auto size = f.size();
      for (std::size_t i = 0; i < size; ++i) {
        TreeNode n;
        n.feature = f.at(i).get<int>();
        n.threshold = t.at("threshold").at(i).get<double>();
        n.left = t.at("left").at(i).get<int>();
        n.right = t.at("right").at(i).get<int>();
        n.value = t.at("value").at(i).get<double>();
        const auto limit = static_cast<int>(size);
        if (n.feature >= static_cast<int>(m.feature_count) ||
            (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= limit ||
                                n.right >= limit))) {
          throw ParseError("gbdt model: invalid tree node");
        }
        if (!std::isfinite(n.value)) throw ParseError("gbdt model: non-finite leaf");
        tree.nodes.push_back(n);
      }
      if (tree.nodes.empty()) throw ParseError("gbdt model: empty tree");
      m.trees.push_back(std::move(tree));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("gbdt model: ") + e.what());
  }
  return m;
}

void save_gbdt(const std::filesystem::path& path, const GbdtModel& model) {
  auto out = io::open_output(path);
  out << model.to_json().dump() << '\n';
}

GbdtModel load_gbdt(const std::filesystem::path& path) {
  auto in = io::open_input(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return GbdtModel::from_json(j);
}

}  // namespace hybrec
