#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"

namespace hybrec {

// Dense row-major feature table.
struct FeatureMatrix {
  std::size_t cols = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  explicit FeatureMatrix(std::size_t c) : cols(c) {}

  std::size_t rows() const { return cols ? values.size() / cols : 0; }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * cols, cols};
  }
  void push_row(std::span<const double> r);
};

struct GbdtConfig {
  int trees = 200;
  int depth = 6;
  double lr = 0.1;
  int bins = 64;
  std::uint64_t seed = 17;
  double l2 = 1.0;
  double min_child_hessian = 1e-3;
  // Row fraction sampled per tree (seeded); 1 uses every row.
  double subsample = 1.0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;  // rows with value <= threshold go left
  int left = -1;
  int right = -1;
  double value = 0;

  bool operator==(const TreeNode&) const = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double evaluate(std::span<const double> features) const;
  bool operator==(const RegressionTree&) const = default;
};

struct GbdtModel {
  double base_score = 0;
  double learning_rate = 0.1;
  std::size_t feature_count = 0;
  std::vector<RegressionTree> trees;

  // Raw margin: base_score + learning_rate * sum of leaf values.
  double margin(std::span<const double> features) const;

  nlohmann::json to_json() const;
  static GbdtModel from_json(const nlohmann::json& j);
  bool operator==(const GbdtModel&) const = default;
};

// sigmoid(margin); throws ArgumentError on an arity mismatch.
double gbdt_predict(const GbdtModel& model, std::span<const double> features);

struct GbdtTrainResult {
  GbdtModel model;
  // Mean logistic loss of the base score, then after every tree.
  std::vector<double> loss_trace;
};

// Logistic-loss boosting over quantile-binned features with greedy
// best-gain splits. Labels must contain both classes.
GbdtTrainResult train_gbdt(const FeatureMatrix& features,
                           std::span<const int> labels, const GbdtConfig& config);

void save_gbdt(const std::filesystem::path& path, const GbdtModel& model);
GbdtModel load_gbdt(const std::filesystem::path& path);

}  // namespace hybrec
