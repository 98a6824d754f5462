#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hybrec/itemcf.hpp"

namespace hybrec {

// Directed weighted graph over items; edge x -> y carries sim(x, y).
// Nodes are indexed in lexicographic id order.
class CoocGraph {
 public:
  struct Edge {
    std::int32_t node;
    double weight;
  };

  CoocGraph() = default;
  // Edges are (src, dst, weight) over node indices. Self-loops and
  // non-positive weights are rejected.
  CoocGraph(std::vector<std::string> nodes,
            const std::vector<std::tuple<std::int32_t, std::int32_t, double>>& edges);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edge_count_; }
  const std::vector<std::string>& nodes() const { return nodes_; }
  // -1 when unknown.
  std::int32_t index_of(std::string_view id) const;

  const std::vector<Edge>& out_edges(std::int32_t v) const {
    return out_[static_cast<std::size_t>(v)];
  }
  const std::vector<Edge>& in_edges(std::int32_t v) const {
    return in_[static_cast<std::size_t>(v)];
  }
  // 0 when absent.
  double weight(std::string_view src, std::string_view dst) const;

 private:
  std::vector<std::string> nodes_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::vector<std::vector<Edge>> out_;
  std::vector<std::vector<Edge>> in_;
  std::size_t edge_count_ = 0;
};

CoocGraph build_graph(const SimMatrix& matrix);

// Weighted-transition power iteration. Dangling nodes spread their mass
// uniformly. Stops when the L1 change drops below tol or after max_iter.
std::vector<double> pagerank(const CoocGraph& graph, double damping = 0.85,
                             double tol = 1e-10, int max_iter = 1000);

struct Centrality {
  double degree = 0;
  double katz = 0;
  double betweenness = 0;
};

struct CentralityOptions {
  double katz_alpha = 0.005;
  double katz_beta = 1.0;
  double tol = 1e-10;
  int katz_max_iter = 10000;
  // Shortest paths over 1/weight distances instead of hop counts.
  bool weighted_betweenness = false;
  // Above this node count betweenness is estimated from sampled pivots.
  std::size_t exact_betweenness_limit = 5000;
  std::size_t betweenness_pivots = 256;
  std::uint64_t seed = 13;
};

std::vector<Centrality> centralities(const CoocGraph& graph,
                                     const CentralityOptions& options = {});

// Katz fixed point x = alpha * A^T x + beta; exposed for diagnostics.
// `residuals` receives the max-norm update of every iteration when non-null.
std::vector<double> katz_centrality(const CoocGraph& graph, double alpha,
                                    double beta, double tol, int max_iter,
                                    std::vector<double>* residuals = nullptr);

std::vector<double> betweenness_centrality(const CoocGraph& graph,
                                           const CentralityOptions& options = {});

enum class EdgeDirection { Out, In, Both };

struct EdgeStats {
  double mean = 0;
  double count = 0;
  double max = 0;
  double std = 0;  // population
};

EdgeStats neighbor_edge_stats(const CoocGraph& graph, std::string_view item,
                              EdgeDirection direction = EdgeDirection::Out);

struct GraphFeatureRow {
  std::string item_id;
  double pagerank = 0;
  double degree_centrality = 0;
  double katz = 0;
  double betweenness = 0;
  double edge_mean = 0;
  double edge_count = 0;
  double edge_max = 0;
  double edge_std = 0;

  bool operator==(const GraphFeatureRow&) const = default;
};

struct GraphFeatureOptions {
  double damping = 0.85;
  double pagerank_tol = 1e-10;
  int pagerank_max_iter = 1000;
  CentralityOptions centrality;
  EdgeDirection edge_direction = EdgeDirection::Out;
};

// One row per node, sorted by item id.
std::vector<GraphFeatureRow> graph_features(const CoocGraph& graph,
                                            const GraphFeatureOptions& options = {});

using GraphFeatureTable = std::unordered_map<std::string, GraphFeatureRow>;
GraphFeatureTable index_features(const std::vector<GraphFeatureRow>& rows);

void save_graph_features(const std::filesystem::path& path,
                         const std::vector<GraphFeatureRow>& rows);
std::vector<GraphFeatureRow> load_graph_features(const std::filesystem::path& path);

}  // namespace hybrec
