#include "hybrec/cooc_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <stack>

#include "hybrec/errors.hpp"
#include "hybrec/io_util.hpp"
#include "hybrec/rng.hpp"

namespace hybrec {

CoocGraph::CoocGraph(
    std::vector<std::string> nodes,
    const std::vector<std::tuple<std::int32_t, std::int32_t, double>>& edges)
    : nodes_(std::move(nodes)), out_(nodes_.size()), in_(nodes_.size()) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!index_.emplace(nodes_[i], static_cast<std::int32_t>(i)).second) {
      throw InvariantError("duplicate graph node " + nodes_[i]);
    }
  }
  const auto n = static_cast<std::int32_t>(nodes_.size());
  for (const auto& [src, dst, w] : edges) {
    if (src < 0 || dst < 0 || src >= n || dst >= n) {
      throw InvariantError("edge endpoint out of range");
    }
    if (src == dst) throw InvariantError("self-loop on " + nodes_[static_cast<std::size_t>(src)]);
    if (!(w > 0) || !std::isfinite(w)) {
      throw InvariantError("edge weights must be finite and positive");
    }
    out_[static_cast<std::size_t>(src)].push_back({dst, w});
    in_[static_cast<std::size_t>(dst)].push_back({src, w});
    ++edge_count_;
  }
  auto by_node = [](const Edge& a, const Edge& b) { return a.node < b.node; };
  for (auto& e : out_) std::sort(e.begin(), e.end(), by_node);
  for (auto& e : in_) std::sort(e.begin(), e.end(), by_node);
}

std::int32_t CoocGraph::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? -1 : it->second;
}

double CoocGraph::weight(std::string_view src, std::string_view dst) const {
  const auto s = index_of(src);
  const auto d = index_of(dst);
  if (s < 0 || d < 0) return 0.0;
  for (const auto& e : out_edges(s)) {
    if (e.node == d) return e.weight;
  }
  return 0.0;
}

CoocGraph build_graph(const SimMatrix& matrix) {
  // Node set: items with at least one incident matrix entry.
  std::vector<char> used(matrix.item_count(), 0);
  for (std::size_t i = 0; i < matrix.item_count(); ++i) {
    const auto& row = matrix.row(static_cast<std::int32_t>(i));
    if (!row.empty()) used[i] = 1;
    for (const auto& e : row) used[static_cast<std::size_t>(e.target)] = 1;
  }
  std::vector<std::int32_t> remap(matrix.item_count(), -1);
  std::vector<std::string> nodes;
  for (std::size_t i = 0; i < matrix.item_count(); ++i) {
    if (used[i]) {
      remap[i] = static_cast<std::int32_t>(nodes.size());
      nodes.push_back(matrix.ids()[i]);
    }
  }
  std::vector<std::tuple<std::int32_t, std::int32_t, double>> edges;
  for (std::size_t i = 0; i < matrix.item_count(); ++i) {
    for (const auto& e : matrix.row(static_cast<std::int32_t>(i))) {
      if (static_cast<std::size_t>(e.target) == i) continue;
      edges.emplace_back(remap[i], remap[static_cast<std::size_t>(e.target)],
                         e.score);
    }
  }
  return CoocGraph(std::move(nodes), edges);
}

std::vector<double> pagerank(const CoocGraph& graph, double damping, double tol,
                             int max_iter) {
  if (!(damping > 0 && damping < 1)) throw ArgumentError("damping must be in (0, 1)");
  if (!(tol > 0)) throw ArgumentError("tol must be > 0");
  const std::size_t n = graph.node_count();
  if (n == 0) return {};
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<double> out_weight(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    for (const auto& e : graph.out_edges(static_cast<std::int32_t>(v))) {
      out_weight[v] += e.weight;
    }
  }
  std::vector<double> x(n, inv_n), next(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    double dangling = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      if (out_weight[v] == 0.0) dangling += x[v];
    }
    const double base = (1.0 - damping) * inv_n + damping * dangling * inv_n;
    for (std::size_t v = 0; v < n; ++v) {
      double inflow = 0.0;
      for (const auto& e : graph.in_edges(static_cast<std::int32_t>(v))) {
        const auto u = static_cast<std::size_t>(e.node);
        inflow += x[u] * e.weight / out_weight[u];
      }
      next[v] = base + damping * inflow;
    }
    double change = 0.0;
    for (std::size_t v = 0; v < n; ++v) change += std::abs(next[v] - x[v]);
    x.swap(next);
    if (change < tol) break;
  }
  return x;
}

std::vector<double> katz_centrality(const CoocGraph& graph, double alpha,
                                    double beta, double tol, int max_iter,
                                    std::vector<double>* residuals) {
  if (!(tol > 0)) throw ArgumentError("tol must be > 0");
  const std::size_t n = graph.node_count();
  std::vector<double> x(n, 0.0), next(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    double residual = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      double acc = 0.0;
      for (const auto& e : graph.in_edges(static_cast<std::int32_t>(v))) {
        acc += e.weight * x[static_cast<std::size_t>(e.node)];
      }
      next[v] = alpha * acc + beta;
      residual = std::max(residual, std::abs(next[v] - x[v]));
    }
    x.swap(next);
    if (residuals) residuals->push_back(residual);
    if (!std::isfinite(residual) || residual > 1e150) break;
    if (residual < tol) return x;
  }
  throw NonConvergenceError("Katz iteration did not converge; alpha=" +
                            std::to_string(alpha) + " is too large");
}

namespace {

// Brandes accumulation from one source; adds dependencies into `bc`.
void brandes_from(const CoocGraph& graph, std::int32_t source, bool weighted,
                  std::vector<double>& bc) {
  const std::size_t n = graph.node_count();
  std::vector<std::vector<std::int32_t>> preds(n);
  std::vector<double> sigma(n, 0.0), delta(n, 0.0);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<std::int32_t> order;
  order.reserve(n);
  const auto s = static_cast<std::size_t>(source);
  sigma[s] = 1.0;
  dist[s] = 0.0;

  if (!weighted) {
    std::queue<std::int32_t> q;
    q.push(source);
    while (!q.empty()) {
      const auto v = q.front();
      q.pop();
      order.push_back(v);
      const auto vi = static_cast<std::size_t>(v);
      for (const auto& e : graph.out_edges(v)) {
        const auto w = static_cast<std::size_t>(e.node);
        if (std::isinf(dist[w])) {
          dist[w] = dist[vi] + 1.0;
          q.push(e.node);
        }
        if (dist[w] == dist[vi] + 1.0) {
          sigma[w] += sigma[vi];
          preds[w].push_back(v);
        }
      }
    }
  } else {
    using Item = std::pair<double, std::int32_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    std::vector<char> done(n, 0);
    pq.emplace(0.0, source);
    while (!pq.empty()) {
      const auto [d, v] = pq.top();
      pq.pop();
      const auto vi = static_cast<std::size_t>(v);
      if (done[vi]) continue;
      done[vi] = 1;
      order.push_back(v);
      for (const auto& e : graph.out_edges(v)) {
        const auto w = static_cast<std::size_t>(e.node);
        const double nd = d + 1.0 / e.weight;
        if (nd < dist[w]) {
          dist[w] = nd;
          sigma[w] = sigma[vi];
          preds[w].assign(1, v);
          pq.emplace(nd, e.node);
        } else if (nd == dist[w]) {
          sigma[w] += sigma[vi];
          preds[w].push_back(v);
        }
      }
    }
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto w = static_cast<std::size_t>(*it);
    for (const auto v : preds[w]) {
      const auto vi = static_cast<std::size_t>(v);
      delta[vi] += sigma[vi] / sigma[w] * (1.0 + delta[w]);
    }
    if (w != s) bc[w] += delta[w];
  }
}

}  // namespace

std::vector<double> betweenness_centrality(const CoocGraph& graph,
                                           const CentralityOptions& options) {
  const std::size_t n = graph.node_count();
  std::vector<double> bc(n, 0.0);
  if (n <= options.exact_betweenness_limit || options.betweenness_pivots >= n) {
    for (std::size_t s = 0; s < n; ++s) {
      brandes_from(graph, static_cast<std::int32_t>(s),
                   options.weighted_betweenness, bc);
    }
    return bc;
  }
  std::vector<std::int32_t> sources(n);
  std::iota(sources.begin(), sources.end(), 0);
  Rng rng(options.seed);
  rng.shuffle(sources.begin(), sources.end());
  sources.resize(options.betweenness_pivots);
  std::sort(sources.begin(), sources.end());
  for (const auto s : sources) {
    brandes_from(graph, s, options.weighted_betweenness, bc);
  }
  const double scale =
      static_cast<double>(n) / static_cast<double>(options.betweenness_pivots);
  for (auto& b : bc) b *= scale;
  return bc;
}

std::vector<Centrality> centralities(const CoocGraph& graph,
                                     const CentralityOptions& options) {
  const std::size_t n = graph.node_count();
  std::vector<Centrality> out(n);
  const auto katz = katz_centrality(graph, options.katz_alpha, options.katz_beta,
                                    options.tol, options.katz_max_iter);
  const auto bc = betweenness_centrality(graph, options);
  for (std::size_t v = 0; v < n; ++v) {
    const auto vi = static_cast<std::int32_t>(v);
    out[v].degree =
        n > 1 ? static_cast<double>(graph.out_edges(vi).size() +
                                    graph.in_edges(vi).size()) /
                    (2.0 * static_cast<double>(n - 1))
              : 0.0;
    out[v].katz = katz[v];
    out[v].betweenness = bc[v];
  }
  return out;
}

EdgeStats neighbor_edge_stats(const CoocGraph& graph, std::string_view item,
                              EdgeDirection direction) {
  const auto v = graph.index_of(item);
  if (v < 0) throw LookupError("unknown graph node " + std::string(item));
  std::vector<double> w;
  if (direction != EdgeDirection::In) {
    for (const auto& e : graph.out_edges(v)) w.push_back(e.weight);
  }
  if (direction != EdgeDirection::Out) {
    for (const auto& e : graph.in_edges(v)) w.push_back(e.weight);
  }
  EdgeStats st;
  if (w.empty()) return st;
  st.count = static_cast<double>(w.size());
  double sum = 0.0;
  for (double x : w) {
    sum += x;
    st.max = std::max(st.max, x);
  }
  st.mean = sum / st.count;
  double var = 0.0;
  for (double x : w) var += (x - st.mean) * (x - st.mean);
  st.std = std::sqrt(var / st.count);
  return st;
}

std::vector<GraphFeatureRow> graph_features(const CoocGraph& graph,
                                            const GraphFeatureOptions& options) {
  const auto pr = pagerank(graph, options.damping, options.pagerank_tol,
                           options.pagerank_max_iter);
  const auto cent = centralities(graph, options.centrality);
  std::vector<GraphFeatureRow> rows;
  rows.reserve(graph.node_count());
  for (std::size_t v = 0; v < graph.node_count(); ++v) {
    const auto& id = graph.nodes()[v];
    const auto st = neighbor_edge_stats(graph, id, options.edge_direction);
    rows.push_back({id, pr[v], cent[v].degree, cent[v].katz, cent[v].betweenness,
                    st.mean, st.count, st.max, st.std});
  }
  return rows;
}

GraphFeatureTable index_features(const std::vector<GraphFeatureRow>& rows) {
  GraphFeatureTable t;
  for (const auto& r : rows) t.emplace(r.item_id, r);
  return t;
}

void save_graph_features(const std::filesystem::path& path,
                         const std::vector<GraphFeatureRow>& rows) {
  auto out = io::open_output(path);
  out << "item_id\tpagerank\tdegree_centrality\tkatz\tbetweenness\tedge_mean"
         "\tedge_count\tedge_max\tedge_std\n";
  for (const auto& r : rows) {
    out << r.item_id;
    for (double v : {r.pagerank, r.degree_centrality, r.katz, r.betweenness,
                     r.edge_mean, r.edge_count, r.edge_max, r.edge_std}) {
      out << '\t' << io::format_double(v);
    }
    out << '\n';
  }
}

std::vector<GraphFeatureRow> load_graph_features(const std::filesystem::path& path) {
  auto in = io::open_input(path);
  std::vector<GraphFeatureRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (++lineno == 1 || line.empty()) continue;
    const auto c = io::split(line, '\t');
    if (c.size() != 9) throw ParseError("graph features: expected 9 columns", lineno);
    GraphFeatureRow r;
    r.item_id = std::string(c[0]);
    double* fields[] = {&r.pagerank, &r.degree_centrality, &r.katz,
                        &r.betweenness, &r.edge_mean, &r.edge_count,
                        &r.edge_max, &r.edge_std};
    for (std::size_t i = 0; i < 8; ++i) *fields[i] = io::parse_double(c[i + 1], lineno);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace hybrec
