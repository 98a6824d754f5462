#include <cmath>
#include <numeric>

#include "doctest.h"
#include "hybrec/cooc_graph.hpp"
#include "hybrec/errors.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hybrec;
using doctest::Approx;

namespace {

struct RandomGraph {
  CoocGraph graph;
  Eigen::MatrixXd dense;
};

RandomGraph random_graph(Rng& rng, std::size_t max_nodes, double density) {
  const auto n = 1 + rng.below(max_nodes);
  std::vector<std::string> nodes;
  for (std::size_t i = 0; i < n; ++i) {
    nodes.push_back("n" + std::string(i < 10 ? "0" : "") + std::to_string(i));
  }
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<std::tuple<std::int32_t, std::int32_t, double>> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || rng.uniform() >= density) continue;
      const double v = rng.uniform(0.01, 1.0);
      w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      edges.emplace_back(static_cast<std::int32_t>(i), static_cast<std::int32_t>(j), v);
    }
  }
  return {CoocGraph(nodes, edges), w};
}

CoocGraph make(std::vector<std::string> nodes,
               std::vector<std::tuple<std::int32_t, std::int32_t, double>> edges) {
  return CoocGraph(std::move(nodes), edges);
}

}  // namespace

TEST_CASE("build_graph") {
  SUBCASE("single entry") {
    const SimMatrix m({"a", "b"}, {1, 1}, {{{1, 0.45}}, {}});
    const auto g = build_graph(m);
    CHECK(g.node_count() == 2);
    CHECK(g.edge_count() == 1);
    CHECK(g.weight("a", "b") == 0.45);
  }
  SUBCASE("empty") {
    const auto g = build_graph(SimMatrix{});
    CHECK(g.node_count() == 0);
    CHECK(pagerank(g).empty());
  }
  SUBCASE("both directions") {
    const SimMatrix m({"a", "b"}, {1, 1}, {{{1, 0.45}}, {{0, 0.08}}});
    const auto g = build_graph(m);
    CHECK(g.edge_count() == 2);
    CHECK(g.weight("a", "b") == 0.45);
    CHECK(g.weight("b", "a") == 0.08);
  }
  SUBCASE("invalid edges") {
    CHECK_THROWS_AS(make({"a"}, {{0, 0, 1.0}}), InvariantError);
    CHECK_THROWS_AS(make({"a", "b"}, {{0, 1, 0.0}}), InvariantError);
  }
}

TEST_CASE("pagerank") {
  SUBCASE("symmetric pair") {
    const auto pr = pagerank(make({"a", "b"}, {{0, 1, 1.0}, {1, 0, 1.0}}));
    CHECK(pr[0] == Approx(0.5));
    CHECK(pr[1] == Approx(0.5));
  }
  SUBCASE("single node") {
    const auto pr = pagerank(make({"a"}, {}));
    CHECK(pr[0] == Approx(1.0));
  }
  SUBCASE("chain against oracle") {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 3);
    w(0, 1) = 1;
    w(1, 2) = 1;
    const auto pr = pagerank(make({"a", "b", "c"}, {{0, 1, 1.0}, {1, 2, 1.0}}), 0.85);
    const auto expect = oracle::pagerank(w, 0.85);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(pr[i] - expect[i]) < 1e-8);
  }
  SUBCASE("random graphs") {
    Rng rng(21);
    for (int t = 0; t < 100; ++t) {
      const auto g = random_graph(rng, 50, rng.uniform(0.02, 0.3));
      const auto pr = pagerank(g.graph);
      const auto expect = oracle::pagerank(g.dense, 0.85);
      CHECK(std::abs(std::accumulate(pr.begin(), pr.end(), 0.0) - 1.0) < 1e-9);
      for (std::size_t i = 0; i < pr.size(); ++i) CHECK(std::abs(pr[i] - expect[i]) < 1e-8);
    }
  }
}

TEST_CASE("katz") {
  SUBCASE("isolated node") {
    const auto c = centralities(make({"a"}, {}));
    CHECK(c[0].degree == 0);
    CHECK(c[0].katz == Approx(1.0));
    CHECK(c[0].betweenness == 0);
  }
  SUBCASE("random graphs against the linear solve") {
    Rng rng(8);
    for (int t = 0; t < 50; ++t) {
      const auto g = random_graph(rng, 30, 0.2);
      const double alpha = 0.05;
      std::vector<double> residuals;
      const auto x = katz_centrality(g.graph, alpha, 1.0, 1e-13, 10000, &residuals);
      const auto expect = oracle::katz(g.dense, alpha, 1.0);
      for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(x[i] - expect[i]) < 1e-8);
      for (std::size_t i = 1; i < residuals.size(); ++i) {
        CHECK(residuals[i] <= residuals[i - 1] + 1e-15);
      }
    }
  }
  SUBCASE("divergent alpha") {
    const auto g = make({"a", "b"}, {{0, 1, 1.0}, {1, 0, 1.0}});
    CHECK_THROWS_AS(katz_centrality(g, 2.0, 1.0, 1e-10, 1000), NonConvergenceError);
  }
}

TEST_CASE("betweenness and degree") {
  SUBCASE("path") {
    const auto c = centralities(make({"a", "b", "c"}, {{0, 1, 0.5}, {1, 2, 0.5}}));
    CHECK(c[0].betweenness == 0);
    CHECK(c[1].betweenness == 1);
    CHECK(c[2].betweenness == 0);
  }
  SUBCASE("complete directed triangle") {
    const auto c = centralities(
        make({"a", "b", "c"}, {{0, 1, 1}, {1, 0, 1}, {0, 2, 1}, {2, 0, 1}, {1, 2, 1}, {2, 1, 1}}));
    for (const auto& x : c) CHECK(x.betweenness == 0);
  }
  SUBCASE("mutual pair degree") {
    const auto c = centralities(make({"a", "b"}, {{0, 1, 0.3}, {1, 0, 0.7}}));
    CHECK(c[0].degree == 1.0);
    CHECK(c[1].degree == 1.0);
  }
  SUBCASE("random graphs against path counting") {
    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
      const auto g = random_graph(rng, 25, 0.15);
      const auto bc = betweenness_centrality(g.graph);
      const auto expect = oracle::betweenness(g.dense);
      for (std::size_t i = 0; i < bc.size(); ++i) CHECK(bc[i] == Approx(expect[i]).epsilon(1e-12));
    }
  }
  SUBCASE("weighted distances change the route") {
    // a->c directly is weak (long), a->b->c strong (short)
    const auto g = make({"a", "b", "c"}, {{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 0.1}});
    CentralityOptions opts;
    CHECK(betweenness_centrality(g, opts)[1] == 0);
    opts.weighted_betweenness = true;
    CHECK(betweenness_centrality(g, opts)[1] == 1);
  }
  SUBCASE("pivot sampling is seeded") {
    Rng rng(1);
    const auto g = random_graph(rng, 40, 0.2);
    CentralityOptions opts;
    opts.exact_betweenness_limit = 5;
    opts.betweenness_pivots = 10;
    CHECK(betweenness_centrality(g.graph, opts) == betweenness_centrality(g.graph, opts));
  }
}

TEST_CASE("neighbor_edge_stats") {
  const auto g = make({"a", "b", "c", "d"}, {{0, 1, 0.45}, {1, 2, 0.4}, {1, 3, 0.2}});
  const auto one = neighbor_edge_stats(g, "a");
  CHECK(one.mean == 0.45);
  CHECK(one.count == 1);
  CHECK(one.max == 0.45);
  CHECK(one.std == 0);
  const auto two = neighbor_edge_stats(g, "b");
  CHECK(two.mean == Approx(0.3));
  CHECK(two.count == 2);
  CHECK(two.max == 0.4);
  CHECK(two.std == Approx(0.1));
  const auto none = neighbor_edge_stats(g, "d");
  CHECK(none.count == 0);
  CHECK(none.mean == 0);
  CHECK(neighbor_edge_stats(g, "d", EdgeDirection::In).count == 1);
  CHECK(neighbor_edge_stats(g, "b", EdgeDirection::Both).count == 3);
  CHECK_THROWS_AS(neighbor_edge_stats(g, "zz"), LookupError);
}

TEST_CASE("graph feature table") {
  testutil::TempDir dir("graph_io");
  Rng rng(3);
  const auto g = random_graph(rng, 30, 0.2);
  const auto rows = graph_features(g.graph);
  REQUIRE(rows.size() == g.graph.node_count());
  for (const auto& r : rows) {
    CHECK(r.pagerank > 0);
    CHECK(r.pagerank <= 1);
    CHECK(r.edge_std >= 0);
    CHECK(std::isfinite(r.katz));
  }
  save_graph_features(dir / "g.tsv", rows);
  CHECK(load_graph_features(dir / "g.tsv") == rows);
}
