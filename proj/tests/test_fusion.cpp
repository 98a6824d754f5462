#include <cmath>
#include <set>

#include "checks.hpp"
#include "doctest.h"
#include "hybrec/errors.hpp"
#include "hybrec/fusion.hpp"
#include "hybrec/gbdt.hpp"
#include "test_util.hpp"

using namespace hybrec;
using checks::list;
using doctest::Approx;
using testutil::session;

namespace {

FeatureMatrix one_column(std::initializer_list<double> values) {
  FeatureMatrix x(1);
  for (double v : values) {
    const double row[] = {v};
    x.push_row(row);
  }
  return x;
}

GbdtModel stump(double threshold, double left, double right, std::size_t feature_count = 1) {
  GbdtModel m;
  m.feature_count = feature_count;
  m.learning_rate = 1.0;
  RegressionTree t;
  t.nodes = {{0, threshold, 1, 2, 0}, {-1, 0, -1, -1, left}, {-1, 0, -1, -1, right}};
  m.trees.push_back(t);
  return m;
}

}  // namespace

TEST_CASE("fuse_scores") {
  SUBCASE("worked examples") {
    const auto r = checks::fuse_examples();
    CHECK(r.ok);
  }
  SUBCASE("absent items take the floor") {
    const auto f = fuse_detailed({list("a", {{"p", 2}, {"q", 1}}), list("b", {{"q", 5}}), list("c", {})});
    REQUIRE(f.entries.size() == 2);
    const auto& q = f.entries[0].item_id == "q" ? f.entries[0] : f.entries[1];
    CHECK(q.normalized[0] == 0.01);
    CHECK(q.normalized[1] == 1.0);
    CHECK(q.normalized[2] == 0.01);
    CHECK(q.present[1]);
    CHECK_FALSE(q.present[2]);
    CHECK(q.rank[2] == 121);
    CHECK(q.rank[0] == 2);
  }
  SUBCASE("cut and order") {
    std::vector<std::pair<std::string, double>> many;
    for (int i = 0; i < 200; ++i) many.emplace_back("i" + std::to_string(1000 + i), i);
    const auto f = fuse_scores({list("a", many), list("b", {}), list("c", {})});
    CHECK(f.entries.size() == 120);
    for (std::size_t i = 1; i < f.entries.size(); ++i) CHECK(f.entries[i - 1].score >= f.entries[i].score);
    CHECK(f.entries[0].item_id == "i1199");
    CHECK(fuse_scores({list("a", many), list("b", {}), list("c", {})}, 0.01, 5).entries.size() == 5);
  }
  SUBCASE("ties by id") {
    const auto f = fuse_scores({list("a", {{"y", 1}, {"x", 1}}), list("b", {}), list("c", {})});
    REQUIRE(f.entries.size() == 2);
    CHECK(f.entries[0].item_id == "x");
  }
  SUBCASE("normalization preserves each list's order") {
    Rng rng(3);
    std::vector<std::pair<std::string, double>> a;
    for (int i = 0; i < 30; ++i) a.emplace_back("i" + std::to_string(i), rng.uniform(-5, 5));
    const auto f = fuse_detailed({list("a", a), list("b", {}), list("c", {})});
    for (const auto& x : f.entries) {
      for (const auto& y : f.entries) {
        const auto sx = std::find_if(a.begin(), a.end(), [&](auto& p) { return p.first == x.item_id; })->second;
        const auto sy = std::find_if(a.begin(), a.end(), [&](auto& p) { return p.first == y.item_id; })->second;
        if (sx < sy) CHECK(x.normalized[0] <= y.normalized[0]);
      }
      CHECK(x.fused > 0);
      CHECK(x.fused <= 1);
    }
  }
  SUBCASE("errors") {
    auto other = list("b", {{"x", 1}});
    other.session_id = "t";
    CHECK_THROWS_AS(fuse_scores({list("a", {{"x", 1}}), other, list("c", {})}), ArgumentError);
    // an empty list carries no session to disagree with
    auto blank = list("c", {});
    blank.session_id = "";
    CHECK(fuse_scores({list("a", {{"x", 1}}), list("b", {}), blank}).session_id == "s");
    CHECK_THROWS_AS(fuse_scores({list("a", {}), list("b", {}), list("c", {})}, 0.0), ArgumentError);
  }
}

TEST_CASE("feature assembly") {
  ItemMeta a{"a", "UK", "x"};
  a.price = 4;
  ItemMeta b{"b", "UK", "y"};
  ItemMeta c{"c", "UK", "z"};
  c.price = 8;
  const Catalog cat({a, b, c});
  const PopularityCounts pop{{"a", 4}, {"b", 2}, {"c", 7}};
  GraphFeatureTable graph;
  graph["c"] = GraphFeatureRow{"c", 0.2, 0.5, 1.5, 3, 0.1, 2, 0.15, 0.05};
  const auto fused = fuse_detailed({list("a", {{"c", 3}, {"zz", 1}}), list("b", {{"zz", 2}}), list("c", {{"zz", 1}})});
  const auto s = session("s", {"a", "b"});
  const auto ctx = session_context(s, cat, pop);
  CHECK(ctx.mean_popularity == 3);
  CHECK(ctx.mean_price == 4);
  CHECK(ctx.has_price);
  CHECK(ctx.length == 2);

  const auto x = assemble_list_features(fused, s, cat, pop, graph);
  REQUIRE(x.rows() == 2);
  REQUIRE(x.cols == kFeatureCount);
  CHECK(feature_names().size() == kFeatureCount);
  // zz has the larger fused score
  REQUIRE(fused.entries[0].item_id == "zz");
  const auto top = x.row(0);
  CHECK(top[kSortOrder] == 0);
  CHECK(top[kRank0 + 1] == 1);
  CHECK(top[kPresent0 + 1] == 1);
  CHECK(top[kItemPriceFlag] == 0);
  CHECK(top[kGraphFlag] == 0);
  const auto second = x.row(1);
  CHECK(second[kSortOrder] == 1);
  CHECK(second[kRank0 + 1] == 121);
  CHECK(second[kPresent0 + 1] == 0);
  CHECK(second[kRank0 + 2] == 121);
  CHECK(second[kItemPrice] == 8);
  CHECK(second[kItemPopularity] == 7);
  CHECK(second[kGraph0] == 0.2);
  CHECK(second[kGraph0 + 7] == 0.05);
  CHECK(second[kGraphFlag] == 1);
  CHECK(second[kSessionMeanPopularity] == 3);

  const auto scores = assemble_list_features(fused, s, cat, pop, graph, kScoreFeatureCount);
  CHECK(scores.cols == kScoreFeatureCount);
  CHECK(scores.row(1)[0] == second[0]);
  CHECK_THROWS_AS(assemble_list_features(fused, s, cat, pop, graph, 0), ArgumentError);
}

TEST_CASE("gbdt") {
  SUBCASE("zero trees give the log-odds") {
    const auto x = one_column({1, 2, 3, 4});
    const std::vector<int> y = {1, 0, 0, 0};
    GbdtConfig cfg;
    cfg.trees = 0;
    const auto r = train_gbdt(x, y, cfg);
    CHECK(r.model.trees.empty());
    CHECK(r.model.base_score == Approx(std::log(1.0 / 3.0)).epsilon(1e-15));
    CHECK(gbdt_predict(r.model, x.row(0)) == Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("zero model predicts one half") {
    GbdtModel m;
    m.feature_count = 2;
    const double row[] = {3, -1};
    CHECK(gbdt_predict(m, row) == 0.5);
  }
  SUBCASE("hand-traced stump") {
    const auto m = stump(2.5, -0.4, 0.7);
    const double lo[] = {2.5};
    const double hi[] = {2.6};
    CHECK(gbdt_predict(m, lo) == Approx(1 / (1 + std::exp(0.4))).epsilon(1e-15));
    CHECK(gbdt_predict(m, hi) == Approx(1 / (1 + std::exp(-0.7))).epsilon(1e-15));
  }
  SUBCASE("an all-positive tree raises every prediction") {
    auto m = stump(0.0, -0.3, 0.2);
    auto more = m;
    RegressionTree plus;
    plus.nodes = {{0, 0.0, 1, 2, 0}, {-1, 0, -1, -1, 1.0}, {-1, 0, -1, -1, 1.0}};
    more.trees.push_back(plus);
    for (double v : {-2.0, 0.0, 3.0}) {
      const double row[] = {v};
      CHECK(gbdt_predict(more, row) > gbdt_predict(m, row));
    }
  }
  SUBCASE("separable stump") {
    const auto r = checks::gbdt_separable();
    INFO(r.detail);
    CHECK(r.ok);
  }
  SUBCASE("loss non-increasing") {
    const auto r = checks::gbdt_monotone(20, 99);
    INFO(r.detail);
    CHECK(r.ok);
  }
  SUBCASE("deterministic with subsampling") {
    Rng rng(5);
    auto [x, y] = checks::random_dataset(rng);
    GbdtConfig cfg;
    cfg.trees = 15;
    cfg.subsample = 0.7;
    CHECK(train_gbdt(x, y, cfg).model == train_gbdt(x, y, cfg).model);
    cfg.seed = 18;
    CHECK(train_gbdt(x, y, cfg).loss_trace.size() == 16);
  }
  SUBCASE("errors") {
    const auto x = one_column({1, 2});
    const std::vector<int> same = {1, 1};
    CHECK_THROWS_AS(train_gbdt(x, same, GbdtConfig{}), ArgumentError);
    const auto m = stump(1, 0, 1, 1);
    const double two[] = {1, 2};
    CHECK_THROWS_AS(gbdt_predict(m, two), ArgumentError);
  }
  SUBCASE("json round trip is exact") {
    testutil::TempDir dir("gbdt_io");
    Rng rng(6);
    auto [x, y] = checks::random_dataset(rng);
    GbdtConfig cfg;
    cfg.trees = 10;
    const auto m = train_gbdt(x, y, cfg).model;
    save_gbdt(dir / "m.json", m);
    const auto back = load_gbdt(dir / "m.json");
    CHECK(back == m);
    for (std::size_t r = 0; r < x.rows(); ++r) CHECK(gbdt_predict(back, x.row(r)) == gbdt_predict(m, x.row(r)));
    CHECK_THROWS(GbdtModel::from_json(nlohmann::json{{"base_score", 0}}));
  }
}

TEST_CASE("rerank") {
  const auto fused = fuse_detailed({list("a", {{"p", 3}, {"q", 2}, {"r", 1}}), list("b", {}), list("c", {})});
  const auto m = stump(0.5, -1, 1);
  SUBCASE("model order") {
    const auto x = one_column({0, 0, 1});  // p, q low; r high
    const auto out = rerank(fused, x, m, 100);
    REQUIRE(out.entries.size() == 3);
    CHECK(out.entries[0].item_id == "r");
    CHECK(out.entries[1].item_id == "p");
    CHECK(out.entries[2].item_id == "q");
  }
  SUBCASE("fused-score tiebreak and truncation") {
    const auto x = one_column({0, 0, 0});
    const auto out = rerank(fused, x, m, 2);
    REQUIRE(out.entries.size() == 2);
    CHECK(out.entries[0].item_id == "p");
    CHECK(out.entries[1].item_id == "q");
  }
  SUBCASE("row mismatch") {
    CHECK_THROWS_AS(rerank(fused, one_column({0}), m, 2), ArgumentError);
  }
  SUBCASE("permutation-truncation") {
    const auto r = checks::rerank_permutation(100);
    CHECK(r.ok);
  }
}

TEST_CASE("reranker rows") {
  std::vector<std::pair<std::string, double>> many;
  for (int i = 0; i < 50; ++i) many.emplace_back("i" + std::to_string(100 + i), i);
  const auto fused = fuse_detailed({list("a", many), list("b", {}), list("c", {})});
  const Catalog cat({ItemMeta{"i100", "UK", "x"}});
  const auto x = assemble_list_features(fused, session("s", {"i100"}), cat, {}, {});
  RerankRows rows;
  rows.features = FeatureMatrix(kFeatureCount);
  append_rerank_rows(rows, x, fused, "i120", 20, 7);
  CHECK(rows.labels.size() == 21);
  CHECK(std::count(rows.labels.begin(), rows.labels.end(), 1) == 1);
  append_rerank_rows(rows, x, fused, "absent", 20, 7);
  CHECK(rows.labels.size() == 21);

  RerankRows again;
  again.features = FeatureMatrix(kFeatureCount);
  append_rerank_rows(again, x, fused, "i120", 20, 7);
  CHECK(again.features.values == rows.features.values);

  testutil::TempDir dir("rows_io");
  save_rerank_rows(dir / "rows.tsv", rows);
  const auto back = load_rerank_rows(dir / "rows.tsv");
  CHECK(back.labels == rows.labels);
  CHECK(back.features.values == rows.features.values);
  CHECK(testutil::read_file(dir / "rows.tsv").rfind("label\tfused_score\t", 0) == 0);

  save_fused(dir / "fused.jsonl", {fused});
  const auto lists = load_fused(dir / "fused.jsonl");
  REQUIRE(lists.size() == 1);
  REQUIRE(lists[0].entries.size() == fused.entries.size());
  for (std::size_t i = 0; i < fused.entries.size(); ++i) {
    CHECK(lists[0].entries[i].item_id == fused.entries[i].item_id);
    CHECK(lists[0].entries[i].fused == fused.entries[i].fused);
    CHECK(lists[0].entries[i].rank == fused.entries[i].rank);
  }
}
