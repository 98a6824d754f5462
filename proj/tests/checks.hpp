#pragma once

// Property checks shared by the unit tests and the acceptance runner. Each
// returns whether it held plus a short measurement for the log.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "hybrec/cooc_graph.hpp"
#include "hybrec/fusion.hpp"
#include "hybrec/gbdt.hpp"
#include "hybrec/gru.hpp"
#include "hybrec/itemcf.hpp"
#include "hybrec/metrics.hpp"
#include "hybrec/rng.hpp"
#include "hybrec/text_dcl.hpp"
#include "oracles.hpp"

namespace checks {

struct Outcome {
  bool ok = true;
  std::string detail;
};

inline std::string fmt(const char* label, double v) {
  std::ostringstream s;
  s << label << "=" << v;
  return s.str();
}

// ---------------------------------------------------------------- itemcf

inline hybrec::SessionList random_sessions(hybrec::Rng& rng, std::size_t max_sessions,
                                           std::size_t max_items) {
  hybrec::SessionList out;
  const auto n = 1 + rng.below(max_sessions);
  for (std::size_t s = 0; s < n; ++s) {
    hybrec::Session sess{"s" + std::to_string(s), "UK", {}, std::nullopt};
    const auto len = 1 + rng.below(6);
    for (std::size_t i = 0; i < len; ++i) sess.items.push_back("i" + std::to_string(rng.below(max_items)));
    if (rng.uniform() < 0.7) sess.label = "i" + std::to_string(rng.below(max_items));
    out.push_back(std::move(sess));
  }
  return out;
}

inline Outcome itemcf_oracle(int trials, std::uint64_t seed = 99) {
  hybrec::Rng rng(seed);
  double worst = 0;
  bool counts_match = true;
  for (int t = 0; t < trials; ++t) {
    const auto sessions = random_sessions(rng, 20, 10);
    const auto m = hybrec::build_similarity(sessions);
    const auto expect = oracle::itemcf(sessions);
    for (const auto& [key, value] : expect) {
      worst = std::max(worst, std::abs(m.sim(key.first, key.second) - value));
    }
    counts_match = counts_match && m.entry_count() == expect.size();
  }
  const auto ex = hybrec::build_similarity({hybrec::Session{"1", "UK", {"a", "b"}, std::nullopt}});
  const bool example = ex.sim("a", "b") == 0.45 &&
                       std::abs(ex.sim("b", "a") - 0.25 / 3.0) < 1e-15;
  return {worst <= 1e-12 && counts_match && example,
          fmt("max_abs_err", worst) + (counts_match ? "" : " entry-count-mismatch") +
              (example ? "" : " worked-example-mismatch")};
}

// -------------------------------------------------------------- gradients

// Raw pointers to every parameter tensor, in visiting order.
template <typename P>
std::vector<std::pair<double*, std::size_t>> gru_blocks(P& p) {
  std::vector<std::pair<double*, std::size_t>> out;
  p.for_each_tensor([&](const char*, auto& t) {
    out.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  });
  return out;
}

inline Outcome gru_gradcheck(int trials, std::uint64_t seed = 31) {
  hybrec::Rng rng(seed);
  double worst = 0;
  std::size_t compared = 0;
  for (int t = 0; t < trials; ++t) {
    const int d = 1 + static_cast<int>(rng.below(4));
    const auto n = 2 + rng.below(4);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("i" + std::to_string(i));
    auto p = hybrec::GruParams::zeros(d, ids, 2, 2);
    p.for_each_tensor([&](const char*, auto& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-0.8, 0.8);
    });
    hybrec::GruExample ex;
    const auto len = 1 + rng.below(3);
    for (std::size_t i = 0; i < len; ++i) {
      hybrec::FusedSlot s;
      s.item_row = static_cast<std::int32_t>(rng.below(n + 1));
      s.price_bucket = static_cast<int>(rng.below(3)) - 1;
      s.brand_bucket = static_cast<int>(rng.below(3)) - 1;
      ex.inputs.push_back(s);
    }
    ex.target_row = static_cast<std::int32_t>(1 + rng.below(n));
    const auto negs = 1 + rng.below(3);
    while (ex.negative_rows.size() < negs) {
      const auto r = static_cast<std::int32_t>(1 + rng.below(n));
      if (r != ex.target_row) ex.negative_rows.push_back(r);
    }

    auto grads = hybrec::GruParams::zeros(d, ids, 2, 2);
    hybrec::gru_example_loss(ex, p, &grads);
    const auto pb = gru_blocks(p);
    const auto gb = gru_blocks(grads);
    const double h = 1e-5;
    for (std::size_t b = 0; b < pb.size(); ++b) {
      for (std::size_t i = 0; i < pb[b].second; ++i) {
        double& x = pb[b].first[i];
        const double orig = x;
        x = orig + h;
        const double up = hybrec::gru_example_loss(ex, p, nullptr);
        x = orig - h;
        const double down = hybrec::gru_example_loss(ex, p, nullptr);
        x = orig;
        worst = std::max(worst, oracle::relative_error((up - down) / (2 * h), gb[b].first[i]));
        ++compared;
      }
    }
  }
  return {worst < 1e-4, fmt("max_rel_err", worst) + " " + fmt("entries", static_cast<double>(compared))};
}

inline hybrec::RowMatrix random_units(hybrec::Rng& rng, std::size_t k, int d) {
  hybrec::RowMatrix m(static_cast<Eigen::Index>(k), d);
  for (std::size_t j = 0; j < k; ++j) {
    m.row(static_cast<Eigen::Index>(j)) = oracle::random_unit(rng, d).transpose();
  }
  return m;
}

inline Outcome arccon_gradcheck(int trials, std::uint64_t seed = 57) {
  hybrec::Rng rng(seed);
  const double margins[] = {0.0, 0.2, 0.5};
  double worst = 0;
  for (int t = 0; t < trials; ++t) {
    const int d = 2 + static_cast<int>(rng.below(7));
    const auto k = rng.below(17);
    const double m = margins[t % 3];
    const double s = rng.uniform(1.0, 20.0);
    const Eigen::VectorXd anchor = oracle::random_unit(rng, d);
    const Eigen::VectorXd positive = oracle::random_unit(rng, d);
    const auto negatives = random_units(rng, k, d);
    const auto r = hybrec::arccon_loss(anchor, positive, negatives, s, m);
    const double h = 1e-5;
    for (int i = 0; i < d; ++i) {
      Eigen::VectorXd a = anchor;
      a(i) += h;
      const double up = hybrec::arccon_loss_raw(a, positive, negatives, s, m).loss;
      a(i) = anchor(i) - h;
      const double down = hybrec::arccon_loss_raw(a, positive, negatives, s, m).loss;
      worst = std::max(worst, oracle::relative_error((up - down) / (2 * h), r.grad_anchor(i)));
    }
  }
  return {worst < 1e-4, fmt("max_rel_err", worst)};
}

// ------------------------------------------------------------ contrastive

inline Outcome queue_fifo(std::size_t k, int rounds, std::uint64_t seed = 5) {
  hybrec::Rng rng(seed);
  const int d = 3;
  hybrec::MemoryQueue q(k, d);
  std::vector<Eigen::VectorXd> pushed;
  bool ok = true;
  for (std::size_t i = 0; i < k * static_cast<std::size_t>(rounds); ++i) {
    pushed.push_back(oracle::random_unit(rng, d));
    q.push(std::span<const Eigen::VectorXd>(&pushed.back(), 1));
    ok = ok && q.fill() == std::min(k, pushed.size());
  }
  const auto got = q.ordered();
  ok = ok && got.size() == k;
  for (std::size_t i = 0; ok && i < k; ++i) ok = got[i] == pushed[pushed.size() - k + i];
  return {ok, fmt("capacity", static_cast<double>(k)) + " " + fmt("pushes", static_cast<double>(pushed.size()))};
}

inline hybrec::EncoderTensors random_encoder(hybrec::Rng& rng, std::size_t vocab, int dim,
                                             double scale) {
  auto t = hybrec::EncoderTensors::zeros(vocab, dim);
  t.for_each([&](auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  });
  return t;
}

struct ContrastiveFixture {
  hybrec::TextEncoderParams params;
  hybrec::DualQueues queues{hybrec::MemoryQueue(8, 4), hybrec::MemoryQueue(8, 4)};
  std::vector<hybrec::TextPair> batch;
  hybrec::DclConfig config;
};

inline ContrastiveFixture contrastive_fixture(std::uint64_t seed) {
  hybrec::Rng rng(seed);
  ContrastiveFixture f;
  const int d = 4;
  f.params.vocab = hybrec::Vocabulary::from_tokens({"[OOV]", "[SEP]", "a", "b", "c", "d", "e"});
  f.params.base = random_encoder(rng, f.params.vocab.size(), d, 0.5);
  f.params.momentum = random_encoder(rng, f.params.vocab.size(), d, 0.5);
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd a = oracle::random_unit(rng, d);
    const Eigen::VectorXd b = oracle::random_unit(rng, d);
    f.queues.sequences.push(std::span<const Eigen::VectorXd>(&a, 1));
    f.queues.items.push(std::span<const Eigen::VectorXd>(&b, 1));
  }
  for (int i = 0; i < 3; ++i) {
    hybrec::TextPair p;
    p.session_segments.push_back({2 + static_cast<std::int32_t>(rng.below(5)),
                                  2 + static_cast<std::int32_t>(rng.below(5))});
    p.target_tokens = {2 + static_cast<std::int32_t>(rng.below(5))};
    f.batch.push_back(p);
  }
  f.config.dim = d;
  f.config.batch = 3;
  f.config.queue_size = 8;
  return f;
}

// Backprop leaves momentum tensors and queues alone; the loss call changes
// the queues only by pushing the batch's momentum vectors.
inline Outcome stop_gradient(int trials) {
  bool ok = true;
  for (int t = 0; t < trials && ok; ++t) {
    auto f = contrastive_fixture(static_cast<std::uint64_t>(100 + t));
    const auto momentum_before = f.params.momentum;
    const auto queues_before = f.queues;
    auto grads = hybrec::EncoderTensors::zeros(f.params.vocab.size(), 4);
    const auto step = hybrec::dcl_forward_backward(f.batch, f.params, f.queues, f.config, &grads);
    ok = f.params.momentum == momentum_before && f.queues.sequences == queues_before.sequences &&
         f.queues.items == queues_before.items;

    auto expect = queues_before;
    expect.sequences.push(step.momentum_sessions);
    expect.items.push(step.momentum_targets);
    const double loss = hybrec::dcl_loss(f.batch, f.params, f.queues, f.config);
    ok = ok && loss == step.loss && f.params.momentum == momentum_before &&
         f.queues.sequences == expect.sequences && f.queues.items == expect.items;
  }
  return {ok, fmt("trials", trials)};
}

// Fixed base, momentum iterated `steps` times; the gap must equal
// beta^steps times the initial gap.
inline Outcome ema_convergence(double beta, int steps, std::uint64_t seed = 9) {
  hybrec::Rng rng(seed);
  hybrec::TextEncoderParams p;
  p.vocab = hybrec::Vocabulary::from_tokens({"[OOV]", "[SEP]", "a"});
  p.base = random_encoder(rng, p.vocab.size(), 3, 1.0);
  p.momentum = random_encoder(rng, p.vocab.size(), 3, 1.0);
  const auto base = p.base;
  const auto start = p.momentum;
  for (int i = 0; i < steps; ++i) hybrec::momentum_update(p, beta);
  const double factor = std::pow(beta, steps);
  double worst = 0;
  auto mom = p.momentum;
  auto init = start;
  std::vector<const double*> b_ptr, m_ptr, i_ptr;
  std::vector<std::size_t> sizes;
  auto base_copy = base;
  base_copy.for_each([&](auto& m) {
    b_ptr.push_back(m.data());
    sizes.push_back(static_cast<std::size_t>(m.size()));
  });
  mom.for_each([&](auto& m) { m_ptr.push_back(m.data()); });
  init.for_each([&](auto& m) { i_ptr.push_back(m.data()); });
  for (std::size_t b = 0; b < sizes.size(); ++b) {
    for (std::size_t i = 0; i < sizes[b]; ++i) {
      const double gap = m_ptr[b][i] - b_ptr[b][i];
      worst = std::max(worst, std::abs(gap - factor * (i_ptr[b][i] - b_ptr[b][i])));
    }
  }
  const bool base_kept = p.base == base;
  return {worst <= 1e-9 && base_kept, fmt("max_dev", worst) + (base_kept ? "" : " base-modified")};
}

inline Outcome margin_monotonicity(int configs, std::uint64_t seed = 71) {
  hybrec::Rng rng(seed);
  bool ok = true;
  double worst_drop = 0;
  for (int c = 0; c < configs; ++c) {
    const int d = 2 + static_cast<int>(rng.below(7));
    const Eigen::VectorXd anchor = oracle::random_unit(rng, d);
    Eigen::VectorXd positive = anchor + 0.8 * oracle::random_unit(rng, d);
    positive.normalize();
    const auto negatives = random_units(rng, rng.below(17), d);
    const double s = rng.uniform(1.0, 20.0);
    const double theta = std::acos(std::clamp(anchor.dot(positive), -1.0, 1.0));
    const double top = std::min(std::numbers::pi / 2 - theta, std::numbers::pi / 2) * (1 - 1e-9);
    double prev = -1;
    for (int i = 0; i <= 40; ++i) {
      const double m = top * i / 40.0;
      const double loss = hybrec::arccon_loss(anchor, positive, negatives, s, m).loss;
      if (i > 0 && loss < prev) {
        ok = false;
        worst_drop = std::max(worst_drop, prev - loss);
      }
      prev = loss;
    }
  }
  return {ok, fmt("max_drop", worst_drop)};
}

// ------------------------------------------------------------------ graph

struct RandomGraph {
  hybrec::CoocGraph graph;
  Eigen::MatrixXd dense;
};

inline RandomGraph random_graph(hybrec::Rng& rng, std::size_t max_nodes, double density) {
  const auto n = 1 + rng.below(max_nodes);
  std::vector<std::string> nodes;
  for (std::size_t i = 0; i < n; ++i) nodes.push_back("n" + std::string(i < 10 ? "0" : "") + std::to_string(i));
  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(ni, ni);
  std::vector<std::tuple<std::int32_t, std::int32_t, double>> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || rng.uniform() >= density) continue;
      const double v = rng.uniform(0.01, 1.0);
      w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      edges.emplace_back(static_cast<std::int32_t>(i), static_cast<std::int32_t>(j), v);
    }
  }
  return {hybrec::CoocGraph(nodes, edges), w};
}

inline Outcome graph_analytics(int pagerank_graphs, int katz_graphs, std::uint64_t seed = 21) {
  hybrec::Rng rng(seed);
  double sum_err = 0, pr_err = 0, katz_err = 0;
  for (int t = 0; t < pagerank_graphs; ++t) {
    const auto g = random_graph(rng, 50, rng.uniform(0.02, 0.3));
    const auto pr = hybrec::pagerank(g.graph);
    const auto expect = oracle::pagerank(g.dense, 0.85);
    sum_err = std::max(sum_err, std::abs(std::accumulate(pr.begin(), pr.end(), 0.0) - 1.0));
    for (std::size_t i = 0; i < pr.size(); ++i) pr_err = std::max(pr_err, std::abs(pr[i] - expect[i]));
  }
  for (int t = 0; t < katz_graphs; ++t) {
    const auto g = random_graph(rng, 30, 0.2);
    const auto x = hybrec::katz_centrality(g.graph, 0.05, 1.0, 1e-13, 10000);
    const auto expect = oracle::katz(g.dense, 0.05, 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) katz_err = std::max(katz_err, std::abs(x[i] - expect[i]));
  }
  using E = std::tuple<std::int32_t, std::int32_t, double>;
  const hybrec::CoocGraph path({"a", "b", "c"}, std::vector<E>{{0, 1, 0.5}, {1, 2, 0.5}});
  const hybrec::CoocGraph tri({"a", "b", "c"},
                              std::vector<E>{{0, 1, 1}, {1, 0, 1}, {0, 2, 1}, {2, 0, 1}, {1, 2, 1}, {2, 1, 1}});
  const auto bp = hybrec::betweenness_centrality(path);
  const auto bt = hybrec::betweenness_centrality(tri);
  const bool between = bp[1] == 1 && bp[0] == 0 && bp[2] == 0 && bt[0] == 0 && bt[1] == 0 && bt[2] == 0;
  return {sum_err <= 1e-9 && pr_err <= 1e-8 && katz_err <= 1e-8 && between,
          fmt("pr_sum_err", sum_err) + " " + fmt("pr_oracle_err", pr_err) + " " +
              fmt("katz_err", katz_err) + (between ? "" : " betweenness-mismatch")};
}

// ----------------------------------------------------------------- fusion

inline hybrec::CandidateList list(std::string source,
                                  std::vector<std::pair<std::string, double>> entries) {
  hybrec::CandidateList l;
  l.session_id = "s";
  l.source = std::move(source);
  for (auto& [id, score] : entries) l.entries.push_back({id, score});
  return l;
}

// The three worked fuse examples, compared with ==.
inline Outcome fuse_examples() {
  bool ok = true;
  // normalized (0.5, 0.4, 0.2): each list spans [floor, 1] via anchors
  // that carry the extremes, so `x` lands exactly on the target values
  {
    const double f = 0.01;
    auto mk = [&](double target) {
      // raw scores 0 and 1 map to floor and 1; target maps from t with
      // f + t (1 - f) = target
      const double t = (target - f) / (1 - f);
      return std::vector<std::pair<std::string, double>>{{"hi", 1.0}, {"lo", 0.0}, {"x", t}};
    };
    const auto fused = hybrec::fuse_detailed({list("a", mk(0.5)), list("b", mk(0.4)), list("c", mk(0.2))}, f);
    for (const auto& e : fused.entries) {
      if (e.item_id != "x") continue;
      ok = ok && e.fused == e.normalized[0] * e.normalized[1] * e.normalized[2] &&
           std::abs(e.fused - 0.04) < 1e-15;
    }
  }
  {
    const auto fused = hybrec::fuse_scores({list("a", {{"p", 3.0}, {"q", 1.0}, {"r", 2.0}}), list("b", {}),
                                            list("c", {})});
    // r normalizes to 0.01 + 0.5 * 0.99
    for (const auto& e : fused.entries) {
      if (e.item_id == "r") ok = ok && e.score == (0.01 + 0.5 * 0.99) * 0.01 * 0.01;
      if (e.item_id == "p") ok = ok && e.score == 1.0 * 0.01 * 0.01;
    }
  }
  {
    const auto fused = hybrec::fuse_scores({list("a", {{"z", 7.0}}), list("b", {{"z", 0.3}}), list("c", {{"z", -2.0}})});
    ok = ok && fused.entries.size() == 1 && fused.entries[0].item_id == "z" && fused.entries[0].score == 1.0;
  }
  {
    const auto fused = hybrec::fuse_scores({list("a", {}), list("b", {}), list("c", {})});
    ok = ok && fused.entries.empty();
  }
  return {ok, ok ? "examples exact" : "example mismatch"};
}

inline std::pair<hybrec::FeatureMatrix, std::vector<int>> random_dataset(hybrec::Rng& rng) {
  const auto cols = 1 + rng.below(5);
  const auto rows = 20 + rng.below(200);
  hybrec::FeatureMatrix x(cols);
  std::vector<int> y;
  std::vector<double> w(cols);
  for (auto& v : w) v = rng.uniform(-2, 2);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> row(cols);
    double z = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      // some columns discrete, some continuous
      row[c] = c % 2 ? std::floor(rng.uniform(0, 4)) : rng.uniform(-1, 1);
      z += w[c] * row[c];
    }
    x.push_row(row);
    y.push_back(rng.uniform() < 1 / (1 + std::exp(-z)) ? 1 : 0);
  }
  y[0] = 1;
  y[1] = 0;
  return {x, y};
}

inline Outcome gbdt_monotone(int datasets, std::uint64_t seed = 13) {
  hybrec::Rng rng(seed);
  double worst_rise = 0;
  for (int t = 0; t < datasets; ++t) {
    auto [x, y] = random_dataset(rng);
    hybrec::GbdtConfig cfg;
    cfg.trees = 30;
    cfg.depth = 1 + static_cast<int>(rng.below(5));
    cfg.lr = rng.uniform(0.05, 1.0);
    cfg.bins = 2 + static_cast<int>(rng.below(30));
    cfg.seed = static_cast<std::uint64_t>(t);
    const auto result = hybrec::train_gbdt(x, y, cfg);
    for (std::size_t i = 1; i < result.loss_trace.size(); ++i) {
      worst_rise = std::max(worst_rise, result.loss_trace[i] - result.loss_trace[i - 1]);
    }
  }
  return {worst_rise <= 0, fmt("max_rise", worst_rise)};
}

// Single feature split at 5, depth 1, one tree.
inline Outcome gbdt_separable() {
  hybrec::FeatureMatrix x(1);
  std::vector<int> y;
  for (int v = 0; v <= 10; ++v) {
    if (v == 5) continue;
    const double row[] = {static_cast<double>(v)};
    x.push_row(row);
    y.push_back(v > 5 ? 1 : 0);
  }
  hybrec::GbdtConfig cfg;
  cfg.trees = 1;
  cfg.depth = 1;
  const auto model = hybrec::train_gbdt(x, y, cfg).model;
  double min_pos = 1, max_neg = 0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double p = hybrec::gbdt_predict(model, x.row(r));
    if (y[r]) min_pos = std::min(min_pos, p);
    else max_neg = std::max(max_neg, p);
  }
  return {min_pos > max_neg, fmt("min_pos", min_pos) + " " + fmt("max_neg", max_neg)};
}

inline Outcome rerank_permutation(int trials, std::uint64_t seed = 3) {
  hybrec::Rng rng(seed);
  bool ok = true;
  for (int t = 0; t < trials && ok; ++t) {
    std::array<hybrec::CandidateList, 3> lists;
    for (auto& l : lists) {
      l.session_id = "s";
      const auto n = rng.below(30);
      std::set<std::string> seen;
      for (std::size_t i = 0; i < n; ++i) {
        const auto id = "i" + std::to_string(rng.below(60));
        if (seen.insert(id).second) l.entries.push_back({id, rng.uniform()});
      }
    }
    const auto fused = hybrec::fuse_detailed(lists, 0.01, 1 + static_cast<int>(rng.below(40)));
    hybrec::FeatureMatrix f(2);
    for (std::size_t i = 0; i < fused.entries.size(); ++i) {
      const double row[] = {rng.uniform(), std::floor(rng.uniform(0, 3))};
      f.push_row(row);
    }
    hybrec::GbdtModel model;
    model.feature_count = 2;
    hybrec::RegressionTree tree;
    tree.nodes = {{0, 0.5, 1, 2, 0}, {-1, 0, -1, -1, -1.0}, {-1, 0, -1, -1, 1.0}};
    model.trees.push_back(tree);
    const auto top_k = rng.below(50);
    const auto out = hybrec::rerank(fused, f, model, top_k);
    std::set<std::string> in_ids, out_ids;
    for (const auto& e : fused.entries) in_ids.insert(e.item_id);
    for (const auto& e : out.entries) out_ids.insert(e.item_id);
    ok = out.entries.size() == std::min(top_k, fused.entries.size()) &&
         out_ids.size() == out.entries.size() &&
         std::includes(in_ids.begin(), in_ids.end(), out_ids.begin(), out_ids.end());
  }
  return {ok, fmt("trials", trials)};
}

// ----------------------------------------------------------------- metric

inline Outcome mrr_definition() {
  std::vector<std::string> ranked;
  for (int i = 0; i < 120; ++i) ranked.push_back("i" + std::to_string(i));
  bool ok = true;
  for (int r = 1; r <= 120; ++r) {
    const double expect = r <= 100 ? 1.0 / r : 0.0;
    ok = ok && hybrec::mrr_at_k(ranked, ranked[static_cast<std::size_t>(r - 1)], 100) == expect;
  }
  ok = ok && hybrec::mrr_at_k(ranked, "absent", 100) == 0.0;
  return {ok, ok ? "ranks 1..120 exact" : "definition mismatch"};
}

// A random ordering of C candidates containing the truth.
inline Outcome mrr_monte_carlo(std::size_t candidates, int trials, std::uint64_t seed = 77) {
  hybrec::Rng rng(seed);
  std::vector<std::string> ranked;
  for (std::size_t i = 0; i < candidates; ++i) ranked.push_back("c" + std::to_string(i));
  double sum = 0;
  for (int t = 0; t < trials; ++t) {
    rng.shuffle(ranked.begin(), ranked.end());
    sum += hybrec::mrr_at_k(ranked, "c0", 100);
  }
  const double c = static_cast<double>(candidates);
  double mean = 0, second = 0;
  for (std::size_t r = 1; r <= candidates; ++r) {
    const double v = r <= 100 ? 1.0 / static_cast<double>(r) : 0.0;
    mean += v / c;
    second += v * v / c;
  }
  const double sigma = std::sqrt((second - mean * mean) / trials);
  const double observed = sum / trials;
  return {std::abs(observed - mean) <= 3 * sigma,
          fmt("observed", observed) + " " + fmt("expected", mean) + " " + fmt("sigma", sigma)};
}

}  // namespace checks
