#include "hybrec/gru.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <utility>

#include <spdlog/spdlog.h>

#include "hybrec/errors.hpp"
#include "hybrec/io_util.hpp"
#include "hybrec/rng.hpp"

namespace hybrec {

namespace {

constexpr std::string_view kMagic = "HRGRU";
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& a) {
  return a.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

struct StepCache {
  Eigen::VectorXd x, h_prev, z, r, c, h;
};

Eigen::VectorXd fused_vector(const FusedSlot& slot, const GruParams& p) {
  Eigen::VectorXd v = p.item_emb.row(slot.item_row).transpose();
  double n = 1.0;
  if (slot.price_bucket >= 0) {
    v += p.price_emb.row(slot.price_bucket).transpose();
    n += 1.0;
  }
  if (slot.brand_bucket >= 0) {
    v += p.brand_emb.row(slot.brand_bucket).transpose();
    n += 1.0;
  }
  return v / n;
}

void add_fused_grad(const FusedSlot& slot, const Eigen::VectorXd& g,
                    GruParams& grads) {
  const double n = 1.0 + (slot.price_bucket >= 0) + (slot.brand_bucket >= 0);
  grads.item_emb.row(slot.item_row) += g.transpose() / n;
  if (slot.price_bucket >= 0) grads.price_emb.row(slot.price_bucket) += g.transpose() / n;
  if (slot.brand_bucket >= 0) grads.brand_emb.row(slot.brand_bucket) += g.transpose() / n;
}

std::vector<StepCache> run_gru(std::span<const Eigen::VectorXd> xs,
                               const GruParams& p) {
  std::vector<StepCache> steps;
  steps.reserve(xs.size());
  Eigen::VectorXd h = Eigen::VectorXd::Zero(p.dim);
  for (const auto& x : xs) {
    StepCache s;
    s.x = x;
    s.h_prev = h;
    s.z = sigmoid(p.wz * x + p.uz * h + p.bz);
    s.r = sigmoid(p.wr * x + p.ur * h + p.br);
    s.c = (p.wh * x + p.uh * s.r.cwiseProduct(h) + p.bh).array().tanh().matrix();
    s.h = (1.0 - s.z.array()).matrix().cwiseProduct(h) + s.z.cwiseProduct(s.c);
    h = s.h;
    steps.push_back(std::move(s));
  }
  return steps;
}

std::span<const std::string> last_items(const Session& session, int max_len) {
  std::span<const std::string> items(session.items);
  if (max_len > 0 && items.size() > static_cast<std::size_t>(max_len)) {
    items = items.subspan(items.size() - static_cast<std::size_t>(max_len));
  }
  return items;
}

}  // namespace

GruParams GruParams::zeros(int dim, std::vector<std::string> item_ids,
                           int price_buckets, int brand_buckets) {
  if (dim < 1) throw ArgumentError("dim must be >= 1");
  if (price_buckets < 1 || brand_buckets < 1) {
    throw ArgumentError("bucket counts must be >= 1");
  }
  GruParams p;
  p.dim = dim;
  std::sort(item_ids.begin(), item_ids.end());
  item_ids.erase(std::unique(item_ids.begin(), item_ids.end()), item_ids.end());
  p.item_ids = std::move(item_ids);
  for (std::size_t i = 0; i < p.item_ids.size(); ++i) {
    p.item_rows.emplace(p.item_ids[i], static_cast<std::int32_t>(i + 1));
  }
  p.item_emb = RowMatrix::Zero(static_cast<Eigen::Index>(p.item_ids.size() + 1), dim);
  p.price_emb = RowMatrix::Zero(price_buckets, dim);
  p.brand_emb = RowMatrix::Zero(brand_buckets, dim);
  for (auto* m : {&p.wz, &p.wr, &p.wh, &p.uz, &p.ur, &p.uh}) {
    *m = Eigen::MatrixXd::Zero(dim, dim);
  }
  for (auto* b : {&p.bz, &p.br, &p.bh}) *b = Eigen::VectorXd::Zero(dim);
  return p;
}

std::int32_t GruParams::row_of(std::string_view item_id) const {
  auto it = item_rows.find(std::string(item_id));
  return it == item_rows.end() ? 0 : it->second;
}

int GruParams::price_bucket(double price) const {
  const double v = std::log1p(price);
  return static_cast<int>(std::upper_bound(price_edges.begin(), price_edges.end(), v) -
                          price_edges.begin());
}

int GruParams::brand_bucket(std::string_view brand) const {
  return static_cast<int>(fnv1a(brand) % static_cast<std::uint64_t>(brand_emb.rows()));
}

bool GruParams::operator==(const GruParams& o) const {
  if (dim != o.dim || item_ids != o.item_ids || price_edges != o.price_edges) {
    return false;
  }
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return same(item_emb, o.item_emb) && same(price_emb, o.price_emb) &&
         same(brand_emb, o.brand_emb) && same(wz, o.wz) && same(wr, o.wr) &&
         same(wh, o.wh) && same(uz, o.uz) && same(ur, o.ur) &&
         same(uh, o.uh) && same(bz, o.bz) && same(br, o.br) && same(bh, o.bh);
}

std::vector<FusedSlot> resolve_slots(std::span<const std::string> item_ids,
                                     const Catalog& catalog,
                                     const GruParams& params) {
  std::vector<FusedSlot> slots;
  slots.reserve(item_ids.size());
  for (const auto& id : item_ids) {
    FusedSlot s;
    s.item_row = params.row_of(id);
    if (const auto* meta = catalog.find(id)) {
      if (meta->price) s.price_bucket = params.price_bucket(*meta->price);
      if (meta->brand) s.brand_bucket = params.brand_bucket(*meta->brand);
    }
    slots.push_back(s);
  }
  return slots;
}

std::vector<Eigen::VectorXd> fuse_embeddings(std::span<const std::string> item_ids,
                                             const Catalog& catalog,
                                             const GruParams& params) {
  if (item_ids.empty()) throw ArgumentError("fuse_embeddings: empty item list");
  std::vector<Eigen::VectorXd> out;
  for (const auto& slot : resolve_slots(item_ids, catalog, params)) {
    out.push_back(fused_vector(slot, params));
  }
  return out;
}

Eigen::VectorXd gru_forward(std::span<const Eigen::VectorXd> fused,
                            const GruParams& params) {
  if (fused.empty()) throw ArgumentError("gru_forward: empty sequence");
  return run_gru(fused, params).back().h;
}

Eigen::VectorXd encode_session(const Session& session, const Catalog& catalog,
                               const GruParams& params, int max_len) {
  if (session.items.empty()) throw ArgumentError("encode_session: empty session");
  const auto fused = fuse_embeddings(last_items(session, max_len), catalog, params);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(params.dim);
  for (const auto& f : fused) mean += f;
  mean /= static_cast<double>(fused.size());
  return gru_forward(fused, params) + mean;
}

double gru_example_loss(const GruExample& ex, const GruParams& p,
                        GruParams* grads) {
  if (ex.inputs.empty()) throw ArgumentError("gru example without inputs");
  const auto T = ex.inputs.size();
  std::vector<Eigen::VectorXd> xs;
  xs.reserve(T);
  for (const auto& s : ex.inputs) xs.push_back(fused_vector(s, p));
  const auto steps = run_gru(xs, p);

  Eigen::VectorXd rep = steps.back().h;
  for (const auto& x : xs) rep += x / static_cast<double>(T);

  const std::size_t classes = 1 + ex.negative_rows.size();
  Eigen::VectorXd logits(static_cast<Eigen::Index>(classes));
  auto row_at = [&](std::size_t j) {
    return j == 0 ? ex.target_row : ex.negative_rows[j - 1];
  };
  for (std::size_t j = 0; j < classes; ++j) {
    logits[static_cast<Eigen::Index>(j)] = p.item_emb.row(row_at(j)).dot(rep);
  }
  const double mx = logits.maxCoeff();
  Eigen::VectorXd prob = (logits.array() - mx).exp().matrix();
  const double z = prob.sum();
  prob /= z;
  const double loss = -(logits[0] - mx - std::log(z));
  if (!grads) return loss;

  // d loss / d logits = softmax - onehot(0)
  Eigen::VectorXd g_logit = prob;
  g_logit[0] -= 1.0;
  Eigen::VectorXd g_rep = Eigen::VectorXd::Zero(p.dim);
  for (std::size_t j = 0; j < classes; ++j) {
    const double g = g_logit[static_cast<Eigen::Index>(j)];
    g_rep += g * p.item_emb.row(row_at(j)).transpose();
    grads->item_emb.row(row_at(j)) += g * rep.transpose();
  }

  std::vector<Eigen::VectorXd> g_x(T, g_rep / static_cast<double>(T));
  Eigen::VectorXd g_h = g_rep;
  for (std::size_t t = T; t-- > 0;) {
    const auto& s = steps[t];
    const Eigen::VectorXd g_z = g_h.cwiseProduct(s.c - s.h_prev);
    const Eigen::VectorXd g_c = g_h.cwiseProduct(s.z);
    Eigen::VectorXd g_hprev = g_h.cwiseProduct((1.0 - s.z.array()).matrix());

    const Eigen::VectorXd g_ah = g_c.cwiseProduct((1.0 - s.c.array().square()).matrix());
    const Eigen::VectorXd rh = s.r.cwiseProduct(s.h_prev);
    grads->wh += g_ah * s.x.transpose();
    grads->uh += g_ah * rh.transpose();
    grads->bh += g_ah;
    const Eigen::VectorXd g_rh = p.uh.transpose() * g_ah;
    const Eigen::VectorXd g_r = g_rh.cwiseProduct(s.h_prev);
    g_hprev += g_rh.cwiseProduct(s.r);
    g_x[t] += p.wh.transpose() * g_ah;

    const Eigen::VectorXd g_az =
        g_z.cwiseProduct(s.z.cwiseProduct((1.0 - s.z.array()).matrix()));
    grads->wz += g_az * s.x.transpose();
    grads->uz += g_az * s.h_prev.transpose();
    grads->bz += g_az;
    g_x[t] += p.wz.transpose() * g_az;
    g_hprev += p.uz.transpose() * g_az;

    const Eigen::VectorXd g_ar =
        g_r.cwiseProduct(s.r.cwiseProduct((1.0 - s.r.array()).matrix()));
    grads->wr += g_ar * s.x.transpose();
    grads->ur += g_ar * s.h_prev.transpose();
    grads->br += g_ar;
    g_x[t] += p.wr.transpose() * g_ar;
    g_hprev += p.ur.transpose() * g_ar;

    g_h = g_hprev;
  }
  for (std::size_t t = 0; t < T; ++t) add_fused_grad(ex.inputs[t], g_x[t], *grads);
  return loss;
}

GruTrainResult train_gru(const SessionList& sessions, const Catalog& catalog,
                         const GruConfig& config) {
  if (config.epochs < 0 || config.batch < 1 || config.negatives < 0) {
    throw ArgumentError("invalid GRU training config");
  }
  std::vector<std::string> ids;
  std::vector<double> log_prices;
  for (const auto& m : catalog.items()) {
    ids.push_back(m.item_id);
    if (m.price) log_prices.push_back(std::log1p(*m.price));
  }
  GruTrainResult result;
  result.params = GruParams::zeros(config.dim, ids, config.price_buckets,
                                   config.brand_buckets);
  GruParams& p = result.params;
  std::sort(log_prices.begin(), log_prices.end());
  if (!log_prices.empty()) {
    for (int b = 1; b < config.price_buckets; ++b) {
      const auto idx = static_cast<std::size_t>(b) * log_prices.size() /
                       static_cast<std::size_t>(config.price_buckets);
      p.price_edges.push_back(log_prices[std::min(idx, log_prices.size() - 1)]);
    }
  }

  Rng rng(config.seed);
  p.for_each_tensor([&](const char* name, auto& t) {
    const std::string_view n(name);
    if (n == "bz" || n == "br" || n == "bh") return;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      t.data()[i] = rng.uniform(-config.init_scale, config.init_scale);
    }
  });

  std::vector<GruExample> examples;
  for (const auto& s : sessions) {
    if (!s.label || s.items.empty()) {
      ++result.skipped;
      continue;
    }
    const auto target = p.row_of(*s.label);
    if (target == 0) {
      ++result.skipped;
      continue;
    }
    GruExample ex;
    ex.inputs = resolve_slots(last_items(s, config.max_len), catalog, p);
    ex.target_row = target;
    examples.push_back(std::move(ex));
  }
  if (result.skipped) {
    spdlog::warn("train_gru: skipped {} sessions without a usable label",
                 result.skipped);
  }
  if (examples.empty()) throw ArgumentError("train_gru: no labeled training sessions");

  const auto n_items = static_cast<std::uint64_t>(p.item_ids.size());
  const auto n_neg = static_cast<std::size_t>(
      std::min<std::uint64_t>(static_cast<std::uint64_t>(config.negatives),
                              n_items > 0 ? n_items - 1 : 0));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  GruParams grads = GruParams::zeros(config.dim, {}, config.price_buckets,
                                     config.brand_buckets);
  grads.item_emb = RowMatrix::Zero(p.item_emb.rows(), p.dim);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      grads.for_each_tensor([](const char*, auto& t) { t.setZero(); });
      for (std::size_t k = start; k < end; ++k) {
        auto& ex = examples[order[k]];
        ex.negative_rows.clear();
        while (ex.negative_rows.size() < n_neg) {
          const auto row = static_cast<std::int32_t>(1 + rng.below(n_items));
          if (row != ex.target_row) ex.negative_rows.push_back(row);
        }
        epoch_loss += gru_example_loss(ex, p, &grads);
      }
      const double step = config.lr / static_cast<double>(end - start);
      p.item_emb -= step * grads.item_emb;
      p.price_emb -= step * grads.price_emb;
      p.brand_emb -= step * grads.brand_emb;
      p.wz -= step * grads.wz;
      p.wr -= step * grads.wr;
      p.wh -= step * grads.wh;
      p.uz -= step * grads.uz;
      p.ur -= step * grads.ur;
      p.uh -= step * grads.uh;
      p.bz -= step * grads.bz;
      p.br -= step * grads.br;
      p.bh -= step * grads.bh;
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(examples.size()));
  }
  return result;
}

CandidateList retrieve_gru(const Session& session, const Catalog& catalog,
                           const GruParams& params, std::size_t top_k,
                           int max_len) {
  CandidateList out;
  out.session_id = session.session_id;
  out.source = "gru";
  if (top_k == 0) return out;
  const Eigen::VectorXd rep = encode_session(session, catalog, params, max_len);
  const Eigen::VectorXd scores = params.item_emb.bottomRows(params.item_emb.rows() - 1) * rep;
  std::set<std::string_view> seen(session.items.begin(), session.items.end());
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < params.item_ids.size(); ++i) {
    if (!seen.contains(params.item_ids[i])) {
      ranked.emplace_back(scores[static_cast<Eigen::Index>(i)], i);
    }
  }
  const auto k = std::min(top_k, ranked.size());
  // item_ids are sorted, so the index breaks ties by id
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k),
                    ranked.end(), [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  for (std::size_t i = 0; i < k; ++i) {
    out.entries.push_back({params.item_ids[ranked[i].second], ranked[i].first});
  }
  return out;
}

void save_gru_params(const std::filesystem::path& path, const GruParams& params) {
  auto out = io::open_output(path, true);
  io::write_magic(out, kMagic, kVersion);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.dim));
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.item_ids.size()));
  for (const auto& id : params.item_ids) io::write_string(out, id);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.price_edges.size()));
  io::write_doubles(out, params.price_edges.data(), params.price_edges.size());
  params.for_each_tensor([&](const char*, const auto& t) {
    io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows()));
    io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols()));
    io::write_doubles(out, t.data(), static_cast<std::size_t>(t.size()));
  });
}

GruParams load_gru_params(const std::filesystem::path& path) {
  auto in = io::open_input(path, true);
  io::expect_magic(in, kMagic, kVersion);
  GruParams p;
  p.dim = static_cast<int>(io::read_pod<std::uint32_t>(in));
  const auto n = io::read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    p.item_ids.push_back(io::read_string(in));
    p.item_rows.emplace(p.item_ids.back(), static_cast<std::int32_t>(i + 1));
  }
  p.price_edges.resize(io::read_pod<std::uint32_t>(in));
  io::read_doubles(in, p.price_edges.data(), p.price_edges.size());
  p.for_each_tensor([&](const char* name, auto& t) {
    const auto rows = io::read_pod<std::uint32_t>(in);
    const auto cols = io::read_pod<std::uint32_t>(in);
    t.resize(rows, cols);
    if (t.cols() != static_cast<Eigen::Index>(cols)) {
      throw ParseError(std::string("GRU params: bad shape for ") + name);
    }
    io::read_doubles(in, t.data(), static_cast<std::size_t>(t.size()));
  });
  if (p.item_emb.rows() != static_cast<Eigen::Index>(n + 1) || p.item_emb.cols() != p.dim) {
    throw ParseError("GRU params: embedding table does not match header");
  }
  return p;
}

void save_loss_trace(const std::filesystem::path& path,
                     const std::vector<double>& trace) {
  auto out = io::open_output(path);
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << i << ',' << io::format_double(trace[i]) << '\n';
  }
}

}  // namespace hybrec
