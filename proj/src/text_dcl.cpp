#include "hybrec/text_dcl.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "hybrec/errors.hpp"
#include "hybrec/io_util.hpp"
#include "hybrec/rng.hpp"

namespace hybrec {

namespace {

constexpr std::string_view kEncoderMagic = "HRTXT";
constexpr std::string_view kIndexMagic = "HRIDX";
constexpr std::uint32_t kVersion = 1;
constexpr double kUnitTolerance = 1e-6;
constexpr double kCosClamp = 1.0 - 1e-7;

void check_unit(const Eigen::VectorXd& v, const char* what) {
  const double n = v.norm();
  if (!(std::abs(n - 1.0) <= kUnitTolerance)) {
    throw InvariantError(std::string(what) + " is not unit norm (|v| = " +
                         std::to_string(n) + ")");
  }
}

// Encodes a list of segments into one unit vector. One segment is the
// encoder output itself; several are averaged and renormalized.
struct SegmentedEncoding {
  std::vector<EncoderCache> segments;
  Eigen::VectorXd unit;
  double mean_norm = 0;  // only for several segments
};

Eigen::VectorXd fallback_unit(int dim) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
  u[0] = 1.0;
  return u;
}

SegmentedEncoding encode_segments(const EncoderTensors& t,
                                  const std::vector<std::vector<std::int32_t>>& segs) {
  SegmentedEncoding enc;
  for (const auto& s : segs) enc.segments.push_back(encoder_forward(t, s));
  if (enc.segments.size() == 1) {
    enc.unit = enc.segments[0].unit;
    return enc;
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(t.dim());
  for (const auto& c : enc.segments) mean += c.unit;
  mean /= static_cast<double>(enc.segments.size());
  enc.mean_norm = mean.norm();
  enc.unit = enc.mean_norm > 1e-12 ? Eigen::VectorXd(mean / enc.mean_norm)
                                   : fallback_unit(t.dim());
  return enc;
}

void backward_segments(const EncoderTensors& t, const SegmentedEncoding& enc,
                       const Eigen::VectorXd& g_unit, EncoderTensors& grads) {
  if (enc.segments.size() == 1) {
    encoder_backward(t, enc.segments[0], g_unit, grads);
    return;
  }
  if (enc.mean_norm <= 1e-12) return;
  const Eigen::VectorXd g_mean =
      (g_unit - enc.unit * enc.unit.dot(g_unit)) / enc.mean_norm;
  const Eigen::VectorXd g_seg = g_mean / static_cast<double>(enc.segments.size());
  for (const auto& c : enc.segments) encoder_backward(t, c, g_seg, grads);
}

void write_matrix(std::ostream& out, const auto& m) {
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  io::write_doubles(out, m.data(), static_cast<std::size_t>(m.size()));
}

void read_matrix(std::istream& in, auto& m) {
  const auto rows = io::read_pod<std::uint32_t>(in);
  const auto cols = io::read_pod<std::uint32_t>(in);
  m.resize(rows, cols);
  io::read_doubles(in, m.data(), static_cast<std::size_t>(m.size()));
}

std::string join_sep(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += kSepToken;
    out += parts[i];
  }
  return out;
}

std::vector<std::vector<std::int32_t>> session_segments(
    const std::vector<std::string>& texts, const Vocabulary& vocab,
    SessionTextMode mode) {
  std::vector<std::vector<std::int32_t>> segs;
  if (mode == SessionTextMode::Concat) {
    segs.push_back(vocab.encode(join_sep(texts)));
  } else {
    for (const auto& t : texts) segs.push_back(vocab.encode(t));
  }
  return segs;
}

}  // namespace

std::string render_item_text(const ItemMeta& meta) {
  std::vector<std::string> parts;
  if (!meta.title.empty()) parts.push_back(meta.title);
  for (const auto* f : {&meta.brand, &meta.color, &meta.size, &meta.model,
                        &meta.material, &meta.author, &meta.description}) {
    if (*f && !(*f)->empty()) parts.push_back(**f);
  }
  if (parts.empty()) {
    throw ArgumentError("item " + meta.item_id + " has no attribute text");
  }
  return join_sep(parts);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.substr(i, kSepToken.size()) == kSepToken) {
      flush();
      out.emplace_back(kSepToken);
      i += kSepToken.size();
      continue;
    }
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
    ++i;
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  tokens_.emplace_back(kOovToken);
  tokens_.emplace_back(kSepToken);
  for (auto& t : tokens) {
    if (t != kOovToken && t != kSepToken) tokens_.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second) {
      throw InvariantError("duplicate vocabulary token " + tokens_[i]);
    }
  }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, int min_freq) {
  std::map<std::string, int> freq;
  for (const auto& t : texts) {
    for (auto& tok : tokenize(t)) ++freq[std::move(tok)];
  }
  std::vector<std::string> kept;
  for (const auto& [tok, f] : freq) {
    if (f >= min_freq) kept.push_back(tok);
  }
  return Vocabulary(std::move(kept));
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < 2 || tokens[0] != kOovToken || tokens[1] != kSepToken) {
    throw ParseError("vocabulary must start with the special tokens");
  }
  return Vocabulary(std::vector<std::string>(tokens.begin() + 2, tokens.end()));
}

std::int32_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kOov : it->second;
}

std::vector<std::int32_t> Vocabulary::encode(std::string_view text) const {
  std::vector<std::int32_t> ids;
  for (const auto& tok : tokenize(text)) ids.push_back(id(tok));
  return ids;
}

EncoderTensors EncoderTensors::zeros(std::size_t vocab, int dim) {
  EncoderTensors t;
  t.embedding = RowMatrix::Zero(static_cast<Eigen::Index>(vocab), dim);
  for (auto* m : {&t.wq, &t.wk, &t.wv, &t.wo}) *m = Eigen::MatrixXd::Zero(dim, dim);
  return t;
}

bool EncoderTensors::operator==(const EncoderTensors& o) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return same(embedding, o.embedding) && same(wq, o.wq) && same(wk, o.wk) &&
         same(wv, o.wv) && same(wo, o.wo);
}

EncoderCache encoder_forward(const EncoderTensors& t,
                             std::span<const std::int32_t> tokens) {
  EncoderCache c;
  c.tokens.assign(tokens.begin(), tokens.end());
  if (c.tokens.empty()) c.tokens.push_back(Vocabulary::kOov);
  const auto n = static_cast<Eigen::Index>(c.tokens.size());
  const int d = t.dim();
  c.x.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    c.x.row(i) = t.embedding.row(c.tokens[static_cast<std::size_t>(i)]);
  }
  c.q = c.x * t.wq;
  c.k = c.x * t.wk;
  c.v = c.x * t.wv;
  c.attn = (c.q * c.k.transpose()) / std::sqrt(static_cast<double>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    auto row = c.attn.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  c.h = c.attn * c.v;
  const Eigen::RowVectorXd pooled =
      c.x.colwise().mean() + c.h.colwise().mean() * t.wo;
  c.pooled = pooled.transpose();
  c.norm = c.pooled.norm();
  c.unit = c.norm > 1e-12 ? Eigen::VectorXd(c.pooled / c.norm) : fallback_unit(d);
  return c;
}

void encoder_backward(const EncoderTensors& t, const EncoderCache& c,
                      const Eigen::VectorXd& g_unit, EncoderTensors& grads) {
  if (c.norm <= 1e-12) return;
  const auto n = static_cast<Eigen::Index>(c.tokens.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::VectorXd g_pooled = (g_unit - c.unit * c.unit.dot(g_unit)) / c.norm;

  // Every output row receives g_pooled / n.
  const Eigen::VectorXd h_mean = c.h.colwise().mean().transpose();
  grads.wo += h_mean * g_pooled.transpose();
  const Eigen::RowVectorXd g_h_row = (t.wo * g_pooled).transpose() * inv_n;

  // g_H has identical rows, so g_A = 1 (V g_h_row^T)^T.
  const Eigen::VectorXd v_dot = c.v * g_h_row.transpose();  // n
  RowMatrix g_s(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto a = c.attn.row(i);
    const double centre = a.dot(v_dot.transpose());
    g_s.row(i) = a.array() * (v_dot.transpose().array() - centre);
  }
  g_s /= std::sqrt(static_cast<double>(t.dim()));
  const RowMatrix g_q = g_s * c.k;
  const RowMatrix g_k = g_s.transpose() * c.q;
  // g_V = A^T g_H = (column sums of A)^T g_h_row
  const Eigen::VectorXd a_colsum = c.attn.colwise().sum().transpose();
  const RowMatrix g_v = a_colsum * g_h_row;

  grads.wq += c.x.transpose() * g_q;
  grads.wk += c.x.transpose() * g_k;
  grads.wv += c.x.transpose() * g_v;

  RowMatrix g_x = g_q * t.wq.transpose() + g_k * t.wk.transpose() +
                  g_v * t.wv.transpose();
  g_x.rowwise() += g_pooled.transpose() * inv_n;
  for (Eigen::Index i = 0; i < n; ++i) {
    grads.embedding.row(c.tokens[static_cast<std::size_t>(i)]) += g_x.row(i);
  }
}

Eigen::VectorXd encode_text(const TextEncoderParams& params, std::string_view text,
                            bool use_momentum) {
  if (text.empty()) throw ArgumentError("encode_text: empty text");
  const auto& t = use_momentum ? params.momentum : params.base;
  return encoder_forward(t, params.vocab.encode(text)).unit;
}

std::vector<std::string> session_item_texts(const Session& session,
                                            const Catalog& catalog,
                                            int max_items) {
  std::span<const std::string> items(session.items);
  if (max_items > 0 && items.size() > static_cast<std::size_t>(max_items)) {
    items = items.subspan(items.size() - static_cast<std::size_t>(max_items));
  }
  std::vector<std::string> texts;
  for (const auto& id : items) {
    const auto* meta = catalog.find(id);
    if (!meta) continue;
    texts.push_back(render_item_text(*meta));
  }
  if (texts.empty()) {
    throw ArgumentError("session " + session.session_id + " has no item text");
  }
  return texts;
}

Eigen::VectorXd encode_session_text(const TextEncoderParams& params,
                                    const Session& session, const Catalog& catalog,
                                    bool use_momentum, SessionTextMode mode,
                                    int max_items) {
  if (session.items.empty()) throw ArgumentError("encode_session_text: empty session");
  const auto texts = session_item_texts(session, catalog, max_items);
  const auto& t = use_momentum ? params.momentum : params.base;
  return encode_segments(t, session_segments(texts, params.vocab, mode)).unit;
}

void momentum_update(TextEncoderParams& params, double beta) {
  params.momentum.for_each_pair(params.base, [beta](auto& mom, const auto& base) {
    if (mom.rows() != base.rows() || mom.cols() != base.cols()) {
      throw InvariantError("momentum and base tensors differ in shape");
    }
    mom = beta * mom + (1.0 - beta) * base;
  });
}

MemoryQueue::MemoryQueue(std::size_t capacity, int dim)
    : capacity_(capacity),
      storage_(RowMatrix::Zero(static_cast<Eigen::Index>(capacity), dim)) {
  if (capacity == 0) throw ArgumentError("queue capacity must be >= 1");
}

void MemoryQueue::push(std::span<const Eigen::VectorXd> batch) {
  if (batch.size() > capacity_) {
    throw ArgumentError("batch of " + std::to_string(batch.size()) +
                        " exceeds queue capacity " + std::to_string(capacity_));
  }
  for (const auto& v : batch) {
    if (v.size() != storage_.cols()) throw InvariantError("queue vector has wrong dimension");
    check_unit(v, "queued vector");
  }
  for (const auto& v : batch) {
    storage_.row(static_cast<Eigen::Index>(head_)) = v.transpose();
    head_ = (head_ + 1) % capacity_;
    fill_ = std::min(fill_ + 1, capacity_);
  }
}

std::vector<Eigen::VectorXd> MemoryQueue::ordered() const {
  std::vector<Eigen::VectorXd> out;
  const std::size_t start = fill_ < capacity_ ? 0 : head_;
  for (std::size_t i = 0; i < fill_; ++i) {
    out.push_back(storage_.row(static_cast<Eigen::Index>((start + i) % capacity_)).transpose());
  }
  return out;
}

bool MemoryQueue::operator==(const MemoryQueue& o) const {
  return capacity_ == o.capacity_ && head_ == o.head_ && fill_ == o.fill_ &&
         storage_ == o.storage_;
}

ArcConResult arccon_loss_raw(const Eigen::VectorXd& anchor,
                             const Eigen::VectorXd& positive,
                             Eigen::Ref<const RowMatrix> negatives, double s,
                             double m) {
  const double cos_raw = anchor.dot(positive);
  const double c = std::clamp(cos_raw, -kCosClamp, kCosClamp);
  const double theta = std::acos(c);
  const double pos_logit = s * std::cos(theta + m);
  // d pos_logit / d cos; zero where the clamp is active
  const double dpos_dc = (cos_raw > -kCosClamp && cos_raw < kCosClamp)
                             ? s * std::sin(theta + m) / std::sin(theta)
                             : 0.0;

  const Eigen::VectorXd neg_logits = s * (negatives * anchor);
  double mx = pos_logit;
  if (neg_logits.size()) mx = std::max(mx, neg_logits.maxCoeff());
  const Eigen::VectorXd neg_exp = (neg_logits.array() - mx).exp().matrix();
  const double pos_exp = std::exp(pos_logit - mx);
  const double z = pos_exp + neg_exp.sum();

  ArcConResult r;
  r.loss = std::log(z) + mx - pos_logit;
  const double g_pos = pos_exp / z - 1.0;
  r.grad_anchor = (g_pos * dpos_dc) * positive;
  if (neg_logits.size()) {
    r.grad_anchor += s * (negatives.transpose() * (neg_exp / z));
  }
  r.grad_positive = (g_pos * dpos_dc) * anchor;
  return r;
}

ArcConResult arccon_loss(const Eigen::VectorXd& anchor,
                         const Eigen::VectorXd& positive,
                         Eigen::Ref<const RowMatrix> negatives, double s,
                         double m) {
  if (!(s > 0)) throw ArgumentError("temperature s must be > 0");
  if (!(m >= 0 && m < std::numbers::pi / 2)) {
    throw ArgumentError("margin m must lie in [0, pi/2)");
  }
  if (positive.size() != anchor.size() ||
      (negatives.rows() && negatives.cols() != anchor.size())) {
    throw ArgumentError("arccon_loss: dimension mismatch");
  }
  check_unit(anchor, "anchor");
  check_unit(positive, "positive");
  for (Eigen::Index j = 0; j < negatives.rows(); ++j) {
    check_unit(negatives.row(j).transpose(), "negative");
  }
  return arccon_loss_raw(anchor, positive, negatives, s, m);
}

void DclConfig::validate() const {
  if (!(beta >= 0 && beta <= 1)) throw ArgumentError("beta must lie in [0, 1]");
  if (queue_size < 1) throw ArgumentError("queue size must be >= 1");
  if (!(s > 0)) throw ArgumentError("temperature s must be > 0");
  if (!(m >= 0 && m < std::numbers::pi / 2)) {
    throw ArgumentError("margin m must lie in [0, pi/2)");
  }
  double sum = 0;
  for (double l : lambdas) {
    if (!(l >= 0) || !std::isfinite(l)) throw ArgumentError("lambdas must be >= 0");
    sum += l;
  }
  if (sum == 0) throw ArgumentError("lambdas are all zero");
  if (std::abs(sum - 1.0) > 1e-9) throw ArgumentError("lambdas must sum to 1");
  if (dim < 1 || batch < 1 || epochs < 0) throw ArgumentError("invalid DCL sizes");
  if (static_cast<std::size_t>(batch) > queue_size) {
    throw ArgumentError("batch must not exceed the queue size");
  }
}

DclStep dcl_forward_backward(std::span<const TextPair> batch,
                             const TextEncoderParams& params,
                             const DualQueues& queues, const DclConfig& config,
                             EncoderTensors* grads) {
  const auto& lam = config.lambdas;
  if (std::all_of(lam.begin(), lam.end(), [](double l) { return l == 0; })) {
    throw ArgumentError("dcl_loss: every lambda is zero");
  }
  if (queues.sequences.empty() || queues.items.empty()) {
    throw ArgumentError("dcl_loss: memory queues must be warmed up first");
  }
  if (batch.empty()) throw ArgumentError("dcl_loss: empty batch");

  DclStep step;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const auto seq_neg = queues.sequences.rows();
  const auto item_neg = queues.items.rows();
  for (const auto& pair : batch) {
    const auto xs = encode_segments(params.base, pair.session_segments);
    const auto xt = encoder_forward(params.base, pair.target_tokens);
    const Eigen::VectorXd ps = encode_segments(params.momentum, pair.session_segments).unit;
    const Eigen::VectorXd pt = encoder_forward(params.momentum, pair.target_tokens).unit;

    Eigen::VectorXd g_s = Eigen::VectorXd::Zero(params.dim());
    Eigen::VectorXd g_t = Eigen::VectorXd::Zero(params.dim());
    auto term = [&](int idx, const Eigen::VectorXd& anchor,
                    const Eigen::VectorXd& positive, Eigen::Ref<const RowMatrix> negs,
                    Eigen::VectorXd& g_anchor) {
      if (lam[static_cast<std::size_t>(idx)] == 0) return;
      const auto r = arccon_loss_raw(anchor, positive, negs, config.s, config.m);
      step.term_loss[static_cast<std::size_t>(idx)] += r.loss * inv_b;
      step.loss += lam[static_cast<std::size_t>(idx)] * r.loss * inv_b;
      g_anchor += (lam[static_cast<std::size_t>(idx)] * inv_b) * r.grad_anchor;
    };
    term(0, xs.unit, pt, item_neg, g_s);  // session -> item
    term(1, xt.unit, ps, seq_neg, g_t);   // item -> session
    term(2, xs.unit, ps, seq_neg, g_s);   // session -> session
    term(3, xt.unit, pt, item_neg, g_t);  // item -> item

    if (grads) {
      backward_segments(params.base, xs, g_s, *grads);
      encoder_backward(params.base, xt, g_t, *grads);
    }
    step.momentum_sessions.push_back(ps);
    step.momentum_targets.push_back(pt);
  }
  return step;
}

double dcl_loss(std::span<const TextPair> batch, const TextEncoderParams& params,
                DualQueues& queues, const DclConfig& config) {
  auto step = dcl_forward_backward(batch, params, queues, config, nullptr);
  queues.sequences.push(step.momentum_sessions);
  queues.items.push(step.momentum_targets);
  return step.loss;
}

std::vector<TextPair> make_text_pairs(const SessionList& sessions,
                                      const Catalog& catalog,
                                      const Vocabulary& vocab,
                                      const DclConfig& config) {
  std::vector<TextPair> pairs;
  for (const auto& s : sessions) {
    if (!s.label) continue;
    const auto* target = catalog.find(*s.label);
    if (!target) continue;
    try {
      TextPair p;
      p.target_tokens = vocab.encode(render_item_text(*target));
      p.session_segments = session_segments(
          session_item_texts(s, catalog, config.max_session_items), vocab,
          config.session_mode);
      pairs.push_back(std::move(p));
    } catch (const ArgumentError&) {
      // no usable text on one side
    }
  }
  return pairs;
}

DclTrainResult train_dcl(const SessionList& sessions, const Catalog& catalog,
                         const DclConfig& config) {
  config.validate();
  std::vector<std::string> texts;
  for (const auto& m : catalog.items()) {
    try {
      texts.push_back(render_item_text(m));
    } catch (const ArgumentError&) {
    }
  }
  DclTrainResult result;
  auto& params = result.params;
  params.vocab = Vocabulary::build(texts, config.min_freq);

  Rng rng(config.seed);
  params.base = EncoderTensors::zeros(params.vocab.size(), config.dim);
  params.base.for_each([&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      t.data()[i] = rng.uniform(-config.init_scale, config.init_scale);
    }
  });
  params.momentum = config.momentum_from_base
                        ? params.base
                        : EncoderTensors::zeros(params.vocab.size(), config.dim);

  auto pairs = make_text_pairs(sessions, catalog, params.vocab, config);
  std::size_t labeled = 0;
  for (const auto& s : sessions) labeled += s.label.has_value();
  result.skipped = labeled - pairs.size();
  if (result.skipped) {
    spdlog::warn("train_dcl: skipped {} sessions without usable text", result.skipped);
  }
  if (pairs.empty()) throw ArgumentError("train_dcl: no training pairs");

  DualQueues queues{MemoryQueue(config.queue_size, config.dim),
                    MemoryQueue(config.queue_size, config.dim)};
  EncoderTensors grads = EncoderTensors::zeros(params.vocab.size(), config.dim);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<TextPair> batch;
  const auto bsize = static_cast<std::size_t>(config.batch);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t start = 0; start < order.size(); start += bsize) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + bsize); ++k) {
        batch.push_back(pairs[order[k]]);
      }
      if (queues.sequences.fill() < batch.size()) {
        // Warm-up: seed both queues from the momentum encoder, no loss.
        std::vector<Eigen::VectorXd> seq, item;
        for (const auto& p : batch) {
          seq.push_back(encode_segments(params.momentum, p.session_segments).unit);
          item.push_back(encoder_forward(params.momentum, p.target_tokens).unit);
        }
        queues.sequences.push(seq);
        queues.items.push(item);
      }
      grads.for_each([](auto& t) { t.setZero(); });
      auto step = dcl_forward_backward(batch, params, queues, config, &grads);
      params.base.for_each_pair(grads, [&](auto& w, const auto& g) { w -= config.lr * g; });
      momentum_update(params, config.beta);
      queues.sequences.push(step.momentum_sessions);
      queues.items.push(step.momentum_targets);
      total += step.loss * static_cast<double>(batch.size());
      counted += batch.size();
    }
    result.loss_trace.push_back(total / static_cast<double>(counted));
  }
  params.momentum = EncoderTensors{};
  return result;
}

ItemIndex build_item_index(const TextEncoderParams& params, const Catalog& catalog) {
  std::vector<std::pair<std::string, Eigen::VectorXd>> rows;
  for (const auto& m : catalog.items()) {
    std::string text;
    try {
      text = render_item_text(m);
    } catch (const ArgumentError&) {
      continue;
    }
    rows.emplace_back(m.item_id, encode_text(params, text));
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  ItemIndex index;
  index.vectors.resize(static_cast<Eigen::Index>(rows.size()), params.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    index.item_ids.push_back(rows[i].first);
    index.vectors.row(static_cast<Eigen::Index>(i)) = rows[i].second.transpose();
  }
  return index;
}

CandidateList retrieve_text(const Session& session, const TextEncoderParams& params,
                            const Catalog& catalog, const ItemIndex& index,
                            std::size_t top_k, SessionTextMode mode, int max_items) {
  CandidateList out;
  out.session_id = session.session_id;
  out.source = "text";
  if (top_k == 0 || index.item_ids.empty()) return out;
  const Eigen::VectorXd u =
      encode_session_text(params, session, catalog, false, mode, max_items);
  const Eigen::VectorXd scores = index.vectors * u;
  std::set<std::string_view> seen(session.items.begin(), session.items.end());
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < index.item_ids.size(); ++i) {
    if (!seen.contains(index.item_ids[i])) {
      ranked.emplace_back(std::clamp(scores[static_cast<Eigen::Index>(i)], -1.0, 1.0), i);
    }
  }
  const auto k = std::min(top_k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k),
                    ranked.end(), [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  for (std::size_t i = 0; i < k; ++i) {
    out.entries.push_back({index.item_ids[ranked[i].second], ranked[i].first});
  }
  return out;
}

void save_text_encoder(const std::filesystem::path& path,
                       const TextEncoderParams& params) {
  auto out = io::open_output(path, true);
  io::write_magic(out, kEncoderMagic, kVersion);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.vocab.size()));
  for (const auto& t : params.vocab.tokens()) io::write_string(out, t);
  auto write_tensors = [&](const EncoderTensors& t) {
    write_matrix(out, t.embedding);
    write_matrix(out, t.wq);
    write_matrix(out, t.wk);
    write_matrix(out, t.wv);
    write_matrix(out, t.wo);
  };
  write_tensors(params.base);
  const bool has_momentum = params.momentum.embedding.size() > 0;
  io::write_pod<std::uint8_t>(out, has_momentum ? 1 : 0);
  if (has_momentum) write_tensors(params.momentum);
}

TextEncoderParams load_text_encoder(const std::filesystem::path& path) {
  auto in = io::open_input(path, true);
  io::expect_magic(in, kEncoderMagic, kVersion);
  const auto n = io::read_pod<std::uint32_t>(in);
  std::vector<std::string> tokens;
  for (std::uint32_t i = 0; i < n; ++i) tokens.push_back(io::read_string(in));
  TextEncoderParams p;
  p.vocab = Vocabulary::from_tokens(tokens);
  auto read_tensors = [&](EncoderTensors& t) {
    read_matrix(in, t.embedding);
    read_matrix(in, t.wq);
    read_matrix(in, t.wk);
    read_matrix(in, t.wv);
    read_matrix(in, t.wo);
  };
  read_tensors(p.base);
  if (p.base.embedding.rows() != static_cast<Eigen::Index>(n)) {
    throw ParseError("text encoder: embedding rows do not match vocabulary");
  }
  if (io::read_pod<std::uint8_t>(in)) read_tensors(p.momentum);
  return p;
}

void save_item_index(const std::filesystem::path& path, const ItemIndex& index) {
  auto out = io::open_output(path, true);
  io::write_magic(out, kIndexMagic, kVersion);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(index.vectors.cols()));
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(index.item_ids.size()));
  for (std::size_t i = 0; i < index.item_ids.size(); ++i) {
    io::write_string(out, index.item_ids[i]);
    io::write_doubles(out, index.vectors.row(static_cast<Eigen::Index>(i)).data(),
                      static_cast<std::size_t>(index.vectors.cols()));
  }
}

ItemIndex load_item_index(const std::filesystem::path& path) {
  auto in = io::open_input(path, true);
  io::expect_magic(in, kIndexMagic, kVersion);
  const auto dim = io::read_pod<std::uint32_t>(in);
  const auto n = io::read_pod<std::uint32_t>(in);
  ItemIndex index;
  index.vectors.resize(n, dim);
  for (std::uint32_t i = 0; i < n; ++i) {
    index.item_ids.push_back(io::read_string(in));
    io::read_doubles(in, index.vectors.row(i).data(), dim);
  }
  return index;
}

}  // namespace hybrec
