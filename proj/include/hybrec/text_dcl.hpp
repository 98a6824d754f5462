#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "hybrec/candidates.hpp"
#include "hybrec/data_model.hpp"
#include "hybrec/gru.hpp"

namespace hybrec {

inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kOovToken = "[OOV]";

// Attribute texts in fixed order (title, brand, color, size, model,
// material, author, description) joined by "[SEP]". Throws ArgumentError
// when every field is absent or empty.
std::string render_item_text(const ItemMeta& meta);

// Lower-cased whitespace tokens; "[SEP]" is always its own token.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  Vocabulary();  // only the special tokens
  // Tokens seen at least `min_freq` times; ids beyond the specials follow
  // lexicographic order.
  static Vocabulary build(const std::vector<std::string>& texts, int min_freq = 2);
  // Full token list as stored, specials first.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  std::int32_t id(std::string_view token) const;  // OOV id when unknown
  std::vector<std::int32_t> encode(std::string_view text) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static constexpr std::int32_t kOov = 0;
  static constexpr std::int32_t kSep = 1;

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  explicit Vocabulary(std::vector<std::string> tokens);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// Token embeddings plus one residual self-attention block:
//   O = X + softmax(X Wq (X Wk)^T / sqrt(d)) X Wv Wo
// pooled by mean over tokens and L2-normalized.
struct EncoderTensors {
  RowMatrix embedding;  // vocab x d
  Eigen::MatrixXd wq, wk, wv, wo;

  static EncoderTensors zeros(std::size_t vocab, int dim);
  int dim() const { return static_cast<int>(embedding.cols()); }

  template <typename F>
  void for_each(F&& f) {
    f(embedding);
    f(wq);
    f(wk);
    f(wv);
    f(wo);
  }
  template <typename F>
  void for_each_pair(const EncoderTensors& other, F&& f) {
    f(embedding, other.embedding);
    f(wq, other.wq);
    f(wk, other.wk);
    f(wv, other.wv);
    f(wo, other.wo);
  }
  bool operator==(const EncoderTensors& o) const;
};

struct TextEncoderParams {
  Vocabulary vocab;
  EncoderTensors base;
  EncoderTensors momentum;
  int dim() const { return base.dim(); }
};

// Forward pass intermediates kept for backpropagation.
struct EncoderCache {
  std::vector<std::int32_t> tokens;
  RowMatrix x, q, k, v, attn, h;
  Eigen::VectorXd pooled;
  Eigen::VectorXd unit;
  double norm = 0;
};

EncoderCache encoder_forward(const EncoderTensors& tensors,
                             std::span<const std::int32_t> tokens);
// Accumulates d loss / d tensors into `grads` given d loss / d unit output.
void encoder_backward(const EncoderTensors& tensors, const EncoderCache& cache,
                      const Eigen::VectorXd& grad_unit, EncoderTensors& grads);

Eigen::VectorXd encode_text(const TextEncoderParams& params, std::string_view text,
                            bool use_momentum = false);

enum class SessionTextMode {
  Concat,     // one "[SEP]"-joined document
  MeanItems,  // per-item vectors averaged, then normalized
};

// Texts of the session's last `max_items` items (0 keeps all). Items
// missing from the catalog are skipped; throws ArgumentError when none
// has text.
std::vector<std::string> session_item_texts(const Session& session,
                                            const Catalog& catalog,
                                            int max_items = 0);

Eigen::VectorXd encode_session_text(const TextEncoderParams& params,
                                    const Session& session, const Catalog& catalog,
                                    bool use_momentum = false,
                                    SessionTextMode mode = SessionTextMode::Concat,
                                    int max_items = 0);

// momentum <- beta * momentum + (1 - beta) * base, elementwise.
void momentum_update(TextEncoderParams& params, double beta);

// Fixed-capacity FIFO ring of unit vectors.
class MemoryQueue {
 public:
  MemoryQueue(std::size_t capacity, int dim);

  // Throws InvariantError for non-unit vectors, ArgumentError when the
  // batch exceeds the capacity.
  void push(std::span<const Eigen::VectorXd> batch);

  std::size_t capacity() const { return capacity_; }
  std::size_t fill() const { return fill_; }
  bool empty() const { return fill_ == 0; }
  int dim() const { return static_cast<int>(storage_.cols()); }

  // Stored vectors as rows, in storage (not insertion) order.
  Eigen::Ref<const RowMatrix> rows() const { return storage_.topRows(static_cast<Eigen::Index>(fill_)); }
  // Oldest first.
  std::vector<Eigen::VectorXd> ordered() const;

  bool operator==(const MemoryQueue& o) const;

 private:
  std::size_t capacity_;
  RowMatrix storage_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::size_t fill_ = 0;
};

struct ArcConResult {
  double loss = 0;
  Eigen::VectorXd grad_anchor;
  Eigen::VectorXd grad_positive;
};

// Unvalidated kernel: cosine of the positive is clamped to +-(1 - 1e-7)
// before arccos; negatives are the rows of `negatives`.
ArcConResult arccon_loss_raw(const Eigen::VectorXd& anchor,
                             const Eigen::VectorXd& positive,
                             Eigen::Ref<const RowMatrix> negatives, double s,
                             double m);

// Validates unit norms (1 +- 1e-6), s > 0 and m in [0, pi/2).
ArcConResult arccon_loss(const Eigen::VectorXd& anchor,
                         const Eigen::VectorXd& positive,
                         Eigen::Ref<const RowMatrix> negatives, double s,
                         double m);

struct DclConfig {
  double beta = 0.999;
  std::size_t queue_size = 1024;
  double s = 20.0;
  double m = 0.2;
  std::array<double, 4> lambdas = {0.35, 0.35, 0.15, 0.15};

  int dim = 32;
  int batch = 32;
  int epochs = 2;
  double lr = 0.05;
  std::uint64_t seed = 11;
  int min_freq = 2;
  // Session text uses the last `max_session_items` items; 0 keeps all.
  int max_session_items = 5;
  SessionTextMode session_mode = SessionTextMode::Concat;
  // Start the momentum encoder as a copy of the base (true) or at zero.
  bool momentum_from_base = true;
  double init_scale = 0.1;

  void validate() const;
};

struct DualQueues {
  MemoryQueue sequences;
  MemoryQueue items;
};

// A training pair, pre-tokenized: one token list per session segment
// (a single segment in Concat mode) and the target item's tokens.
struct TextPair {
  std::vector<std::vector<std::int32_t>> session_segments;
  std::vector<std::int32_t> target_tokens;
};

struct DclStep {
  double loss = 0;                                  // batch mean
  std::array<double, 4> term_loss{};                // batch mean per term
  std::vector<Eigen::VectorXd> momentum_sessions;   // to push to sequences
  std::vector<Eigen::VectorXd> momentum_targets;    // to push to items
};

// Forward and backward pass of the four-term objective for one batch.
// Reads queues and momentum tensors without modifying them; accumulates
// the base-encoder gradient into `grads` when non-null.
DclStep dcl_forward_backward(std::span<const TextPair> batch,
                             const TextEncoderParams& params,
                             const DualQueues& queues, const DclConfig& config,
                             EncoderTensors* grads);

// Loss of one batch followed by pushing its momentum vectors to both
// queues. Throws ArgumentError when every lambda is zero or a queue is empty.
double dcl_loss(std::span<const TextPair> batch, const TextEncoderParams& params,
                DualQueues& queues, const DclConfig& config);

std::vector<TextPair> make_text_pairs(const SessionList& sessions,
                                      const Catalog& catalog,
                                      const Vocabulary& vocab,
                                      const DclConfig& config);

struct DclTrainResult {
  TextEncoderParams params;         // momentum tensors are dropped (empty)
  std::vector<double> loss_trace;   // mean loss per epoch
  std::size_t skipped = 0;
};

DclTrainResult train_dcl(const SessionList& sessions, const Catalog& catalog,
                         const DclConfig& config);

// Unit vectors of every catalog item with renderable text, from the base
// encoder.
struct ItemIndex {
  std::vector<std::string> item_ids;
  RowMatrix vectors;  // one unit row per item

  bool operator==(const ItemIndex& o) const {
    return item_ids == o.item_ids && vectors == o.vectors;
  }
};

ItemIndex build_item_index(const TextEncoderParams& params, const Catalog& catalog);

CandidateList retrieve_text(const Session& session, const TextEncoderParams& params,
                            const Catalog& catalog, const ItemIndex& index,
                            std::size_t top_k,
                            SessionTextMode mode = SessionTextMode::Concat,
                            int max_items = 0);

void save_text_encoder(const std::filesystem::path& path,
                       const TextEncoderParams& params);
TextEncoderParams load_text_encoder(const std::filesystem::path& path);

void save_item_index(const std::filesystem::path& path, const ItemIndex& index);
ItemIndex load_item_index(const std::filesystem::path& path);

}  // namespace hybrec
