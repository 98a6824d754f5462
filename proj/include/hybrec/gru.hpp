#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "hybrec/candidates.hpp"
#include "hybrec/data_model.hpp"

namespace hybrec {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct GruConfig {
  int dim = 32;
  double lr = 1.0;
  int epochs = 5;
  int batch = 32;
  int negatives = 64;
  std::uint64_t seed = 7;
  // Only the last `max_len` session items are encoded.
  int max_len = 10;
  int price_buckets = 16;
  int brand_buckets = 1024;
  double init_scale = 0.05;
};

// Embedding tables plus one GRU layer. Row 0 of item_emb is the shared
// out-of-vocabulary vector.
struct GruParams {
  int dim = 0;
  std::vector<std::string> item_ids;  // row i + 1 of item_emb
  std::unordered_map<std::string, std::int32_t> item_rows;
  RowMatrix item_emb;
  RowMatrix price_emb;
  RowMatrix brand_emb;
  // Upper bucket edges over log1p(price); size price_buckets - 1.
  std::vector<double> price_edges;

  // Input, recurrent and bias terms for update (z), reset (r) and
  // candidate (h) gates.
  Eigen::MatrixXd wz, wr, wh;
  Eigen::MatrixXd uz, ur, uh;
  Eigen::VectorXd bz, br, bh;

  // Zero-initialized tables for the given catalog items.
  static GruParams zeros(int dim, std::vector<std::string> item_ids,
                         int price_buckets = 16, int brand_buckets = 1024);

  std::int32_t row_of(std::string_view item_id) const;  // 0 for OOV
  int price_bucket(double price) const;
  int brand_bucket(std::string_view brand) const;

  // Visits every tensor in a fixed order.
  template <typename F>
  void for_each_tensor(F&& f) {
    f("item_emb", item_emb);
    f("price_emb", price_emb);
    f("brand_emb", brand_emb);
    f("wz", wz);
    f("wr", wr);
    f("wh", wh);
    f("uz", uz);
    f("ur", ur);
    f("uh", uh);
    f("bz", bz);
    f("br", br);
    f("bh", bh);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<GruParams*>(this)->for_each_tensor(
        [&](const char* name, auto& t) { f(name, std::as_const(t)); });
  }

  bool operator==(const GruParams& other) const;
};

// Side-information slots resolved for one item occurrence.
struct FusedSlot {
  std::int32_t item_row = 0;
  int price_bucket = -1;  // -1 when absent
  int brand_bucket = -1;
};

std::vector<FusedSlot> resolve_slots(std::span<const std::string> item_ids,
                                     const Catalog& catalog,
                                     const GruParams& params);

// fused_t = mean of the item embedding and whichever side embeddings exist.
std::vector<Eigen::VectorXd> fuse_embeddings(std::span<const std::string> item_ids,
                                             const Catalog& catalog,
                                             const GruParams& params);

// Last hidden state of the GRU over `fused`, starting from h0 = 0.
Eigen::VectorXd gru_forward(std::span<const Eigen::VectorXd> fused,
                            const GruParams& params);

// GRU output plus the mean of the fused inputs (sequence-level residual).
Eigen::VectorXd encode_session(const Session& session, const Catalog& catalog,
                               const GruParams& params, int max_len = 10);

// One training example with its sampled negatives already fixed.
struct GruExample {
  std::vector<FusedSlot> inputs;
  std::int32_t target_row = 0;
  std::vector<std::int32_t> negative_rows;
};

// Sampled-softmax cross-entropy of the target against the negatives. When
// `grads` is non-null the gradient is accumulated into it (same shapes as
// params).
double gru_example_loss(const GruExample& example, const GruParams& params,
                        GruParams* grads);

struct GruTrainResult {
  GruParams params;
  std::vector<double> loss_trace;  // mean loss per epoch
  std::size_t skipped = 0;         // unlabeled or unknown-label sessions
};

GruTrainResult train_gru(const SessionList& sessions, const Catalog& catalog,
                         const GruConfig& config);

// Dot-product scores over catalog items not in the session; ties by id.
CandidateList retrieve_gru(const Session& session, const Catalog& catalog,
                           const GruParams& params, std::size_t top_k,
                           int max_len = 10);

void save_gru_params(const std::filesystem::path& path, const GruParams& params);
GruParams load_gru_params(const std::filesystem::path& path);

void save_loss_trace(const std::filesystem::path& path,
                     const std::vector<double>& trace);

}  // namespace hybrec
