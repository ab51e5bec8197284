#pragma once

// Toy two-tower model.
//
// Image tower: z = normalize(W x + b), or normalize(W2 tanh(W1 x + b1) + b2) in
// MLP mode. The replay head reuses the unnormalized trunk output t and applies
// its own projector: normalize(Wr t + br).
// Label tower: c = normalize(sum of per-rank node vectors), so taxa that share
// a prefix share most of their prototype mass.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hclab/numeric.hpp"
#include "hclab/synth.hpp"
#include "hclab/taxa.hpp"

namespace hclab {

enum class EncoderMode { Linear, Mlp };
enum class Head { Main, Replay };

struct ModelConfig {
  std::size_t d_emb = 16;
  EncoderMode mode = EncoderMode::Linear;
  std::size_t d_hidden = 32;
  double tau = 0.05;
  bool learn_tau = false;
  std::size_t replay_captions = 16;
  LabelMode label_mode = LabelMode::Taxonomic;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct HiddenLayer {
  Matrix w;  // d_hidden x d_in
  std::vector<double> b;
  friend bool operator==(const HiddenLayer&, const HiddenLayer&) = default;
};

using RankTable = std::map<std::string, std::vector<double>>;

struct ModelState {
  ModelConfig config;
  std::size_t d_in = 0;
  std::vector<Taxon> taxa;  // species vocabulary, index = species id

  Matrix w_enc;  // d_emb x (d_in or d_hidden)
  std::vector<double> b_enc;
  std::optional<HiddenLayer> hidden;
  std::array<RankTable, kNumRanks> rank_tables;
  Matrix replay_w;  // d_emb x d_emb
  std::vector<double> replay_b;
  Matrix replay_text;  // caption id x d_emb
  double tau = 0.05;
  double log_tau = 0.0;  // optimized instead of tau when config.learn_tau

  std::size_t d_emb() const { return config.d_emb; }
  bool all_finite() const;
  friend bool operator==(const ModelState&, const ModelState&) = default;
};

/// Unit-row embeddings.
struct EmbeddingBatch {
  Matrix vectors;
  std::size_t size() const { return vectors.rows(); }
};

ModelState init_model(std::uint64_t seed, const ModelConfig& cfg, const Dataset& dataset);

/// Same shapes and table keys as `m`, every entry zero.
ModelState zeros_like(const ModelState& m);

/// Visits every trainable block in a fixed order. `log_tau` is included only
/// when the temperature is learnable.
void for_each_block(ModelState& m, const std::function<void(const std::string&, std::span<double>)>& fn);
void for_each_block(const ModelState& m, const std::function<void(const std::string&, std::span<const double>)>& fn);

/// Unnormalized main-trunk output t (n x d_emb). When `hidden_out` is given it
/// receives the tanh activations in MLP mode.
Matrix trunk_forward(const ModelState& m, const Matrix& xs, Matrix* hidden_out = nullptr);

EmbeddingBatch encode_images(const ModelState& m, const Matrix& xs, Head head = Head::Main);
EmbeddingBatch encode_labels(const ModelState& m, const std::vector<Taxon>& taxa);
EmbeddingBatch encode_captions(const ModelState& m, const std::vector<std::size_t>& caption_ids);

/// Ranks that contribute a summand for `t` under the configured label mode.
std::vector<std::size_t> label_ranks(const ModelState& m, const Taxon& t);

/// Row-normalizes `u` in place and returns the pre-normalization norms.
std::vector<double> normalize_rows(Matrix& u);

}  // namespace hclab
