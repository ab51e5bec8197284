#pragma once

// Symmetric CLIP-style contrastive training with an optional replay stream.
//
// Gradients are exact and hand-derived, including the normalization Jacobian
// (I - z z^T) / ||u|| at every normalize. Weight decay is decoupled and applied
// in adam_step, never folded into the gradient.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hclab/model.hpp"
#include "hclab/synth.hpp"

namespace hclab {

enum class ReplayMode { None, SharedProj, SeparateProj };

struct TrainConfig {
  double tau = 0.05;
  double lr_max = 1e-2;
  std::size_t warmup_steps = 20;
  bool cosine_decay = false;
  double weight_decay = 0.0;
  std::size_t batch_size = 64;
  std::size_t replay_batch_size = 0;
  std::size_t epochs = 5;
  std::uint64_t seed = 0;
  ReplayMode replay_mode = ReplayMode::None;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool dedup_labels = false;
  std::size_t replay_pool_size = 2048;
  double replay_noise = 0.5;

  bool replay_enabled() const { return replay_mode != ReplayMode::None && replay_batch_size > 0; }
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct LossReport {
  double total = 0.0;
  double main = 0.0;
  double replay = 0.0;
  double image_to_text = 0.0;
  double text_to_image = 0.0;
};

/// Symmetric in-batch loss between matched unit rows of z and c. A single
/// pair is allowed and gives zero loss.
LossReport contrastive_loss(const EmbeddingBatch& z, const EmbeddingBatch& c, double tau);

/// Cross-entropy in both directions over a logit matrix whose image rows have
/// target columns `target_col`. Returns the mean loss per direction and the
/// gradient of (i2t + t2i) / 2 with respect to the logits.
struct ClipLoss {
  double image_to_text = 0.0;
  double text_to_image = 0.0;
  Matrix dlogits;
};
ClipLoss clip_loss(const Matrix& logits, const std::vector<std::size_t>& target_col);

struct Batch {
  Matrix x;
  std::vector<Taxon> taxa;
};

struct ReplayBatch {
  Matrix x;
  std::vector<std::size_t> caption_ids;
};

struct LossAndGrads {
  LossReport loss;
  ModelState grads;
};

LossAndGrads loss_and_grads(const ModelState& m, const Batch& batch, const ReplayBatch* replay,
                            const TrainConfig& cfg);

/// Loss only, sharing the forward path of loss_and_grads.
LossReport evaluate_loss(const ModelState& m, const Batch& batch, const ReplayBatch* replay, const TrainConfig& cfg);

struct AdamState {
  ModelState first;
  ModelState second;
  std::size_t step = 0;
};

AdamState init_adam(const ModelState& m);

/// Learning rate at 1-based step t.
double learning_rate(const TrainConfig& cfg, std::size_t t, std::size_t total_steps);

/// Blocks the configured objective can reach; others are never decayed.
bool block_is_active(const std::string& block, const TrainConfig& cfg);

void adam_step(ModelState& params, const ModelState& grads, AdamState& state, std::size_t step_index,
               const TrainConfig& cfg, std::size_t total_steps);

struct MetricsRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double main_loss = 0.0;
  double replay_loss = 0.0;
  std::optional<double> zeroshot_acc;
  std::vector<std::optional<double>> rho;  // per variant axis
  std::vector<std::optional<double>> fdr;
};

struct TrainCallbacks {
  std::function<void(const MetricsRow&, const ModelState&)> on_epoch;
  bool eval_metrics = true;
};

struct TrainResult {
  ModelState model;
  AdamState optimizer;
  std::vector<MetricsRow> metrics;
};

/// Train from a fresh init_model(cfg.seed, ...).
TrainResult train_run(const Dataset& ds, const ModelConfig& model_cfg, const TrainConfig& cfg,
                      const TrainCallbacks& callbacks = {});

/// Continue training from an existing state.
TrainResult train_from(ModelState model, const Dataset& ds, const TrainConfig& cfg,
                       const TrainCallbacks& callbacks = {});

MetricsRow epoch_metrics(const ModelState& m, const Dataset& ds);

/// Header plus one line per row; absent values are empty fields.
std::string metrics_csv(const std::vector<MetricsRow>& rows);

}  // namespace hclab
