#include "hclab/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "hclab/eval.hpp"
#include "hclab/geometry.hpp"
#include "hclab/io.hpp"
#include "hclab/kernels.hpp"

namespace hclab {

void TrainConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::ConfigInvalid, why); };
  if (!(tau > 0.0)) fail("tau must be > 0");
  if (!(lr_max > 0.0)) fail("lr_max must be > 0");
  if (batch_size < 2) fail("batch_size must be >= 2");
  if (replay_mode != ReplayMode::None && replay_batch_size == 1) fail("replay_batch_size must be 0 or >= 2");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    fail("Adam betas must lie in [0, 1)");
  if (!(adam_eps >= 0.0)) fail("adam_eps must be >= 0");
  if (replay_enabled() && replay_pool_size < replay_batch_size) fail("replay pool smaller than replay batch");
}

ClipLoss clip_loss(const Matrix& logits, const std::vector<std::size_t>& target_col) {
  const std::size_t n = logits.rows();
  const std::size_t cols = logits.cols();
  if (target_col.size() != n) throw Error(ErrorCode::DimensionMismatch, "one target column per image row");
  std::vector<std::vector<std::size_t>> positives(cols);
  for (std::size_t i = 0; i < n; ++i) {
    if (target_col[i] >= cols) throw Error(ErrorCode::IndexOutOfRange, "target column out of range");
    positives[target_col[i]].push_back(i);
  }
  for (std::size_t j = 0; j < cols; ++j)
    if (positives[j].empty()) throw Error(ErrorCode::DimensionMismatch, "label column without a matching image");

  ClipLoss out;
  out.dlogits = Matrix(n, cols);
  const double row_scale = 0.5 / static_cast<double>(n);
  const double col_scale = 0.5 / static_cast<double>(cols);

  std::vector<double> row_losses(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    std::vector<double> ex(cols);
    for (std::size_t j = 0; j < cols; ++j) ex[j] = std::exp(row[j] - mx);
    const double z = ordered_sum(ex);
    row_losses[i] = mx + std::log(z) - row[target_col[i]];
    for (std::size_t j = 0; j < cols; ++j) out.dlogits(i, j) = row_scale * (ex[j] / z - (j == target_col[i] ? 1.0 : 0.0));
  }

  std::vector<double> col_losses(cols);
  std::vector<double> colv(n), ex(n);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < n; ++i) colv[i] = logits(i, j);
    const double mx = *std::max_element(colv.begin(), colv.end());
    for (std::size_t i = 0; i < n; ++i) ex[i] = std::exp(colv[i] - mx);
    const double z = ordered_sum(ex);
    double pos = 0.0;
    for (std::size_t i : positives[j]) pos += ex[i];
    col_losses[j] = std::log(z) - std::log(pos);
    for (std::size_t i = 0; i < n; ++i) out.dlogits(i, j) += col_scale * (ex[i] / z);
    for (std::size_t i : positives[j]) out.dlogits(i, j) -= col_scale * (ex[i] / pos);
  }
  out.image_to_text = ordered_sum(row_losses) / static_cast<double>(n);
  out.text_to_image = ordered_sum(col_losses) / static_cast<double>(cols);
  return out;
}

LossReport contrastive_loss(const EmbeddingBatch& z, const EmbeddingBatch& c, double tau) {
  if (z.size() != c.size() || z.vectors.cols() != c.vectors.cols())
    throw Error(ErrorCode::DimensionMismatch, "contrastive_loss needs matching batches");
  if (z.size() == 0) throw Error(ErrorCode::BatchTooSmall, "empty batch");
  Matrix logits = kernels::matmul_abt(z.vectors, c.vectors);
  for (auto& v : logits.data()) v /= tau;
  std::vector<std::size_t> target(z.size());
  std::iota(target.begin(), target.end(), 0);
  const auto cl = clip_loss(logits, target);
  LossReport rep;
  rep.image_to_text = cl.image_to_text;
  rep.text_to_image = cl.text_to_image;
  rep.main = 0.5 * (cl.image_to_text + cl.text_to_image);
  rep.total = rep.main;
  return rep;
}

namespace {

std::vector<double> column_sums(const Matrix& g) {
  std::vector<double> s(g.cols(), 0.0);
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) s[j] += g(i, j);
  return s;
}

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void add_into(Matrix& dst, const Matrix& src) { add_into(dst.data(), src.data()); }

// dz -> du through u / ||u||, row by row.
Matrix normalize_backward(const Matrix& unit, const std::vector<double>& norms, const Matrix& dunit) {
  Matrix du(unit.rows(), unit.cols());
  for (std::size_t i = 0; i < unit.rows(); ++i) {
    const auto z = unit.row(i);
    const auto g = dunit.row(i);
    const double proj = dot(z, g);
    auto out = du.row(i);
    for (std::size_t k = 0; k < z.size(); ++k) out[k] = (g[k] - z[k] * proj) / norms[i];
  }
  return du;
}

struct TrunkPass {
  Matrix hidden;
  Matrix t;
};

void trunk_backward(const ModelState& m, const Matrix& x, const TrunkPass& pass, const Matrix& dt, ModelState& g) {
  if (!m.hidden) {
    add_into(g.w_enc, kernels::matmul_atb(dt, x));
    add_into(g.b_enc, column_sums(dt));
    return;
  }
  add_into(g.w_enc, kernels::matmul_atb(dt, pass.hidden));
  add_into(g.b_enc, column_sums(dt));
  Matrix dh = kernels::matmul_ab(dt, m.w_enc);
  for (std::size_t i = 0; i < dh.data().size(); ++i) {
    const double h = pass.hidden.data()[i];
    dh.data()[i] *= 1.0 - h * h;
  }
  add_into(g.hidden->w, kernels::matmul_atb(dh, x));
  add_into(g.hidden->b, column_sums(dh));
}

// Logits z c^T / tau and the loss; returns d(loss)/dz, d(loss)/dc and the
// log-tau derivative through `dlog_tau`.
struct PairGrad {
  ClipLoss loss;
  Matrix dz;
  Matrix dc;
  double dlog_tau = 0.0;
};

PairGrad pair_loss(const Matrix& z, const Matrix& c, const std::vector<std::size_t>& target, double tau, bool grads) {
  Matrix logits = kernels::matmul_abt(z, c);
  for (auto& v : logits.data()) v /= tau;
  PairGrad out;
  out.loss = clip_loss(logits, target);
  if (!grads) return out;
  const Matrix& g = out.loss.dlogits;
  out.dz = kernels::matmul_ab(g, c);
  out.dc = kernels::matmul_atb(g, z);
  for (auto& v : out.dz.data()) v /= tau;
  for (auto& v : out.dc.data()) v /= tau;
  std::vector<double> terms(g.data().size());
  for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = -g.data()[i] * logits.data()[i];
  out.dlog_tau = ordered_sum(terms);
  return out;
}

// Label columns: all rows, or first occurrences when deduplicating.
template <class Key>
std::vector<std::size_t> label_columns(const std::vector<Key>& keys, bool dedup, std::vector<std::size_t>& column_of) {
  column_of.resize(keys.size());
  std::vector<std::size_t> firsts;
  if (!dedup) {
    firsts.resize(keys.size());
    std::iota(firsts.begin(), firsts.end(), 0);
    column_of = firsts;
    return firsts;
  }
  for (std::size_t i = 0; i < keys.size(); ++i) {
    std::size_t j = 0;
    while (j < firsts.size() && !(keys[firsts[j]] == keys[i])) ++j;
    if (j == firsts.size()) firsts.push_back(i);
    column_of[i] = j;
  }
  return firsts;
}

LossAndGrads forward_backward(const ModelState& m, const Batch& batch, const ReplayBatch* replay,
                              const TrainConfig& cfg, bool grads) {
  const std::size_t n = batch.x.rows();
  if (n < 2) throw Error(ErrorCode::BatchTooSmall, "training batch needs >= 2 samples");
  if (batch.taxa.size() != n) throw Error(ErrorCode::DimensionMismatch, "one taxon per batch row");
  const bool use_replay = replay && cfg.replay_mode != ReplayMode::None;
  const double tau = m.config.learn_tau ? std::exp(m.log_tau) : m.tau;

  LossAndGrads out;
  if (grads) out.grads = zeros_like(m);
  ModelState& g = out.grads;

  // Main stream.
  TrunkPass pass;
  pass.t = trunk_forward(m, batch.x, &pass.hidden);
  Matrix z = pass.t;
  const auto z_norms = normalize_rows(z);

  std::vector<std::size_t> target;
  const auto firsts = label_columns(batch.taxa, cfg.dedup_labels, target);
  Matrix u(firsts.size(), m.d_emb());
  std::vector<std::vector<std::size_t>> ranks(firsts.size());
  for (std::size_t j = 0; j < firsts.size(); ++j) {
    const Taxon& t = batch.taxa[firsts[j]];
    ranks[j] = label_ranks(m, t);
    auto row = u.row(j);
    for (std::size_t r : ranks[j]) {
      const auto it = m.rank_tables[r].find(t.at(r));
      if (it == m.rank_tables[r].end())
        throw Error(ErrorCode::UnknownTaxonNode, "no rank-" + std::to_string(r) + " entry for '" + t.at(r) + "'");
      for (std::size_t k = 0; k < row.size(); ++k) row[k] += it->second[k];
    }
  }
  Matrix c = u;
  const auto c_norms = normalize_rows(c);

  PairGrad main = pair_loss(z, c, target, tau, grads);
  out.loss.image_to_text = main.loss.image_to_text;
  out.loss.text_to_image = main.loss.text_to_image;
  out.loss.main = 0.5 * (main.loss.image_to_text + main.loss.text_to_image);

  double dlog_tau = 0.0;
  if (grads) {
    dlog_tau += main.dlog_tau;
    trunk_backward(m, batch.x, pass, normalize_backward(z, z_norms, main.dz), g);
    const Matrix du = normalize_backward(c, c_norms, main.dc);
    for (std::size_t j = 0; j < firsts.size(); ++j) {
      const Taxon& t = batch.taxa[firsts[j]];
      for (std::size_t r : ranks[j]) {
        auto& dst = g.rank_tables[r].at(t.at(r));
        const auto src = du.row(j);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

  // Replay stream: its own softmax batch, loss summed with the main one.
  if (use_replay) {
    const std::size_t nr = replay->x.rows();
    if (nr < 2) throw Error(ErrorCode::BatchTooSmall, "replay batch needs >= 2 samples");
    if (replay->caption_ids.size() != nr) throw Error(ErrorCode::DimensionMismatch, "one caption per replay row");
    TrunkPass rpass;
    rpass.t = trunk_forward(m, replay->x, &rpass.hidden);
    const bool separate = cfg.replay_mode == ReplayMode::SeparateProj;
    Matrix pre = separate ? kernels::affine_rows(rpass.t, m.replay_w, m.replay_b) : rpass.t;
    Matrix zr = pre;
    const auto zr_norms = normalize_rows(zr);

    std::vector<std::size_t> rtarget;
    const auto rfirsts = label_columns(replay->caption_ids, cfg.dedup_labels, rtarget);
    std::vector<std::size_t> caption_cols(rfirsts.size());
    for (std::size_t j = 0; j < rfirsts.size(); ++j) caption_cols[j] = replay->caption_ids[rfirsts[j]];
    Matrix e(caption_cols.size(), m.d_emb());
    for (std::size_t j = 0; j < caption_cols.size(); ++j) {
      if (caption_cols[j] >= m.replay_text.rows()) throw Error(ErrorCode::IndexOutOfRange, "replay caption id");
      std::copy(m.replay_text.row(caption_cols[j]).begin(), m.replay_text.row(caption_cols[j]).end(), e.row(j).begin());
    }
    const auto e_norms = normalize_rows(e);

    PairGrad rep = pair_loss(zr, e, rtarget, tau, grads);
    out.loss.replay = 0.5 * (rep.loss.image_to_text + rep.loss.text_to_image);
    if (grads) {
      dlog_tau += rep.dlog_tau;
      const Matrix dpre = normalize_backward(zr, zr_norms, rep.dz);
      Matrix dt = dpre;
      if (separate) {
        add_into(g.replay_w, kernels::matmul_atb(dpre, rpass.t));
        add_into(g.replay_b, column_sums(dpre));
        dt = kernels::matmul_ab(dpre, m.replay_w);
      }
      trunk_backward(m, replay->x, rpass, dt, g);
      const Matrix de = normalize_backward(e, e_norms, rep.dc);
      for (std::size_t j = 0; j < caption_cols.size(); ++j) {
        auto dst = g.replay_text.row(caption_cols[j]);
        const auto src = de.row(j);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

  out.loss.total = out.loss.main + out.loss.replay;
  if (grads && m.config.learn_tau) g.log_tau = dlog_tau;
  return out;
}

}  // namespace

LossAndGrads loss_and_grads(const ModelState& m, const Batch& batch, const ReplayBatch* replay,
                            const TrainConfig& cfg) {
  return forward_backward(m, batch, replay, cfg, true);
}

LossReport evaluate_loss(const ModelState& m, const Batch& batch, const ReplayBatch* replay, const TrainConfig& cfg) {
  return forward_backward(m, batch, replay, cfg, false).loss;
}

AdamState init_adam(const ModelState& m) {
  AdamState s;
  s.first = zeros_like(m);
  s.second = zeros_like(m);
  return s;
}

double learning_rate(const TrainConfig& cfg, std::size_t t, std::size_t total_steps) {
  const double warm = cfg.warmup_steps == 0
                          ? 1.0
                          : std::min(static_cast<double>(t) / static_cast<double>(cfg.warmup_steps), 1.0);
  double lr = cfg.lr_max * warm;
  if (cfg.cosine_decay && t > cfg.warmup_steps && total_steps > cfg.warmup_steps) {
    const double progress = std::min(
        1.0, static_cast<double>(t - cfg.warmup_steps) / static_cast<double>(total_steps - cfg.warmup_steps));
    lr = cfg.lr_max * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
  }
  return lr;
}

bool block_is_active(const std::string& block, const TrainConfig& cfg) {
  if (block.rfind("replay_head", 0) == 0) return cfg.replay_enabled() && cfg.replay_mode == ReplayMode::SeparateProj;
  if (block == "replay_text_table") return cfg.replay_enabled();
  return true;
}

void adam_step(ModelState& params, const ModelState& grads, AdamState& state, std::size_t step_index,
               const TrainConfig& cfg, std::size_t total_steps) {
  struct Block {
    std::string name;
    std::span<double> p;
  };
  std::vector<Block> p;
  std::vector<std::span<const double>> g;
  std::vector<std::span<double>> m1, m2;
  for_each_block(params, [&](const std::string& name, std::span<double> v) { p.push_back({name, v}); });
  for_each_block(grads, [&](const std::string&, std::span<const double> v) { g.push_back(v); });
  for_each_block(state.first, [&](const std::string&, std::span<double> v) { m1.push_back(v); });
  for_each_block(state.second, [&](const std::string&, std::span<double> v) { m2.push_back(v); });
  if (g.size() != p.size() || m1.size() != p.size() || m2.size() != p.size())
    throw Error(ErrorCode::DimensionMismatch, "adam_step: parameter and state layouts differ");

  const double lr = learning_rate(cfg, step_index, total_steps);
  const double t = static_cast<double>(step_index);
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
  for (std::size_t b = 0; b < p.size(); ++b) {
    if (g[b].size() != p[b].p.size()) throw Error(ErrorCode::DimensionMismatch, "adam_step: block " + p[b].name);
    const bool decay = cfg.weight_decay > 0.0 && p[b].name != "log_tau" && block_is_active(p[b].name, cfg);
    const double shrink = 1.0 - lr * cfg.weight_decay;
    for (std::size_t i = 0; i < p[b].p.size(); ++i) {
      if (decay) p[b].p[i] *= shrink;
      const double gi = g[b][i];
      m1[b][i] = cfg.adam_beta1 * m1[b][i] + (1.0 - cfg.adam_beta1) * gi;
      m2[b][i] = cfg.adam_beta2 * m2[b][i] + (1.0 - cfg.adam_beta2) * gi * gi;
      const double mhat = m1[b][i] / bc1;
      const double vhat = m2[b][i] / bc2;
      const double denom = std::sqrt(vhat) + cfg.adam_eps;
      if (denom > 0.0) p[b].p[i] -= lr * mhat / denom;
    }
  }
  state.step = step_index;
  if (params.config.learn_tau) params.tau = std::exp(params.log_tau);
}

MetricsRow epoch_metrics(const ModelState& m, const Dataset& ds) {
  MetricsRow row;
  const auto test = ds.indices(Split::Test);
  if (test.empty()) return row;
  const Matrix embs = encode_images(m, ds.features(test)).vectors;
  std::vector<std::size_t> labels(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) labels[i] = ds.samples[test[i]].species_id;
  std::vector<std::size_t> all(ds.species_count());
  std::iota(all.begin(), all.end(), 0);
  row.zeroshot_acc = zero_shot_ncc(embs, labels, textual_prototypes(m, all)).accuracy;
  for (const auto& ag : axis_geometry(ds, test, embs, nullptr)) {
    row.rho.push_back(ag.rho_empirical);
    row.fdr.push_back(ag.fdr ? std::optional<double>(ag.fdr->ratio) : std::nullopt);
  }
  return row;
}

TrainResult train_run(const Dataset& ds, const ModelConfig& model_cfg, const TrainConfig& cfg,
                      const TrainCallbacks& callbacks) {
  ModelConfig mc = model_cfg;
  mc.tau = cfg.tau;
  return train_from(init_model(cfg.seed, mc, ds), ds, cfg, callbacks);
}

TrainResult train_from(ModelState model, const Dataset& ds, const TrainConfig& cfg, const TrainCallbacks& callbacks) {
  cfg.validate();
  const auto train = ds.indices(Split::Train);
  if (train.size() < 2) throw Error(ErrorCode::BatchTooSmall, "training split has fewer than 2 samples");

  std::optional<ReplayPool> pool;
  if (cfg.replay_enabled()) {
    pool = generate_replay_pool(ds, model.replay_text.rows(), cfg.replay_pool_size, cfg.replay_noise,
                                derive_seed(cfg.seed, 0x5E9A1));
  }

  const std::size_t bs = cfg.batch_size;
  std::size_t batches = train.size() / bs;
  if (train.size() % bs >= 2) ++batches;
  const std::size_t total_steps = batches * cfg.epochs;

  TrainResult res;
  res.optimizer = init_adam(model);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = train;
    Rng shuffle(cfg.seed + epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);
    Rng replay_rng(derive_seed(cfg.seed + epoch, 0x7E91A1));

    std::vector<double> totals, mains, replays;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * bs;
      const std::size_t hi = std::min(order.size(), lo + bs);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                   order.begin() + static_cast<std::ptrdiff_t>(hi));
      Batch batch{ds.features(idx), {}};
      for (std::size_t i : idx) batch.taxa.push_back(ds.taxa[ds.samples[i].species_id]);

      std::optional<ReplayBatch> rb;
      if (pool) {
        rb.emplace();
        rb->x = Matrix(cfg.replay_batch_size, ds.config.d_in);
        for (std::size_t r = 0; r < cfg.replay_batch_size; ++r) {
          const std::size_t k = replay_rng.index(pool->x.rows());
          std::copy(pool->x.row(k).begin(), pool->x.row(k).end(), rb->x.row(r).begin());
          rb->caption_ids.push_back(pool->caption_ids[k]);
        }
      }

      auto lg = loss_and_grads(model, batch, rb ? &*rb : nullptr, cfg);
      if (!std::isfinite(lg.loss.total)) {
        std::ostringstream msg;
        msg << "epoch " << epoch << " batch " << b << " step " << step + 1 << ": main=" << lg.loss.main
            << " replay=" << lg.loss.replay << " tau=" << model.tau;
        throw Error(ErrorCode::NonFiniteLoss, msg.str());
      }
      totals.push_back(lg.loss.total);
      mains.push_back(lg.loss.main);
      replays.push_back(lg.loss.replay);
      adam_step(model, lg.grads, res.optimizer, ++step, cfg, total_steps);
    }

    MetricsRow row;
    if (callbacks.eval_metrics) row = epoch_metrics(model, ds);
    row.step = step;
    row.epoch = epoch;
    const double nb = static_cast<double>(totals.size());
    row.loss = ordered_sum(totals) / nb;
    row.main_loss = ordered_sum(mains) / nb;
    row.replay_loss = ordered_sum(replays) / nb;
    res.metrics.push_back(row);
    if (callbacks.on_epoch) callbacks.on_epoch(row, model);
  }
  res.model = std::move(model);
  return res;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out << "step,epoch,loss,main_loss,replay_loss,zeroshot_acc,rho_axis0,fdr_axis0,rho_axis1,fdr_axis1\n";
  auto opt = [](const std::vector<std::optional<double>>& v, std::size_t i) {
    return i < v.size() && v[i] ? format_double(*v[i]) : std::string();
  };
  for (const auto& r : rows) {
    out << r.step << ',' << r.epoch << ',' << format_double(r.loss) << ',' << format_double(r.main_loss) << ','
        << format_double(r.replay_loss) << ',' << (r.zeroshot_acc ? format_double(*r.zeroshot_acc) : "") << ','
        << opt(r.rho, 0) << ',' << opt(r.fdr, 0) << ',' << opt(r.rho, 1) << ',' << opt(r.fdr, 1) << '\n';
  }
  return out.str();
}

}  // namespace hclab
