#include "hclab/model.hpp"

#include <cmath>
#include <string>

#include "hclab/kernels.hpp"

namespace hclab {

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::ConfigInvalid, why); };
  if (d_emb < 3) fail("d_emb must be >= 3");
  if (mode == EncoderMode::Mlp && d_hidden == 0) fail("MLP mode needs d_hidden > 0");
  if (!(tau > 0.0) || !std::isfinite(tau)) fail("tau must be > 0");
  if (replay_captions < 2) fail("replay_captions must be >= 2");
}

bool ModelState::all_finite() const {
  bool ok = std::isfinite(tau);
  for_each_block(*this, [&](const std::string&, std::span<const double> v) {
    for (double x : v) ok = ok && std::isfinite(x);
  });
  return ok;
}

ModelState init_model(std::uint64_t seed, const ModelConfig& cfg, const Dataset& dataset) {
  cfg.validate();
  Rng rng(seed);
  ModelState m;
  m.config = cfg;
  m.d_in = dataset.config.d_in;
  m.taxa = dataset.taxa;
  const std::size_t d = cfg.d_emb;
  const auto inv_sqrt = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };

  std::size_t trunk_in = m.d_in;
  if (cfg.mode == EncoderMode::Mlp) {
    HiddenLayer h;
    h.w = Matrix::gaussian(cfg.d_hidden, m.d_in, rng, inv_sqrt(m.d_in));
    h.b.assign(cfg.d_hidden, 0.0);
    m.hidden = std::move(h);
    trunk_in = cfg.d_hidden;
  }
  m.w_enc = Matrix::gaussian(d, trunk_in, rng, inv_sqrt(trunk_in));
  m.b_enc.assign(d, 0.0);

  // Vocabulary: exactly the node names present in the dataset, sorted per rank.
  for (const auto& t : dataset.taxa)
    for (std::size_t r = 0; r < t.depth(); ++r) m.rank_tables[r].emplace(t.at(r), std::vector<double>{});
  for (auto& table : m.rank_tables)
    for (auto& [name, vec] : table) {
      vec.resize(d);
      for (auto& v : vec) v = inv_sqrt(d) * rng.gaussian();
    }

  m.replay_w = Matrix::gaussian(d, d, rng, inv_sqrt(d));
  m.replay_b.assign(d, 0.0);
  m.replay_text = Matrix::gaussian(cfg.replay_captions, d, rng, inv_sqrt(d));
  m.tau = cfg.tau;
  m.log_tau = std::log(cfg.tau);
  return m;
}

ModelState zeros_like(const ModelState& m) {
  ModelState z = m;
  for_each_block(z, [](const std::string&, std::span<double> v) { std::fill(v.begin(), v.end(), 0.0); });
  z.log_tau = 0.0;
  return z;
}

namespace {

template <class M, class Fn>
void visit_blocks(M& m, Fn&& fn) {
  fn(std::string("w_enc"), m.w_enc.data());
  fn(std::string("b_enc"), m.b_enc);
  if (m.hidden) {
    fn(std::string("hidden.w"), m.hidden->w.data());
    fn(std::string("hidden.b"), m.hidden->b);
  }
  for (std::size_t r = 0; r < kNumRanks; ++r)
    for (auto& [name, vec] : m.rank_tables[r]) fn("rank_tables." + std::to_string(r) + "." + name, vec);
  fn(std::string("replay_head.w"), m.replay_w.data());
  fn(std::string("replay_head.b"), m.replay_b);
  fn(std::string("replay_text_table"), m.replay_text.data());
}

}  // namespace

void for_each_block(ModelState& m, const std::function<void(const std::string&, std::span<double>)>& fn) {
  visit_blocks(m, [&](const std::string& name, auto& v) { fn(name, std::span<double>(v.data(), v.size())); });
  if (m.config.learn_tau) fn("log_tau", std::span<double>(&m.log_tau, 1));
}

void for_each_block(const ModelState& m,
                    const std::function<void(const std::string&, std::span<const double>)>& fn) {
  visit_blocks(m, [&](const std::string& name, const auto& v) {
    fn(name, std::span<const double>(v.data(), v.size()));
  });
  if (m.config.learn_tau) fn("log_tau", std::span<const double>(&m.log_tau, 1));
}

std::vector<double> normalize_rows(Matrix& u) {
  std::vector<double> norms(u.rows());
  for (std::size_t i = 0; i < u.rows(); ++i) {
    auto row = u.row(i);
    const double n = norm2(row);
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorCode::NormalizationUndefined, "row " + std::to_string(i) + " has norm " + std::to_string(n));
    }
    for (auto& v : row) v /= n;
    norms[i] = n;
  }
  return norms;
}

Matrix trunk_forward(const ModelState& m, const Matrix& xs, Matrix* hidden_out) {
  if (xs.cols() != m.d_in) {
    throw Error(ErrorCode::DimensionMismatch,
                "input has " + std::to_string(xs.cols()) + " features, model expects " + std::to_string(m.d_in));
  }
  if (!xs.all_finite()) throw Error(ErrorCode::DimensionMismatch, "non-finite input features");
  if (!m.hidden) return kernels::affine_rows(xs, m.w_enc, m.b_enc);
  Matrix h = kernels::affine_rows(xs, m.hidden->w, m.hidden->b);
  for (auto& v : h.data()) v = std::tanh(v);
  Matrix t = kernels::affine_rows(h, m.w_enc, m.b_enc);
  if (hidden_out) *hidden_out = std::move(h);
  return t;
}

EmbeddingBatch encode_images(const ModelState& m, const Matrix& xs, Head head) {
  Matrix t = trunk_forward(m, xs);
  if (head == Head::Replay) t = kernels::affine_rows(t, m.replay_w, m.replay_b);
  normalize_rows(t);
  return {std::move(t)};
}

std::vector<std::size_t> label_ranks(const ModelState& m, const Taxon& t) {
  std::vector<std::size_t> ranks;
  const std::size_t first = m.config.label_mode == LabelMode::Scientific ? 5 : 0;
  for (std::size_t r = first; r < t.depth(); ++r) ranks.push_back(r);
  if (ranks.empty()) ranks.push_back(t.depth() - 1);
  return ranks;
}

EmbeddingBatch encode_labels(const ModelState& m, const std::vector<Taxon>& taxa) {
  Matrix u(taxa.size(), m.d_emb());
  for (std::size_t i = 0; i < taxa.size(); ++i) {
    auto row = u.row(i);
    for (std::size_t r : label_ranks(m, taxa[i])) {
      const auto it = m.rank_tables[r].find(taxa[i].at(r));
      if (it == m.rank_tables[r].end()) {
        throw Error(ErrorCode::UnknownTaxonNode, "no rank-" + std::to_string(r) + " entry for '" + taxa[i].at(r) + "'");
      }
      for (std::size_t k = 0; k < row.size(); ++k) row[k] += it->second[k];
    }
  }
  normalize_rows(u);
  return {std::move(u)};
}

EmbeddingBatch encode_captions(const ModelState& m, const std::vector<std::size_t>& caption_ids) {
  Matrix u(caption_ids.size(), m.d_emb());
  for (std::size_t i = 0; i < caption_ids.size(); ++i) {
    if (caption_ids[i] >= m.replay_text.rows()) {
      throw Error(ErrorCode::IndexOutOfRange, "caption id " + std::to_string(caption_ids[i]));
    }
    const auto src = m.replay_text.row(caption_ids[i]);
    std::copy(src.begin(), src.end(), u.row(i).begin());
  }
  normalize_rows(u);
  return {std::move(u)};
}

}  // namespace hclab
