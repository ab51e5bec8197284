#include "hclab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hclab/geometry.hpp"

namespace hclab {

namespace {

Json matrix_json(const Matrix& m) { return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}}; }

SuiteResult pass(std::string suite, std::string detail) { return {std::move(suite), true, std::move(detail), nullptr}; }

SuiteResult fail(std::string suite, std::string detail, Json instance) {
  return {std::move(suite), false, std::move(detail), std::move(instance)};
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

Matrix random_unit_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m = Matrix::gaussian(rows, cols, rng);
  normalize_rows(m);
  return m;
}

std::vector<double> random_unit(std::size_t d, Rng& rng) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.gaussian();
  return normalized(v);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

GradCheck check_gradients(const ModelState& m, const Batch& batch, const ReplayBatch* replay, const TrainConfig& cfg,
                          double h, double floor) {
  const ModelState analytic = loss_and_grads(m, batch, replay, cfg).grads;
  std::vector<std::span<const double>> ga;
  for_each_block(analytic, [&](const std::string&, std::span<const double> v) { ga.push_back(v); });

  ModelState probe = m;
  std::vector<std::pair<std::string, std::span<double>>> blocks;
  for_each_block(probe, [&](const std::string& name, std::span<double> v) { blocks.emplace_back(name, v); });

  auto loss_at = [&]() {
    if (probe.config.learn_tau) probe.tau = std::exp(probe.log_tau);
    return evaluate_loss(probe, batch, replay, cfg).total;
  };

  GradCheck out;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    auto& [name, vals] = blocks[b];
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + h;
      const double up = loss_at();
      vals[i] = saved - h;
      const double down = loss_at();
      vals[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = ga[b][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++out.entries;
      if (rel > out.max_rel_error || out.entries == 1) {
        out.max_rel_error = rel;
        out.worst_block = name;
        out.worst_index = i;
        out.analytic = a;
        out.numeric = numeric;
      }
    }
  }
  if (probe.config.learn_tau) probe.tau = std::exp(probe.log_tau);
  return out;
}

Json GradInstance::describe() const {
  Json taxa = Json::array();
  for (const auto& t : batch.taxa) taxa.push_back(canonical_string(t));
  Json j{{"model_config", to_json(model.config)},
         {"train_config", to_json(cfg)},
         {"batch_x", matrix_json(batch.x)},
         {"batch_taxa", taxa},
         {"checkpoint", checkpoint_to_json(model)}};
  if (replay) j["replay"] = {{"x", matrix_json(replay->x)}, {"caption_ids", replay->caption_ids}};
  return j;
}

GradInstance gradient_instance(std::uint64_t seed, std::size_t i) {
  const std::uint64_t s = derive_seed(seed, 0x6AD0 + i);
  SynthConfig sc;
  sc.seed = s;
  sc.branching = {1, 1, 1, 2, 1, 2, 2};
  sc.d_latent = 4;
  sc.d_in = 8;
  sc.samples_per_species = 4;
  sc.noise_sigma = 0.3;
  sc.variant_axes = {{"stage", {"young", "old"}, 0.5}};
  const Dataset ds = generate_dataset(sc);

  ModelConfig mc;
  mc.d_emb = 4;
  mc.mode = i % 2 == 0 ? EncoderMode::Linear : EncoderMode::Mlp;
  mc.d_hidden = 5;
  mc.learn_tau = i % 4 == 3;
  mc.label_mode = i % 5 == 4 ? LabelMode::Scientific : LabelMode::Taxonomic;
  mc.replay_captions = 3;
  mc.tau = i % 3 == 0 ? 0.5 : 0.1;

  GradInstance g;
  g.model = init_model(s, mc, ds);
  g.cfg.tau = mc.tau;
  g.cfg.replay_mode = static_cast<ReplayMode>(i % 3);
  g.cfg.replay_batch_size = g.cfg.replay_mode == ReplayMode::None ? 0 : 4;
  g.cfg.dedup_labels = i % 7 == 6;
  // Nonzero biases so their gradients are exercised away from the init point.
  Rng rng(derive_seed(s, 1));
  for (auto& v : g.model.b_enc) v = 0.1 * rng.gaussian();
  for (auto& v : g.model.replay_b) v = 0.1 * rng.gaussian();
  if (g.model.hidden)
    for (auto& v : g.model.hidden->b) v = 0.1 * rng.gaussian();

  std::vector<std::size_t> rows;
  for (std::size_t k = 0; k < 6; ++k) rows.push_back(rng.index(ds.samples.size()));
  g.batch.x = ds.features(rows);
  for (std::size_t r : rows) g.batch.taxa.push_back(ds.taxa[ds.samples[r].species_id]);
  if (g.cfg.replay_enabled()) {
    const auto pool = generate_replay_pool(ds, mc.replay_captions, 16, 0.3, derive_seed(s, 2));
    ReplayBatch rb;
    rb.x = Matrix(4, sc.d_in);
    for (std::size_t k = 0; k < 4; ++k) {
      const std::size_t p = rng.index(pool.x.rows());
      std::copy(pool.x.row(p).begin(), pool.x.row(p).end(), rb.x.row(k).begin());
      rb.caption_ids.push_back(pool.caption_ids[p]);
    }
    g.replay = std::move(rb);
  }
  return g;
}

SuiteResult suite_gradient_fd(std::uint64_t seed, std::size_t configs) {
  double worst = 0.0;
  for (std::size_t i = 0; i < configs; ++i) {
    const GradInstance g = gradient_instance(seed, i);
    const GradCheck c = check_gradients(g.model, g.batch, g.replay ? &*g.replay : nullptr, g.cfg);
    worst = std::max(worst, c.max_rel_error);
    if (!(c.max_rel_error < 1e-6)) {
      Json inst = g.describe();
      inst["index"] = i;
      inst["worst"] = {{"block", c.worst_block}, {"entry", c.worst_index}, {"analytic", c.analytic}, {"numeric", c.numeric}};
      return fail("gradient_fd", "config " + std::to_string(i) + " rel error " + fmt(c.max_rel_error) + " in " +
                                     c.worst_block,
                  inst);
    }
  }
  return pass("gradient_fd", std::to_string(configs) + " configs, max rel error " + fmt(worst));
}

namespace {

struct TaylorInstance {
  PrototypeSet protos;
  std::size_t s = 0;
  double tau = 1.0;
  Json describe() const {
    return Json{{"mu", matrix_json(protos.mu)}, {"s", s}, {"tau", tau}};
  }
};

TaylorInstance taylor_instance(Rng& rng, bool orthonormal, double tau) {
  TaylorInstance t;
  const std::size_t S = 4 + rng.index(5);
  const std::size_t d = 8 + rng.index(9);
  if (orthonormal) {
    const auto qr = householder_qr(Matrix::gaussian(d, S, rng));
    t.protos.mu = qr.q.transpose();
  } else {
    t.protos.mu = random_unit_rows(S, d, rng);
  }
  t.protos.species_ids.resize(S);
  std::iota(t.protos.species_ids.begin(), t.protos.species_ids.end(), 0);
  t.s = rng.index(S);
  t.tau = tau;
  return t;
}

constexpr double kTaus[3] = {0.2, 0.5, 1.0};

// Standardized third central moment of b_k = v^T mu_k / tau under the
// softmax weights at mu_s.
double skewness(const TaylorInstance& t, const std::vector<double>& v) {
  const auto base = taylor_analysis(t.protos, t.s, std::vector<double>(v.size(), 0.0), t.tau);
  const std::size_t S = t.protos.mu.rows();
  std::vector<double> b(S);
  double mean = 0.0;
  for (std::size_t k = 0; k < S; ++k) {
    b[k] = dot(v, t.protos.mu.row(k)) / t.tau;
    mean += base.w[k] * b[k];
  }
  double m2 = 0.0, m3 = 0.0;
  for (std::size_t k = 0; k < S; ++k) {
    const double c = b[k] - mean;
    m2 += base.w[k] * c * c;
    m3 += base.w[k] * c * c * c;
  }
  return m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
}

}  // namespace

SuiteResult suite_hessian_span(std::uint64_t seed, std::size_t instances) {
  Rng rng(derive_seed(seed, 0x4E55));
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const TaylorInstance t = taylor_instance(rng, false, kTaus[i % 3]);
    const Matrix u = prototype_basis(t.protos);
    std::vector<double> delta = random_unit(t.protos.mu.cols(), rng);
    for (std::size_t c = 0; c < u.cols(); ++c) {
      const auto uc = u.col(c);
      const double p = dot(uc, delta);
      for (std::size_t j = 0; j < delta.size(); ++j) delta[j] -= p * uc[j];
    }
    delta = normalized(delta);
    const auto ta = taylor_analysis(t.protos, t.s, delta, t.tau);
    const double v = std::max(std::abs(ta.quadratic), std::abs(ta.quadratic_approx));
    worst = std::max(worst, v);
    if (!(v < 1e-12)) {
      Json inst = t.describe();
      inst["delta"] = delta;
      return fail("hessian_span", "instance " + std::to_string(i) + " quadratic form " + fmt(v), inst);
    }
  }
  return pass("hessian_span", std::to_string(instances) + " instances, max |quadratic| " + fmt(worst));
}

SuiteResult suite_taylor_remainder(std::uint64_t seed, std::size_t instances) {
  Rng rng(derive_seed(seed, 0x7A71));
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const TaylorInstance t = taylor_instance(rng, false, kTaus[i % 3]);
    // Redraw directions whose cubic term degenerates; the remainder is then
    // O(t^4) and the t^3 ratio is meaningless.
    std::vector<double> v;
    do {
      v = random_unit(t.protos.mu.cols(), rng);
    } while (std::abs(skewness(t, v)) < 0.5);
    std::vector<double> scaled;
    for (double step : {0.1, 0.05, 0.025}) {
      // |delta| = t * tau keeps every b_k = delta^T mu_k / tau of order t.
      std::vector<double> delta(v);
      for (auto& x : delta) x *= step * t.tau;
      const auto ta = taylor_analysis(t.protos, t.s, delta, t.tau);
      scaled.push_back(ta.remainder / (step * step * step));
    }
    const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
    const double spread = (*hi - *lo) / std::abs(scaled.back());
    worst = std::max(worst, spread);
    if (!(spread < 0.25)) {
      Json inst = t.describe();
      inst["direction"] = v;
      inst["remainder_over_t3"] = scaled;
      return fail("taylor_remainder", "instance " + std::to_string(i) + " remainder/t^3 spread " + fmt(spread), inst);
    }
  }
  return pass("taylor_remainder", std::to_string(instances) + " instances, max spread " + fmt(worst));
}

SuiteResult suite_first_order(std::uint64_t seed, std::size_t instances) {
  Rng rng(derive_seed(seed, 0xF1F0));
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const TaylorInstance t = taylor_instance(rng, true, 0.02);
    const std::vector<double> delta = random_unit(t.protos.mu.cols(), rng);
    const auto ta = taylor_analysis(t.protos, t.s, delta, t.tau);
    const double ws = ta.w[t.s];
    worst = std::max(worst, std::abs(ta.first_order));
    if (!(ws > 1.0 - 1e-9) || !(std::abs(ta.first_order) < 1e-10)) {
      Json inst = t.describe();
      inst["delta"] = delta;
      inst["w_s"] = ws;
      inst["first_order"] = ta.first_order;
      return fail("first_order", "instance " + std::to_string(i) + " first-order term " + fmt(ta.first_order), inst);
    }
  }
  return pass("first_order", std::to_string(instances) + " instances, max |first order| " + fmt(worst));
}

SuiteResult suite_span_orthogonality(const ModelState* checkpoint, std::uint64_t seed) {
  const std::string name = "span_orthogonality";
  std::optional<ModelState> fresh;
  if (!checkpoint) {
    SynthConfig sc;
    sc.seed = seed;
    sc.branching = {1, 1, 1, 2, 1, 2, 2};
    sc.d_latent = 8;
    sc.d_in = 8;
    sc.samples_per_species = 4;
    ModelConfig mc;
    fresh = init_model(seed, mc, generate_dataset(sc));
    checkpoint = &*fresh;
  }
  const ModelState& m = *checkpoint;
  std::vector<std::size_t> ids(m.taxa.size());
  std::iota(ids.begin(), ids.end(), 0);

  PrototypeSet protos;
  try {
    protos = textual_prototypes(m, ids);
  } catch (const Error& e) {
    return fail(name, std::string("prototypes undefined: ") + e.what(), Json{{"checkpoint", checkpoint_to_json(m)}});
  }
  for (std::size_t k = 0; k < protos.mu.rows(); ++k) {
    const double n = norm2(protos.mu.row(k));
    if (!(std::abs(n - 1.0) < 1e-10))
      return fail(name, "prototype " + std::to_string(k) + " has norm " + fmt(n),
                  Json{{"species", k}, {"norm", n}, {"mu", matrix_json(protos.mu)}});
  }
  const Matrix u = prototype_basis(protos);
  const Matrix gram = matmul(u.transpose(), u);
  const double orth = max_abs_diff(gram, Matrix::identity(u.cols()));
  if (!(orth < 1e-10)) return fail(name, "basis not orthonormal: " + fmt(orth), Json{{"mu", matrix_json(protos.mu)}});

  Rng rng(derive_seed(seed, 0x5BA0));
  const std::size_t d = protos.mu.cols();
  VariationMatrix inside, outside;
  inside.d = matmul(u, Matrix::gaussian(u.cols(), 3, rng));
  const double rho_in = explained_variance_ratio(protos, inside);
  if (!(std::abs(rho_in - 1.0) < 1e-10))
    return fail(name, "span-contained rho = " + fmt(rho_in), Json{{"mu", matrix_json(protos.mu)}, {"d", matrix_json(inside.d)}});
  std::string detail = "rank " + std::to_string(u.cols()) + ", rho(in) - 1 = " + fmt(rho_in - 1.0);
  if (u.cols() < d) {
    Matrix g = Matrix::gaussian(d, 3, rng);
    outside.d = g - matmul(u, matmul(u.transpose(), g));
    const double rho_out = explained_variance_ratio(protos, outside);
    if (!(std::abs(rho_out) < 1e-10))
      return fail(name, "span-orthogonal rho = " + fmt(rho_out),
                  Json{{"mu", matrix_json(protos.mu)}, {"d", matrix_json(outside.d)}});
    detail += ", rho(out) = " + fmt(rho_out);
  } else {
    detail += ", span is full so no orthogonal check";
  }
  return pass(name, detail);
}

SuiteResult suite_qr(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x0C12));
  {
    const auto qr = householder_qr(Matrix{{3.0}, {4.0}});
    if (std::abs(qr.r(0, 0) - 5.0) > 1e-12 || std::abs(qr.q(0, 0) - 0.6) > 1e-12 || std::abs(qr.q(1, 0) - 0.8) > 1e-12)
      return fail("qr", "hand instance [[3],[4]]", Json{{"q", matrix_json(qr.q)}, {"r", matrix_json(qr.r)}});
  }
  for (std::size_t i = 0; i < 20; ++i) {
    const std::size_t n = 1 + rng.index(6);
    const std::size_t m = n + rng.index(5);
    Matrix a = Matrix::gaussian(m, n, rng);
    std::size_t expect_rank = n;
    if (i % 4 == 3 && n >= 2) {
      // duplicate a column to force rank deficiency
      for (std::size_t r = 0; r < m; ++r) a(r, n - 1) = 2.0 * a(r, 0);
      expect_rank = n - 1;
    }
    const auto qr = householder_qr(a);
    const double recon = max_abs_diff(matmul(qr.q, qr.r), a);
    const double orth = max_abs_diff(matmul(qr.q.transpose(), qr.q), Matrix::identity(qr.rank));
    bool pivots_ok = true;
    for (std::size_t k = 0; k < qr.rank; ++k) pivots_ok = pivots_ok && qr.r(k, qr.pivot_cols[k]) >= 0.0;
    if (qr.rank != expect_rank || !(recon < 1e-12 * (1.0 + a.frobenius())) || !(orth < 1e-12) || !pivots_ok)
      return fail("qr", "instance " + std::to_string(i) + " recon " + fmt(recon) + " orth " + fmt(orth) + " rank " +
                            std::to_string(qr.rank),
                  Json{{"a", matrix_json(a)}});
  }
  return pass("qr", "hand instance and 20 random matrices");
}

SuiteResult suite_svd(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x05BD));
  {
    const auto s = jacobi_svd(Matrix{{0.0, 2.0}, {1.0, 0.0}});
    if (std::abs(s.singular_values[0] - 2.0) > 1e-12 || std::abs(s.singular_values[1] - 1.0) > 1e-12)
      return fail("svd", "hand instance [[0,2],[1,0]]", Json{{"singular_values", s.singular_values}});
  }
  for (std::size_t i = 0; i < 20; ++i) {
    const std::size_t m = 1 + rng.index(7);
    const std::size_t n = 1 + rng.index(7);
    const Matrix a = Matrix::gaussian(m, n, rng);
    const auto s = jacobi_svd(a);
    const std::size_t k = std::min(m, n);
    Matrix us = s.u;
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < k; ++c) us(r, c) *= s.singular_values[c];
    const double recon = max_abs_diff(matmul(us, s.vt), a);
    const double orth_u = max_abs_diff(matmul(s.u.transpose(), s.u), Matrix::identity(k));
    const double orth_v = max_abs_diff(matmul(s.vt, s.vt.transpose()), Matrix::identity(k));
    bool sorted = true;
    for (std::size_t c = 0; c < k; ++c) {
      sorted = sorted && s.singular_values[c] >= 0.0;
      if (c) sorted = sorted && s.singular_values[c] <= s.singular_values[c - 1];
    }
    if (!(recon < 1e-10) || !(orth_u < 1e-10) || !(orth_v < 1e-10) || !sorted)
      return fail("svd", "instance " + std::to_string(i) + " recon " + fmt(recon) + " orth " + fmt(std::max(orth_u, orth_v)),
                  Json{{"a", matrix_json(a)}});
  }
  return pass("svd", "hand instance and 20 random matrices");
}

SuiteResult suite_hungarian(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x4A6E));
  for (std::size_t i = 0; i < 50; ++i) {
    const std::size_t n = 1 + i % 6;
    Matrix c(n, n);
    for (auto& v : c.data()) v = static_cast<double>(rng.index(21));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> best_perm;
    do {
      double cost = 0.0;
      for (std::size_t r = 0; r < n; ++r) cost += c(r, perm[r]);
      if (cost < best) {
        best = cost;
        best_perm = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto a = hungarian_assign(c);
    if (a.cost != best || a.row_to_col != best_perm)
      return fail("hungarian", "instance " + std::to_string(i) + " cost " + fmt(a.cost) + " vs exhaustive " + fmt(best),
                  Json{{"cost", matrix_json(c)}});
  }
  return pass("hungarian", "50 matrices, n <= 6, equal to exhaustive search");
}

std::vector<SuiteResult> run_verify(const ModelState* checkpoint, std::uint64_t seed) {
  std::vector<SuiteResult> out;
  auto guarded = [&](const std::string& name, auto&& fn) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back(fail(name, std::string("threw: ") + e.what(), Json{{"seed", seed}}));
    }
  };
  guarded("gradient_fd", [&] { return suite_gradient_fd(seed); });
  guarded("taylor_remainder", [&] { return suite_taylor_remainder(seed); });
  guarded("hessian_span", [&] { return suite_hessian_span(seed); });
  guarded("first_order", [&] { return suite_first_order(seed); });
  guarded("span_orthogonality", [&] { return suite_span_orthogonality(checkpoint, seed); });
  guarded("qr", [&] { return suite_qr(seed); });
  guarded("svd", [&] { return suite_svd(seed); });
  guarded("hungarian", [&] { return suite_hungarian(seed); });
  return out;
}

}  // namespace hclab
