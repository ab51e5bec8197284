#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "hclab/train.hpp"
#include "hclab/verify.hpp"

using namespace hclab;

TEST_CASE("two-sample loss equals log(1 + e^-1)") {
  EmbeddingBatch z{Matrix{{1.0, 0.0}, {0.0, 1.0}}};
  const auto r = contrastive_loss(z, z, 1.0);
  CHECK(std::abs(r.main - 0.31326168751822286) < 1e-12);
  CHECK(std::abs(r.image_to_text - r.text_to_image) < 1e-15);
}

TEST_CASE("asymmetric two-sample loss matches the reference") {
  EmbeddingBatch z{Matrix{{1.0, 0.0}, {0.6, 0.8}}};
  EmbeddingBatch c{Matrix{{1.0, 0.0}, {0.0, 1.0}}};
  const auto r = contrastive_loss(z, c, 0.5);
  CHECK(std::abs(r.image_to_text - 0.3199716317214627) < 1e-12);
  CHECK(std::abs(r.text_to_image - 0.2775007034180582) < 1e-12);
  CHECK(std::abs(r.main - 0.29873616756976046) < 1e-12);
}

TEST_CASE("single pair gives zero loss") {
  EmbeddingBatch z{Matrix{{0.6, 0.8}}};
  CHECK(contrastive_loss(z, z, 0.1).main == 0.0);
}

TEST_CASE("clip loss with shared targets and its logit gradient") {
  const Matrix logits{{2.0, 0.5}, {1.0, -1.0}, {0.0, 1.5}};
  const std::vector<std::size_t> target{0, 0, 1};
  const auto cl = clip_loss(logits, target);
  CHECK(std::abs(cl.image_to_text - 0.17658485566949245) < 1e-12);
  CHECK(std::abs(cl.text_to_image - 0.23294165438942027) < 1e-12);
  const double h = 1e-6;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      Matrix lp = logits, lm = logits;
      lp(i, j) += h;
      lm(i, j) -= h;
      const auto p = clip_loss(lp, target), m = clip_loss(lm, target);
      const double fd = (0.5 * (p.image_to_text + p.text_to_image) - 0.5 * (m.image_to_text + m.text_to_image)) / (2 * h);
      CHECK(std::abs(fd - cl.dlogits(i, j)) < 1e-8);
    }
}

TEST_CASE("analytic gradients match central differences") {
  for (std::size_t i = 0; i < 12; ++i) {
    CAPTURE(i);
    const auto inst = gradient_instance(77, i);
    const auto gc = check_gradients(inst.model, inst.batch, inst.replay ? &*inst.replay : nullptr, inst.cfg);
    CHECK(gc.entries > 0);
    CHECK(gc.max_rel_error < 1e-6);
  }
}

TEST_CASE("tiny batches are rejected") {
  const auto inst = gradient_instance(1, 0);
  Batch b;
  b.x = Matrix(1, inst.batch.x.cols());
  b.taxa = {inst.batch.taxa[0]};
  try {
    loss_and_grads(inst.model, b, nullptr, inst.cfg);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BatchTooSmall);
  }
}

TEST_CASE("warmup and cosine schedule") {
  TrainConfig c;
  c.lr_max = 0.1;
  c.warmup_steps = 10;
  CHECK(learning_rate(c, 5, 100) == doctest::Approx(0.05));
  CHECK(learning_rate(c, 50, 100) == doctest::Approx(0.1));
  c.cosine_decay = true;
  CHECK(learning_rate(c, 55, 100) == doctest::Approx(0.05));
  CHECK(learning_rate(c, 100, 100) == doctest::Approx(0.0));
}

TEST_CASE("first adam step moves by lr times the gradient sign") {
  auto inst = gradient_instance(5, 0);
  inst.cfg.lr_max = 0.01;
  inst.cfg.warmup_steps = 0;
  const auto lg = loss_and_grads(inst.model, inst.batch, nullptr, inst.cfg);
  ModelState p = inst.model;
  AdamState st = init_adam(p);
  adam_step(p, lg.grads, st, 1, inst.cfg, 10);
  CHECK(st.step == 1);
  const double g = lg.grads.w_enc(0, 0);
  const double moved = inst.model.w_enc(0, 0) - p.w_enc(0, 0);
  CHECK(std::abs(moved - 0.01 * g / (std::abs(g) + 1e-8)) < 1e-12);
}

TEST_CASE("decoupled weight decay skips inactive blocks") {
  auto inst = gradient_instance(5, 0);
  inst.cfg.replay_mode = ReplayMode::None;
  inst.cfg.lr_max = 0.1;
  inst.cfg.warmup_steps = 0;
  inst.cfg.weight_decay = 0.5;
  ModelState p = inst.model;
  AdamState st = init_adam(p);
  adam_step(p, zeros_like(p), st, 1, inst.cfg, 10);
  CHECK(p.w_enc(0, 0) == doctest::Approx(inst.model.w_enc(0, 0) * 0.95));
  CHECK(p.replay_w == inst.model.replay_w);
  CHECK_FALSE(block_is_active("replay_head.w", inst.cfg));
}

TEST_CASE("short training lowers the loss and is reproducible") {
  const Dataset ds = generate_dataset(fixtures::small_synth());
  ModelConfig mc;
  mc.d_emb = 12;
  TrainConfig tc;
  tc.lr_max = 0.01;
  tc.batch_size = 16;
  tc.epochs = 4;
  tc.seed = 2;
  const auto a = train_run(ds, mc, tc);
  const auto b = train_run(ds, mc, tc);
  CHECK(a.model == b.model);
  REQUIRE(a.metrics.size() == 4);
  CHECK(a.metrics.back().loss < a.metrics.front().loss);
  const std::string csv = metrics_csv(a.metrics);
  CHECK(csv.rfind("step,epoch,loss,main_loss,replay_loss,zeroshot_acc,rho_axis0,fdr_axis0,rho_axis1,fdr_axis1\n", 0) == 0);
}
