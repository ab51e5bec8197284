#include "doctest.h"
#include "fixtures.hpp"
#include "hclab/io.hpp"

using namespace hclab;

TEST_CASE("doubles format in shortest round-trip form") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0 / 3.0) == "0.3333333333333333");
  CHECK(std::stod(format_double(2.718281828459045)) == 2.718281828459045);
  CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
  CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
}

TEST_CASE("dataset round-trips through jsonl byte for byte") {
  const Dataset ds = generate_dataset(fixtures::small_synth());
  const std::string text = dataset_to_jsonl(ds);
  const Dataset back = dataset_from_jsonl(text);
  CHECK(back == ds);
  CHECK(dataset_to_jsonl(back) == text);
  CHECK_THROWS_AS(dataset_from_jsonl("{not json"), Error);
}

TEST_CASE("checkpoint round-trips with optimizer state") {
  const Dataset ds = generate_dataset(fixtures::small_synth());
  ModelConfig mc;
  mc.d_emb = 6;
  mc.mode = EncoderMode::Mlp;
  mc.d_hidden = 7;
  mc.learn_tau = true;
  const ModelState m = init_model(3, mc, ds);
  AdamState st = init_adam(m);
  st.step = 4;
  st.first.w_enc(0, 0) = 0.25;
  const Json j = checkpoint_to_json(m, &st);
  AdamState st2;
  const ModelState m2 = checkpoint_from_json(Json::parse(dump_json(j)), &st2);
  CHECK(m2 == m);
  CHECK(st2.step == 4);
  CHECK(st2.first == st.first);
  Json bad = j;
  bad["w_enc"]["rows"] = 99;
  CHECK_THROWS_AS(checkpoint_from_json(bad), Error);
}

TEST_CASE("run config overrides and unknown keys") {
  Json j = Json::parse(R"({"synth": {"seed": 1}, "scales": [2, 4]})");
  apply_override(j, "synth.seed=9");
  apply_override(j, "train.replay_mode=shared_proj");
  apply_override(j, "scales.1=6");
  const RunConfig c = run_config_from_json(j);
  CHECK(c.synth.seed == 9);
  CHECK(c.train.replay_mode == ReplayMode::SharedProj);
  CHECK(c.scales == std::vector<std::size_t>{2, 6});
  Json j2 = j;
  j2["synth"]["bogus"] = 1;
  CHECK_THROWS_AS(run_config_from_json(j2), Error);
  CHECK(run_config_from_json(to_json(c)).synth == c.synth);
}

TEST_CASE("projections csv header") {
  const Dataset ds = generate_dataset(fixtures::small_synth());
  ModelConfig mc;
  mc.d_emb = 12;
  const auto r = geometry_report(init_model(1, mc, ds), ds);
  const std::string csv = projections_csv(r, ds);
  CHECK(csv.rfind("sample_id,species_id,variant,px,py,pz\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == r.plane.coords.rows() + 1);
}
