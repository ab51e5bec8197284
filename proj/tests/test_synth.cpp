#include <map>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "hclab/synth.hpp"

using namespace hclab;

TEST_CASE("generation is deterministic and shaped by the config") {
  const auto cfg = fixtures::small_synth();
  const Dataset a = generate_dataset(cfg);
  const Dataset b = generate_dataset(cfg);
  CHECK(a == b);
  CHECK(a.species_count() == 8);
  CHECK(a.samples.size() == 8 * 24);
  CHECK(a.count(Split::Test) == 8 * 6);
  for (const auto& s : a.samples) {
    CHECK(s.x.size() == 16);
    CHECK(s.variants.size() == 2);
  }
  auto other = cfg;
  other.seed = 4;
  CHECK_FALSE(generate_dataset(other) == a);
}

TEST_CASE("species latents are unit rows") {
  const Dataset ds = generate_dataset(fixtures::small_synth());
  const Matrix& lat = ds.ground_truth.species_latents;
  for (std::size_t s = 0; s < lat.rows(); ++s) CHECK(norm2(lat.row(s)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("subsamples are stratified, nested and keep the test split") {
  const Dataset ds = generate_dataset(fixtures::small_synth());
  const Dataset small = subsample_scale(ds, 40, 5);
  const Dataset big = subsample_scale(ds, 120, 5);
  CHECK(small.count(Split::Train) == 40);
  CHECK(big.count(Split::Train) == 120);
  CHECK(small.count(Split::Test) == ds.count(Split::Test));
  std::map<std::size_t, int> per_species;
  for (auto i : small.indices(Split::Train)) ++per_species[small.samples[i].species_id];
  CHECK(per_species.size() == 8);
  for (auto [s, n] : per_species) CHECK(n >= 1);
  // Every sample of the small scale appears in the bigger one.
  std::set<std::vector<double>> big_rows;
  for (auto i : big.indices(Split::Train)) big_rows.insert(big.samples[i].x);
  for (auto i : small.indices(Split::Train)) CHECK(big_rows.count(small.samples[i].x) == 1);
}

TEST_CASE("invalid configs are rejected") {
  auto cfg = fixtures::small_synth();
  cfg.d_in = 4;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = fixtures::small_synth();
  cfg.d_latent = 1;
  CHECK_THROWS_AS(generate_dataset(cfg), Error);
  CHECK_THROWS_AS(subsample_scale(generate_dataset(fixtures::small_synth()), 100000, 1), Error);
}

TEST_CASE("replay pool draws the requested captions") {
  const Dataset ds = generate_dataset(fixtures::small_synth());
  const auto pool = generate_replay_pool(ds, 5, 40, 0.3, 8);
  CHECK(pool.x.rows() == 40);
  CHECK(pool.x.cols() == 16);
  for (std::size_t i = 0; i < 40; ++i) CHECK(pool.caption_ids[i] == i % 5);
}
