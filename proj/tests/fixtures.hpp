#pragma once

#include "hclab/synth.hpp"

namespace fixtures {

// 8 species, two variant axes, small enough for exhaustive checks.
inline hclab::SynthConfig small_synth(std::uint64_t seed = 3) {
  hclab::SynthConfig c;
  c.seed = seed;
  c.branching = {1, 1, 2, 1, 2, 1, 2};
  c.d_latent = 12;
  c.d_in = 16;
  c.samples_per_species = 24;
  c.noise_sigma = 0.2;
  c.variant_axes = {{"life_stage", {"juvenile", "adult"}, 0.5}, {"sex", {"male", "female"}, 0.4}};
  return c;
}

}  // namespace fixtures
