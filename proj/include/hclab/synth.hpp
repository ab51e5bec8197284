#pragma once

// Seeded generator of synthetic tree-of-life datasets.
//
// Species latents are sums of per-node Gaussian vectors along the root-to-leaf
// path, so taxonomically close species get correlated latents. Intra-species
// variants (life stage, sex, ...) add global offset directions shared by all
// species. Raw features are a fixed linear mixing of the noisy latent.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hclab/numeric.hpp"
#include "hclab/taxa.hpp"

namespace hclab {

struct VariantAxis {
  std::string name;
  std::array<std::string, 2> values;
  double offset_scale = 0.0;

  friend bool operator==(const VariantAxis&, const VariantAxis&) = default;
};

struct SynthConfig {
  std::uint64_t seed = 1;
  std::array<std::size_t, kNumRanks> branching{1, 1, 1, 1, 1, 1, 2};
  std::size_t d_latent = 8;
  std::size_t d_in = 8;
  std::size_t samples_per_species = 32;
  double longtail_alpha = 0.0;
  double noise_sigma = 0.1;
  std::vector<VariantAxis> variant_axes;
  double rank_weight_decay = 0.8;
  RankLevel attribute_rank = RankLevel{2};

  std::size_t species_count() const;
  /// Throws ConfigInvalid with the first violated constraint.
  void validate() const;

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

enum class Split { Train, Test };

struct Sample {
  std::size_t species_id = 0;
  /// Value index (0 or 1) per variant axis, aligned with config.variant_axes.
  std::vector<int> variants;
  Split split = Split::Train;
  std::vector<double> x;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Generator internals kept for diagnostics; never used by training.
struct GroundTruth {
  Matrix species_latents;  // S x d_latent, unit rows
  std::vector<Matrix> variant_offsets;  // per axis: 2 x d_latent
  Matrix mixing;  // d_in x d_latent
  std::vector<double> bias;  // d_in

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

inline constexpr const char* kGroupAttribute = "grp_attr";

struct Dataset {
  SynthConfig config;
  std::vector<Taxon> taxa;
  std::vector<std::map<std::string, bool>> attributes;
  GroundTruth ground_truth;
  std::vector<Sample> samples;

  std::size_t species_count() const { return taxa.size(); }
  std::size_t count(Split split) const;
  std::vector<std::size_t> indices(Split split) const;
  /// Stacks the raw features of the given samples.
  Matrix features(const std::vector<std::size_t>& idx) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

Dataset generate_dataset(const SynthConfig& cfg);

/// Stratified, nested train-set subsample. The test split is untouched.
Dataset subsample_scale(const Dataset& ds, std::size_t n_train, std::uint64_t seed);

/// Generic image/caption pairs for the replay stream, drawn from cluster
/// centroids unrelated to the species tree but seen through the same mixing.
struct ReplayPool {
  Matrix x;
  std::vector<std::size_t> caption_ids;
  std::size_t caption_count = 0;
};

ReplayPool generate_replay_pool(const Dataset& ds, std::size_t caption_count, std::size_t pool_size,
                                double noise_sigma, std::uint64_t seed);

}  // namespace hclab
