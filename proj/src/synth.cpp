#include "hclab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

namespace hclab {

namespace {

constexpr std::array<const char*, kNumRanks> kNodePrefix = {"Kingdom", "Phylum", "Class", "Order",
                                                             "Family",  "Genus",  "Species"};

std::vector<double> gaussian_vector(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.gaussian();
  return v;
}

// Number of species below one node at `rank`.
std::size_t leaves_below(const SynthConfig& cfg, std::size_t rank) {
  std::size_t n = 1;
  for (std::size_t r = rank + 1; r < kNumRanks; ++r) n *= cfg.branching[r];
  return n;
}

std::size_t nodes_at(const SynthConfig& cfg, std::size_t rank) {
  std::size_t n = 1;
  for (std::size_t r = 0; r <= rank; ++r) n *= cfg.branching[r];
  return n;
}

}  // namespace

std::size_t SynthConfig::species_count() const { return nodes_at(*this, kNumRanks - 1); }

void SynthConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::ConfigInvalid, why); };
  for (std::size_t r = 0; r < kNumRanks; ++r)
    if (branching[r] == 0) fail("branching factors must be positive");
  if (species_count() < 2) fail("branching product must give at least 2 species");
  if (d_latent < 2) fail("d_latent must be >= 2");
  if (d_in < d_latent) fail("d_in must be >= d_latent");
  if (samples_per_species == 0) fail("samples_per_species must be positive");
  if (!(longtail_alpha >= 0.0)) fail("longtail_alpha must be >= 0");
  if (!(noise_sigma > 0.0)) fail("noise_sigma must be > 0");
  if (!(rank_weight_decay > 0.0 && rank_weight_decay <= 1.0)) fail("rank_weight_decay must be in (0, 1]");
  if (attribute_rank.index >= kNumRanks) fail("attribute_rank out of range");
  std::set<std::string> names;
  for (const auto& axis : variant_axes) {
    if (axis.name.empty() || !names.insert(axis.name).second) fail("variant axis names must be unique and nonempty");
    if (axis.values[0].empty() || axis.values[1].empty() || axis.values[0] == axis.values[1])
      fail("variant axis '" + axis.name + "' needs two distinct value names");
    if (!(axis.offset_scale >= 0.0) || !std::isfinite(axis.offset_scale))
      fail("variant axis '" + axis.name + "' offset_scale must be finite and >= 0");
  }
  if (variant_axes.size() > 8) fail("at most 8 variant axes");
}

std::size_t Dataset::count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [&](const Sample& s) { return s.split == split; }));
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == split) out.push_back(i);
  return out;
}

Matrix Dataset::features(const std::vector<std::size_t>& idx) const {
  Matrix m(idx.size(), config.d_in);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& x = samples.at(idx[r]).x;
    std::copy(x.begin(), x.end(), m.row(r).begin());
  }
  return m;
}

Dataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t S = cfg.species_count();
  const std::size_t dl = cfg.d_latent;
  const double unit = 1.0 / std::sqrt(static_cast<double>(dl));

  Dataset ds;
  ds.config = cfg;

  // (1) one latent per tree node, rank by rank.
  std::array<std::vector<std::vector<double>>, kNumRanks> node_vecs;
  double weight = 1.0;
  for (std::size_t r = 0; r < kNumRanks; ++r) {
    const std::size_t n = nodes_at(cfg, r);
    node_vecs[r].reserve(n);
    for (std::size_t i = 0; i < n; ++i) node_vecs[r].push_back(gaussian_vector(rng, dl, weight * unit));
    weight *= cfg.rank_weight_decay;
  }

  ds.ground_truth.species_latents = Matrix(S, dl);
  ds.taxa.reserve(S);
  ds.attributes.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    std::vector<double> sum(dl, 0.0);
    std::vector<std::string> names;
    for (std::size_t r = 0; r < kNumRanks; ++r) {
      const std::size_t node = s / leaves_below(cfg, r);
      for (std::size_t k = 0; k < dl; ++k) sum[k] += node_vecs[r][node][k];
      names.push_back(std::string(kNodePrefix[r]) + std::to_string(node));
      if (r == cfg.attribute_rank.index) ds.attributes[s][kGroupAttribute] = (node % 2) == 1;
    }
    const auto p = normalized(sum);
    std::copy(p.begin(), p.end(), ds.ground_truth.species_latents.row(s).begin());
    ds.taxa.push_back(Taxon::from_ranks(names));
  }

  // (2) global variant offsets.
  for (const auto& axis : cfg.variant_axes) {
    Matrix off(2, dl);
    for (std::size_t v = 0; v < 2; ++v) {
      const auto dir = normalized(gaussian_vector(rng, dl, 1.0));
      for (std::size_t k = 0; k < dl; ++k) off(v, k) = axis.offset_scale * dir[k];
    }
    ds.ground_truth.variant_offsets.push_back(std::move(off));
  }

  // (4) fixed mixing and bias.
  ds.ground_truth.mixing = Matrix::gaussian(cfg.d_in, dl, rng, unit);
  ds.ground_truth.bias = gaussian_vector(rng, cfg.d_in, 0.1);

  // (6) long-tail sample counts.
  const std::size_t axes = cfg.variant_axes.size();
  const std::size_t combos = std::size_t{1} << axes;
  const std::size_t min_count = std::max<std::size_t>(2, 2 * combos);
  std::vector<double> w(S);
  for (std::size_t s = 0; s < S; ++s) w[s] = std::pow(static_cast<double>(s + 1), -cfg.longtail_alpha);
  const double normalizer = static_cast<double>(S) / ordered_sum(w);

  const double sigma = cfg.noise_sigma * unit;
  for (std::size_t s = 0; s < S; ++s) {
    const auto target = std::llround(static_cast<double>(cfg.samples_per_species) * w[s] * normalizer);
    const std::size_t n = std::max<std::size_t>(min_count, static_cast<std::size_t>(std::max<long long>(target, 0)));
    const std::size_t n_test = n / 4;
    const auto proto = ds.ground_truth.species_latents.row(s);
    for (std::size_t j = 0; j < n; ++j) {
      Sample smp;
      smp.species_id = s;
      smp.split = j >= n - n_test ? Split::Test : Split::Train;
      std::vector<double> latent(proto.begin(), proto.end());
      // Variant values cycle through every combination in generation order.
      for (std::size_t a = 0; a < axes; ++a) {
        const int v = static_cast<int>((j >> a) & 1U);
        smp.variants.push_back(v);
        const auto off = ds.ground_truth.variant_offsets[a].row(static_cast<std::size_t>(v));
        for (std::size_t k = 0; k < dl; ++k) latent[k] += off[k];
      }
      // (3) isotropic noise, then back to the unit sphere.
      for (std::size_t k = 0; k < dl; ++k) latent[k] += sigma * rng.gaussian();
      latent = normalized(latent);
      smp.x = ds.ground_truth.bias;
      for (std::size_t i = 0; i < cfg.d_in; ++i) {
        const auto arow = ds.ground_truth.mixing.row(i);
        double acc = 0.0;
        for (std::size_t k = 0; k < dl; ++k) acc += arow[k] * latent[k];
        smp.x[i] += acc;
      }
      ds.samples.push_back(std::move(smp));
    }
  }
  return ds;
}

Dataset subsample_scale(const Dataset& ds, std::size_t n_train, std::uint64_t seed) {
  const auto train = ds.indices(Split::Train);
  if (n_train > train.size()) {
    throw Error(ErrorCode::TooFewSamples, "requested " + std::to_string(n_train) + " train samples but only " +
                                              std::to_string(train.size()) + " exist");
  }
  const std::size_t axes = ds.config.variant_axes.size();

  // Floor: the earliest sample covering each still-missing (species, axis, value).
  std::vector<char> keep(ds.samples.size(), 0);
  std::set<std::tuple<std::size_t, std::size_t, int>> covered;
  std::set<std::size_t> species_seen;
  std::size_t floor_count = 0;
  for (std::size_t idx : train) {
    const auto& s = ds.samples[idx];
    bool needed = !species_seen.count(s.species_id);
    for (std::size_t a = 0; a < axes; ++a)
      if (!covered.count({s.species_id, a, s.variants[a]})) needed = true;
    if (!needed) continue;
    keep[idx] = 1;
    ++floor_count;
    species_seen.insert(s.species_id);
    for (std::size_t a = 0; a < axes; ++a) covered.insert({s.species_id, a, s.variants[a]});
  }
  if (floor_count > n_train) {
    throw Error(ErrorCode::TooFewSamples, "stratification floor of " + std::to_string(floor_count) +
                                              " exceeds n_train=" + std::to_string(n_train));
  }

  // Fill from one seeded permutation, so equal seeds give nested subsets.
  std::vector<std::size_t> pool;
  for (std::size_t idx : train)
    if (!keep[idx]) pool.push_back(idx);
  Rng rng(seed);
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.index(i)]);
  for (std::size_t i = 0; i < n_train - floor_count; ++i) keep[pool[i]] = 1;

  Dataset out;
  out.config = ds.config;
  out.taxa = ds.taxa;
  out.attributes = ds.attributes;
  out.ground_truth = ds.ground_truth;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (ds.samples[i].split == Split::Test || keep[i]) out.samples.push_back(ds.samples[i]);
  return out;
}

ReplayPool generate_replay_pool(const Dataset& ds, std::size_t caption_count, std::size_t pool_size,
                                double noise_sigma, std::uint64_t seed) {
  if (caption_count < 2) throw Error(ErrorCode::ConfigInvalid, "replay needs at least 2 captions");
  const std::size_t dl = ds.config.d_latent;
  const double unit = 1.0 / std::sqrt(static_cast<double>(dl));
  Rng rng(seed);
  std::vector<std::vector<double>> centroids;
  for (std::size_t c = 0; c < caption_count; ++c) centroids.push_back(normalized(gaussian_vector(rng, dl, 1.0)));

  ReplayPool pool;
  pool.caption_count = caption_count;
  pool.x = Matrix(pool_size, ds.config.d_in);
  pool.caption_ids.resize(pool_size);
  const auto& a = ds.ground_truth.mixing;
  for (std::size_t i = 0; i < pool_size; ++i) {
    const std::size_t c = i % caption_count;
    pool.caption_ids[i] = c;
    std::vector<double> latent = centroids[c];
    for (auto& v : latent) v += noise_sigma * unit * rng.gaussian();
    latent = normalized(latent);
    for (std::size_t r = 0; r < ds.config.d_in; ++r) pool.x(i, r) = ds.ground_truth.bias[r] + dot(a.row(r), latent);
  }
  return pool;
}

}  // namespace hclab
