#pragma once

// Embedding-space instruments: species prototypes and their orthonormal span,
// the explained-variance ratio of intra-species variation inside that span,
// the Fisher discriminant ratio, the species-plane projection, and a Taylor
// verifier for the contrastive loss around a species prototype.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hclab/model.hpp"
#include "hclab/numeric.hpp"
#include "hclab/synth.hpp"

namespace hclab {

enum class PrototypeSource { Empirical, Textual };

struct PrototypeSet {
  PrototypeSource source = PrototypeSource::Empirical;
  Matrix mu;  // S x d, unit rows
  std::vector<std::size_t> species_ids;
};

/// Columns are per-species differences mean(value 0) - mean(value 1).
struct VariationMatrix {
  Matrix d;  // d_emb x n
  std::string axis;
  std::vector<std::size_t> species_ids;  // one per column
  std::vector<std::size_t> skipped_species;  // lacked one of the two values
  std::vector<std::size_t> zero_columns;  // column indices with zero norm
};

struct FdrResult {
  double numerator = 0.0;
  double denominator = 0.0;
  double ratio = 0.0;
};

struct TaylorAnalysis {
  std::vector<double> a;  // logits mu_s^T mu_k / tau
  double z_partition = 0.0;
  std::vector<double> w;
  std::vector<double> m;  // sum_k w_k mu_k
  double first_order = 0.0;  // (m - mu_s)^T delta / tau
  double quadratic = 0.0;  // delta^T H delta with the exact m m^T term
  double quadratic_approx = 0.0;  // same with m replaced by mu_s
  double exact_delta = 0.0;  // l(mu_s + delta) - l(mu_s)
  double remainder = 0.0;  // exact_delta - first_order - quadratic
};

/// Per-species mean of `embs` rows, renormalized. Species are listed in
/// ascending id order.
PrototypeSet empirical_prototypes(const Matrix& embs, const std::vector<std::size_t>& species_ids);
PrototypeSet textual_prototypes(const ModelState& m, const std::vector<std::size_t>& species_ids);

/// `variants[i]` is the value index (0/1) of row i on this axis, -1 if absent.
VariationMatrix variation_diffs(const Matrix& embs, const std::vector<std::size_t>& species_ids,
                                const std::vector<int>& variants, const std::string& axis);

/// Orthonormal basis (d x rank) of the prototype span.
Matrix prototype_basis(const PrototypeSet& protos);

double explained_variance_ratio(const PrototypeSet& protos, const VariationMatrix& d);

FdrResult fdr(const Matrix& group_a, const Matrix& group_b);

struct SpeciesPlane {
  std::vector<double> center;  // mean of the species means
  Matrix plane;  // 2 x d, orthonormal rows
  std::vector<double> normal;  // third axis, orthogonal to the plane
  Matrix coords;  // n x 3
  Matrix species_coords;  // S x 3, species means
  std::vector<std::size_t> species_ids;
  /// Per axis, per species with both values: projected (value1 - value0)
  /// mean difference, pointing from value 0 to value 1.
  struct Arrow {
    std::string axis;
    std::size_t species_id;
    std::array<double, 3> from;
    std::array<double, 3> to;
  };
  std::vector<Arrow> arrows;
};

struct AxisLabels {
  std::string name;
  std::vector<int> values;  // per row, -1 when absent
};

SpeciesPlane species_plane_projection(const Matrix& embs, const std::vector<std::size_t>& species_ids,
                                      const std::vector<AxisLabels>& axes = {});

/// Loss of z against species s with the prototype rows as softmax candidates.
double prototype_loss(const Matrix& protos, std::size_t s, std::span<const double> z, double tau);

TaylorAnalysis taylor_analysis(const PrototypeSet& protos, std::size_t s, std::span<const double> delta, double tau);

struct AxisGeometry {
  std::string axis;
  std::optional<double> rho_empirical;
  std::optional<double> rho_textual;
  std::size_t columns = 0;
  std::vector<std::size_t> zero_columns;
  std::vector<std::size_t> skipped_species;
  std::optional<FdrResult> fdr;
};

struct GeometryReport {
  PrototypeSet empirical;
  PrototypeSet textual;
  std::vector<AxisGeometry> axes;
  std::optional<FdrResult> attribute_fdr;
  SpeciesPlane plane;
  std::vector<std::size_t> sample_index;  // dataset index of each plane row
  std::vector<std::string> warnings;
};

/// Per-axis rho and FDR from embeddings of the given dataset rows.
std::vector<AxisGeometry> axis_geometry(const Dataset& ds, const std::vector<std::size_t>& rows, const Matrix& embs,
                                        const PrototypeSet* textual);

/// Full report on the test split of `ds`.
GeometryReport geometry_report(const ModelState& m, const Dataset& ds);

}  // namespace hclab
