#include "hclab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace hclab {

namespace {

std::vector<std::size_t> unique_sorted(const std::vector<std::size_t>& ids) {
  std::vector<std::size_t> out(ids);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> row_mean(const Matrix& embs, const std::vector<std::size_t>& rows) {
  std::vector<double> mean(embs.cols(), 0.0);
  for (std::size_t r : rows) {
    const auto row = embs.row(r);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += row[k];
  }
  for (auto& v : mean) v /= static_cast<double>(rows.size());
  return mean;
}

double squared_frobenius(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return s;
}

}  // namespace

PrototypeSet empirical_prototypes(const Matrix& embs, const std::vector<std::size_t>& species_ids) {
  if (embs.rows() == 0) throw Error(ErrorCode::EmptySpecies, "no embeddings to average");
  if (species_ids.size() != embs.rows()) throw Error(ErrorCode::DimensionMismatch, "one species id per embedding row");
  std::map<std::size_t, std::vector<std::size_t>> rows_of;
  for (std::size_t i = 0; i < species_ids.size(); ++i) rows_of[species_ids[i]].push_back(i);

  PrototypeSet out;
  out.source = PrototypeSource::Empirical;
  out.mu = Matrix(rows_of.size(), embs.cols());
  std::size_t r = 0;
  for (const auto& [sid, rows] : rows_of) {
    const auto mean = normalized(row_mean(embs, rows));
    std::copy(mean.begin(), mean.end(), out.mu.row(r++).begin());
    out.species_ids.push_back(sid);
  }
  return out;
}

PrototypeSet textual_prototypes(const ModelState& m, const std::vector<std::size_t>& species_ids) {
  std::vector<Taxon> taxa;
  const auto ids = unique_sorted(species_ids);
  for (std::size_t sid : ids) {
    if (sid >= m.taxa.size()) throw Error(ErrorCode::MissingPrototype, "species " + std::to_string(sid));
    taxa.push_back(m.taxa[sid]);
  }
  PrototypeSet out;
  out.source = PrototypeSource::Textual;
  out.mu = encode_labels(m, taxa).vectors;
  out.species_ids = ids;
  return out;
}

VariationMatrix variation_diffs(const Matrix& embs, const std::vector<std::size_t>& species_ids,
                                const std::vector<int>& variants, const std::string& axis) {
  if (species_ids.size() != embs.rows() || variants.size() != embs.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "variation_diffs: per-row labels must match embeddings");
  }
  std::map<std::size_t, std::array<std::vector<std::size_t>, 2>> groups;
  for (std::size_t i = 0; i < embs.rows(); ++i) {
    auto& g = groups[species_ids[i]];
    if (variants[i] == 0 || variants[i] == 1) g[static_cast<std::size_t>(variants[i])].push_back(i);
  }
  VariationMatrix out;
  out.axis = axis;
  std::vector<std::vector<double>> cols;
  for (const auto& [sid, g] : groups) {
    if (g[0].empty() || g[1].empty()) {
      out.skipped_species.push_back(sid);
      continue;
    }
    auto diff = row_mean(embs, g[0]);
    const auto m1 = row_mean(embs, g[1]);
    for (std::size_t k = 0; k < diff.size(); ++k) diff[k] -= m1[k];
    if (norm2(diff) <= 1e-15) out.zero_columns.push_back(cols.size());
    cols.push_back(std::move(diff));
    out.species_ids.push_back(sid);
  }
  if (cols.empty()) throw Error(ErrorCode::NoQualifyingSpecies, "no species has both values of axis '" + axis + "'");
  out.d = Matrix(embs.cols(), cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (std::size_t k = 0; k < embs.cols(); ++k) out.d(k, c) = cols[c][k];
  return out;
}

Matrix prototype_basis(const PrototypeSet& protos) {
  const Matrix span = protos.mu.transpose();  // d x S
  if (span.rows() >= span.cols()) return householder_qr(span).q;
  // More prototypes than dimensions: take the left singular vectors instead.
  const auto svd = jacobi_svd(span);
  const double smax = svd.singular_values.empty() ? 0.0 : svd.singular_values[0];
  std::size_t rank = 0;
  while (rank < svd.singular_values.size() && svd.singular_values[rank] > 1e-10 * smax) ++rank;
  Matrix u(span.rows(), rank);
  for (std::size_t i = 0; i < span.rows(); ++i)
    for (std::size_t c = 0; c < rank; ++c) u(i, c) = svd.u(i, c);
  return u;
}

double explained_variance_ratio(const PrototypeSet& protos, const VariationMatrix& d) {
  if (protos.mu.cols() != d.d.rows()) throw Error(ErrorCode::DimensionMismatch, "prototype and variation dimensions");
  const double total = squared_frobenius(d.d);
  if (!(total > 0.0)) throw Error(ErrorCode::ZeroVariation, "variation matrix for axis '" + d.axis + "' is zero");
  const Matrix u = prototype_basis(protos);
  const double inside = squared_frobenius(matmul(u.transpose(), d.d));
  return std::clamp(inside / total, 0.0, 1.0);
}

FdrResult fdr(const Matrix& group_a, const Matrix& group_b) {
  if (group_a.rows() == 0 || group_b.rows() == 0) throw Error(ErrorCode::EmptyGroup, "FDR needs two nonempty groups");
  if (group_a.cols() != group_b.cols()) throw Error(ErrorCode::DimensionMismatch, "FDR group dimensions differ");
  auto stats = [](const Matrix& g) {
    std::vector<std::size_t> all(g.rows());
    std::iota(all.begin(), all.end(), 0);
    auto mu = row_mean(g, all);
    std::vector<double> sq(g.rows());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < mu.size(); ++k) s += (g(i, k) - mu[k]) * (g(i, k) - mu[k]);
      sq[i] = s;
    }
    return std::pair{mu, ordered_sum(sq) / static_cast<double>(g.rows())};
  };
  const auto [mu_a, var_a] = stats(group_a);
  const auto [mu_b, var_b] = stats(group_b);
  FdrResult out;
  for (std::size_t k = 0; k < mu_a.size(); ++k) out.numerator += (mu_a[k] - mu_b[k]) * (mu_a[k] - mu_b[k]);
  out.denominator = var_a + var_b;
  if (out.denominator < 1e-15) {
    throw Error(ErrorCode::DegenerateGroups, "both groups have (near) zero spread");
  }
  out.ratio = out.numerator / out.denominator;
  return out;
}

SpeciesPlane species_plane_projection(const Matrix& embs, const std::vector<std::size_t>& species_ids,
                                      const std::vector<AxisLabels>& axes) {
  if (species_ids.size() != embs.rows()) throw Error(ErrorCode::DimensionMismatch, "one species id per row");
  std::map<std::size_t, std::vector<std::size_t>> rows_of;
  for (std::size_t i = 0; i < species_ids.size(); ++i) rows_of[species_ids[i]].push_back(i);
  if (rows_of.size() < 2) throw Error(ErrorCode::TooFewSpecies, "species plane needs at least 2 species");

  const std::size_t d = embs.cols();
  SpeciesPlane out;
  Matrix means(rows_of.size(), d);
  std::size_t r = 0;
  for (const auto& [sid, rows] : rows_of) {
    const auto m = row_mean(embs, rows);
    std::copy(m.begin(), m.end(), means.row(r++).begin());
    out.species_ids.push_back(sid);
  }
  out.center.assign(d, 0.0);
  for (std::size_t i = 0; i < means.rows(); ++i)
    for (std::size_t k = 0; k < d; ++k) out.center[k] += means(i, k);
  for (auto& v : out.center) v /= static_cast<double>(means.rows());
  Matrix centered = means;
  for (std::size_t i = 0; i < centered.rows(); ++i)
    for (std::size_t k = 0; k < d; ++k) centered(i, k) -= out.center[k];

  const auto svd = jacobi_svd(centered);
  out.plane = Matrix(2, d);
  for (std::size_t p = 0; p < 2 && p < svd.vt.rows(); ++p)
    for (std::size_t k = 0; k < d; ++k) out.plane(p, k) = svd.vt(p, k);
  if (svd.vt.rows() < 2) {
    // Only reachable for d == 1, which embeddings never have.
    throw Error(ErrorCode::DimensionMismatch, "species plane needs at least 2 dimensions");
  }

  auto in_plane = [&](std::span<const double> x, std::vector<double>& resid) {
    std::array<double, 2> p{};
    resid.assign(x.begin(), x.end());
    for (std::size_t k = 0; k < d; ++k) resid[k] -= out.center[k];
    for (std::size_t a = 0; a < 2; ++a) p[a] = dot(out.plane.row(a), resid);
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t k = 0; k < d; ++k) resid[k] -= p[a] * out.plane(a, k);
    return p;
  };

  // Third axis: leading principal direction of the residuals, via R^T R.
  Matrix gram(d, d);
  std::vector<double> resid;
  for (std::size_t i = 0; i < embs.rows(); ++i) {
    in_plane(embs.row(i), resid);
    for (std::size_t a = 0; a < d; ++a) {
      if (resid[a] == 0.0) continue;
      for (std::size_t b = 0; b < d; ++b) gram(a, b) += resid[a] * resid[b];
    }
  }
  out.normal.assign(d, 0.0);
  double gram_norm = gram.frobenius();
  if (gram_norm > 1e-24) {
    const auto gsvd = jacobi_svd(gram);
    for (std::size_t k = 0; k < d; ++k) out.normal[k] = gsvd.vt(0, k);
  } else {
    // Residuals vanish: any unit vector orthogonal to the plane will do.
    for (std::size_t e = 0; e < d; ++e) {
      std::vector<double> v(d, 0.0);
      v[e] = 1.0;
      for (std::size_t a = 0; a < 2; ++a) {
        const double p = dot(out.plane.row(a), v);
        for (std::size_t k = 0; k < d; ++k) v[k] -= p * out.plane(a, k);
      }
      if (norm2(v) > 0.5) {
        out.normal = normalized(v);
        break;
      }
    }
  }
  // Sign: largest-magnitude component positive.
  const auto big = std::max_element(out.normal.begin(), out.normal.end(),
                                    [](double x, double y) { return std::abs(x) < std::abs(y); });
  if (*big < 0.0)
    for (auto& v : out.normal) v = -v;

  auto project = [&](std::span<const double> x) {
    std::vector<double> res;
    const auto p = in_plane(x, res);
    return std::array<double, 3>{p[0], p[1], dot(out.normal, res)};
  };

  out.coords = Matrix(embs.rows(), 3);
  for (std::size_t i = 0; i < embs.rows(); ++i) {
    const auto c = project(embs.row(i));
    std::copy(c.begin(), c.end(), out.coords.row(i).begin());
  }
  out.species_coords = Matrix(means.rows(), 3);
  for (std::size_t i = 0; i < means.rows(); ++i) {
    const auto c = project(means.row(i));
    std::copy(c.begin(), c.end(), out.species_coords.row(i).begin());
  }

  for (const auto& axis : axes) {
    if (axis.values.size() != embs.rows()) throw Error(ErrorCode::DimensionMismatch, "axis labels per row");
    for (const auto& [sid, rows] : rows_of) {
      std::array<std::vector<std::size_t>, 2> g;
      for (std::size_t i : rows)
        if (axis.values[i] == 0 || axis.values[i] == 1) g[static_cast<std::size_t>(axis.values[i])].push_back(i);
      if (g[0].empty() || g[1].empty()) continue;
      out.arrows.push_back({axis.name, sid, project(row_mean(embs, g[0])), project(row_mean(embs, g[1]))});
    }
  }
  return out;
}

double prototype_loss(const Matrix& protos, std::size_t s, std::span<const double> z, double tau) {
  std::vector<double> logits(protos.rows());
  for (std::size_t k = 0; k < protos.rows(); ++k) logits[k] = dot(z, protos.row(k)) / tau;
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> ex(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) ex[k] = std::exp(logits[k] - mx);
  return -logits[s] + mx + std::log(ordered_sum(ex));
}

TaylorAnalysis taylor_analysis(const PrototypeSet& protos, std::size_t s, std::span<const double> delta, double tau) {
  const std::size_t S = protos.mu.rows();
  const std::size_t d = protos.mu.cols();
  if (s >= S) throw Error(ErrorCode::IndexOutOfRange, "species index " + std::to_string(s) + " of " + std::to_string(S));
  if (delta.size() != d) throw Error(ErrorCode::DimensionMismatch, "delta dimension");
  if (!(tau > 0.0)) throw Error(ErrorCode::ConfigInvalid, "tau must be > 0");

  const auto mu_s = protos.mu.row(s);
  TaylorAnalysis out;
  out.a.resize(S);
  for (std::size_t k = 0; k < S; ++k) out.a[k] = dot(mu_s, protos.mu.row(k)) / tau;
  const double amax = *std::max_element(out.a.begin(), out.a.end());
  std::vector<double> shifted(S), raw(S);
  for (std::size_t k = 0; k < S; ++k) {
    shifted[k] = std::exp(out.a[k] - amax);
    raw[k] = std::exp(out.a[k]);
  }
  out.z_partition = ordered_sum(raw);
  const double zs = ordered_sum(shifted);
  out.w.resize(S);
  for (std::size_t k = 0; k < S; ++k) out.w[k] = shifted[k] / zs;

  out.m.assign(d, 0.0);
  for (std::size_t k = 0; k < S; ++k)
    for (std::size_t j = 0; j < d; ++j) out.m[j] += out.w[k] * protos.mu(k, j);

  // b_k = delta^T mu_k / tau
  std::vector<double> b(S);
  for (std::size_t k = 0; k < S; ++k) b[k] = dot(delta, protos.mu.row(k)) / tau;
  const double mus_delta = dot(mu_s, delta) / tau;
  const double m_delta = dot(out.m, delta) / tau;

  out.first_order = m_delta - mus_delta;
  std::vector<double> wb2(S), wexp(S);
  for (std::size_t k = 0; k < S; ++k) {
    wb2[k] = out.w[k] * b[k] * b[k];
    wexp[k] = out.w[k] * std::expm1(b[k]);
  }
  const double second_moment = ordered_sum(wb2);
  out.quadratic = 0.5 * (second_moment - m_delta * m_delta);
  out.quadratic_approx = 0.5 * (second_moment - mus_delta * mus_delta);
  // l(mu_s + delta) - l(mu_s) = -mu_s^T delta / tau + log sum_k w_k exp(b_k)
  out.exact_delta = -mus_delta + std::log1p(ordered_sum(wexp));
  out.remainder = out.exact_delta - out.first_order - out.quadratic;
  return out;
}

std::vector<AxisGeometry> axis_geometry(const Dataset& ds, const std::vector<std::size_t>& rows, const Matrix& embs,
                                        const PrototypeSet* textual) {
  std::vector<std::size_t> sids(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) sids[i] = ds.samples[rows[i]].species_id;
  const auto empirical = empirical_prototypes(embs, sids);

  std::vector<AxisGeometry> out;
  for (std::size_t a = 0; a < ds.config.variant_axes.size(); ++a) {
    AxisGeometry ag;
    ag.axis = ds.config.variant_axes[a].name;
    std::vector<int> values(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) values[i] = ds.samples[rows[i]].variants[a];
    try {
      const auto vm = variation_diffs(embs, sids, values, ag.axis);
      ag.columns = vm.d.cols();
      ag.zero_columns = vm.zero_columns;
      ag.skipped_species = vm.skipped_species;
      ag.rho_empirical = explained_variance_ratio(empirical, vm);
      if (textual) ag.rho_textual = explained_variance_ratio(*textual, vm);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoQualifyingSpecies && e.code() != ErrorCode::ZeroVariation) throw;
    }
    std::vector<std::size_t> g0, g1;
    for (std::size_t i = 0; i < rows.size(); ++i) (values[i] == 0 ? g0 : g1).push_back(i);
    if (!g0.empty() && !g1.empty()) {
      Matrix a0(g0.size(), embs.cols()), a1(g1.size(), embs.cols());
      for (std::size_t i = 0; i < g0.size(); ++i) std::copy(embs.row(g0[i]).begin(), embs.row(g0[i]).end(), a0.row(i).begin());
      for (std::size_t i = 0; i < g1.size(); ++i) std::copy(embs.row(g1[i]).begin(), embs.row(g1[i]).end(), a1.row(i).begin());
      try {
        ag.fdr = fdr(a0, a1);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateGroups) throw;
      }
    }
    out.push_back(std::move(ag));
  }
  return out;
}

GeometryReport geometry_report(const ModelState& m, const Dataset& ds) {
  GeometryReport rep;
  rep.sample_index = ds.indices(Split::Test);
  if (rep.sample_index.empty()) throw Error(ErrorCode::TooFewSamples, "geometry report needs a test split");
  const Matrix embs = encode_images(m, ds.features(rep.sample_index)).vectors;
  std::vector<std::size_t> sids(rep.sample_index.size());
  for (std::size_t i = 0; i < sids.size(); ++i) sids[i] = ds.samples[rep.sample_index[i]].species_id;

  rep.empirical = empirical_prototypes(embs, sids);
  rep.textual = textual_prototypes(m, rep.empirical.species_ids);
  rep.axes = axis_geometry(ds, rep.sample_index, embs, &rep.textual);
  for (const auto& ag : rep.axes) {
    if (!ag.zero_columns.empty())
      rep.warnings.push_back("axis '" + ag.axis + "': " + std::to_string(ag.zero_columns.size()) +
                             " zero variation columns excluded");
    if (!ag.skipped_species.empty())
      rep.warnings.push_back("axis '" + ag.axis + "': " + std::to_string(ag.skipped_species.size()) +
                             " species lack one variant value");
  }

  // Species-level separation of the hierarchy-correlated attribute.
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < rep.empirical.species_ids.size(); ++i) {
    const auto& attrs = ds.attributes.at(rep.empirical.species_ids[i]);
    const auto it = attrs.find(kGroupAttribute);
    if (it == attrs.end()) continue;
    (it->second ? pos : neg).push_back(i);
  }
  if (!pos.empty() && !neg.empty()) {
    Matrix a(pos.size(), embs.cols()), b(neg.size(), embs.cols());
    for (std::size_t i = 0; i < pos.size(); ++i)
      std::copy(rep.empirical.mu.row(pos[i]).begin(), rep.empirical.mu.row(pos[i]).end(), a.row(i).begin());
    for (std::size_t i = 0; i < neg.size(); ++i)
      std::copy(rep.empirical.mu.row(neg[i]).begin(), rep.empirical.mu.row(neg[i]).end(), b.row(i).begin());
    try {
      rep.attribute_fdr = fdr(a, b);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateGroups) throw;
    }
  }

  std::vector<AxisLabels> axes;
  for (std::size_t a = 0; a < ds.config.variant_axes.size(); ++a) {
    AxisLabels al{ds.config.variant_axes[a].name, {}};
    for (std::size_t idx : rep.sample_index) al.values.push_back(ds.samples[idx].variants[a]);
    axes.push_back(std::move(al));
  }
  rep.plane = species_plane_projection(embs, sids, axes);
  return rep;
}

}  // namespace hclab
