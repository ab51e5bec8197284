#include "hclab/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

namespace hclab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::NonSquare: return "NonSquare";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NormalizationUndefined: return "NormalizationUndefined";
    case ErrorCode::EmptyLabel: return "EmptyLabel";
    case ErrorCode::TooManyRanks: return "TooManyRanks";
    case ErrorCode::InvalidTaxon: return "InvalidTaxon";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::UnknownTaxonNode: return "UnknownTaxonNode";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptySpecies: return "EmptySpecies";
    case ErrorCode::NoQualifyingSpecies: return "NoQualifyingSpecies";
    case ErrorCode::ZeroVariation: return "ZeroVariation";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::DegenerateGroups: return "DegenerateGroups";
    case ErrorCode::TooFewSpecies: return "TooFewSpecies";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::MissingPrototype: return "MissingPrototype";
    case ErrorCode::InsufficientSupport: return "InsufficientSupport";
    case ErrorCode::SingleClassTrain: return "SingleClassTrain";
    case ErrorCode::KTooSmall: return "KTooSmall";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

// ---------------------------------------------------------------- Rng

std::uint64_t Rng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::gaussian() {
  const double u1 = uniform();
  const double u2 = uniform();
  // 1 - u1 lies in (0, 1], keeping the log finite.
  const double radius = std::sqrt(-2.0 * std::log(1.0 - u1));
  return radius * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::index(std::size_t n) {
  auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
  return std::min(i, n - 1);
}

std::vector<std::uint64_t> rng_stream(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<std::uint64_t> out(n);
  for (auto& v : out) v = rng.next_u64();
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  Rng rng(base ^ (tag * 0xD1B54A32D192ED03ULL));
  rng.next_u64();
  return rng.next_u64();
}

// ---------------------------------------------------------------- Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorCode::DimensionMismatch,
                "matrix data length " + std::to_string(data_.size()) + " != " +
                    std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorCode::DimensionMismatch, "ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::gaussian(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
  Matrix m(rows, cols);
  for (auto& v : m.data_) v = scale * rng.gaussian();
  return m;
}

std::vector<double> Matrix::col(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double Matrix::frobenius() const { return norm2(data_); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error(ErrorCode::DimensionMismatch, "matmul inner dimensions");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::DimensionMismatch, "matrix difference shapes");
  Matrix c = a;
  for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::vector<double> normalized(std::span<const double> a) {
  const double n = norm2(a);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::NormalizationUndefined, "cannot normalize a vector of norm " + std::to_string(n));
  }
  std::vector<double> out(a.begin(), a.end());
  for (auto& v : out) v /= n;
  return out;
}

// ---------------------------------------------------------------- QR

QrResult householder_qr(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (m == 0 || n == 0) throw Error(ErrorCode::EmptyMatrix, "householder_qr on empty matrix");
  if (m < n) throw Error(ErrorCode::DimensionMismatch, "householder_qr requires rows >= cols");

  double max_col = 0.0;
  for (std::size_t j = 0; j < n; ++j) max_col = std::max(max_col, norm2(a.col(j)));
  const double tol = 1e-10 * max_col;

  Matrix w = a;
  std::vector<std::vector<double>> reflectors;
  std::vector<std::size_t> pivots;
  std::size_t k = 0;
  for (std::size_t j = 0; j < n && k < m; ++j) {
    double sq = 0.0;
    for (std::size_t i = k; i < m; ++i) sq += w(i, j) * w(i, j);
    const double alpha_norm = std::sqrt(sq);
    if (!(alpha_norm > tol)) continue;

    // v = x + sign(x0) ||x|| e0, maps x onto -sign(x0) ||x|| e0.
    std::vector<double> v(m - k);
    for (std::size_t i = k; i < m; ++i) v[i - k] = w(i, j);
    const double sign = v[0] >= 0.0 ? 1.0 : -1.0;
    v[0] += sign * alpha_norm;
    const double vnorm = norm2(v);
    for (auto& x : v) x /= vnorm;

    for (std::size_t c = j; c < n; ++c) {
      double proj = 0.0;
      for (std::size_t i = k; i < m; ++i) proj += v[i - k] * w(i, c);
      for (std::size_t i = k; i < m; ++i) w(i, c) -= 2.0 * proj * v[i - k];
    }
    for (std::size_t i = k + 1; i < m; ++i) w(i, j) = 0.0;
    reflectors.push_back(std::move(v));
    pivots.push_back(j);
    ++k;
  }

  const std::size_t rank = k;
  QrResult out;
  out.rank = rank;
  out.pivot_cols = pivots;
  out.r = Matrix(rank, n);
  for (std::size_t i = 0; i < rank; ++i)
    for (std::size_t c = pivots[i]; c < n; ++c) out.r(i, c) = w(i, c);

  // Q = H_0 H_1 ... H_{rank-1} applied to the first `rank` columns of I.
  out.q = Matrix(m, rank);
  for (std::size_t i = 0; i < rank; ++i) out.q(i, i) = 1.0;
  for (std::size_t h = rank; h-- > 0;) {
    const auto& v = reflectors[h];
    for (std::size_t c = 0; c < rank; ++c) {
      double proj = 0.0;
      for (std::size_t i = h; i < m; ++i) proj += v[i - h] * out.q(i, c);
      for (std::size_t i = h; i < m; ++i) out.q(i, c) -= 2.0 * proj * v[i - h];
    }
  }

  for (std::size_t i = 0; i < rank; ++i) {
    if (out.r(i, pivots[i]) < 0.0) {
      for (std::size_t c = 0; c < n; ++c) out.r(i, c) = -out.r(i, c);
      for (std::size_t r = 0; r < m; ++r) out.q(r, i) = -out.q(r, i);
    }
  }
  return out;
}

// ---------------------------------------------------------------- SVD

namespace {

constexpr int kMaxSweeps = 60;

// Orthonormalizes `cols` in order; a column that collapses under projection is
// replaced by the first standard basis vector independent of the others.
void orthonormalize_columns(Matrix& u) {
  const std::size_t m = u.rows();
  const std::size_t k = u.cols();
  auto project_out = [&](std::vector<double>& v, std::size_t upto) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < upto; ++p) {
        double d = 0.0;
        for (std::size_t i = 0; i < m; ++i) d += u(i, p) * v[i];
        for (std::size_t i = 0; i < m; ++i) v[i] -= d * u(i, p);
      }
    }
  };
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> v = u.col(c);
    const double before = norm2(v);
    project_out(v, c);
    double after = norm2(v);
    if (!(before > 0.0) || after < 0.5 * before) {
      for (std::size_t e = 0; e < m; ++e) {
        std::fill(v.begin(), v.end(), 0.0);
        v[e] = 1.0;
        project_out(v, c);
        after = norm2(v);
        if (after > 0.5) break;
      }
    }
    for (std::size_t i = 0; i < m; ++i) u(i, c) = v[i] / after;
  }
}

SvdResult jacobi_svd_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Matrix u = a;
  Matrix v = Matrix::identity(n);
  const double fro = a.frobenius();
  const double fro2 = fro * fro;

  int sweeps = 0;
  double worst = 0.0;
  for (; sweeps < kMaxSweeps; ++sweeps) {
    bool rotated = false;
    worst = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += u(i, p) * u(i, p);
          beta += u(i, q) * u(i, q);
          gamma += u(i, p) * u(i, q);
        }
        worst = std::max(worst, std::abs(gamma));
        if (std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta) || std::abs(gamma) < 1e-300) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double up = u(i, p), uq = u(i, q);
          u(i, p) = c * up - s * uq;
          u(i, q) = s * up + c * uq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }
  if (sweeps == kMaxSweeps && worst > 1e-8 * fro2) {
    throw Error(ErrorCode::NoConvergence, "jacobi_svd: off-diagonal residual " + std::to_string(worst));
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = norm2(u.col(j));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdResult out;
  out.sweeps = sweeps;
  out.u = Matrix(m, n);
  out.vt = Matrix(n, n);
  out.singular_values.resize(n);
  const double smax = n ? sigma[order[0]] : 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.singular_values[k] = sigma[j];
    const bool reliable = sigma[j] > 1e-12 * smax && sigma[j] > 0.0;
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = reliable ? u(i, j) / sigma[j] : 0.0;
    for (std::size_t i = 0; i < n; ++i) out.vt(k, i) = v(i, j);
  }
  orthonormalize_columns(out.u);
  return out;
}

}  // namespace

SvdResult jacobi_svd(const Matrix& a) {
  if (a.empty()) throw Error(ErrorCode::EmptyMatrix, "jacobi_svd on empty matrix");
  if (!a.all_finite()) throw Error(ErrorCode::DimensionMismatch, "jacobi_svd requires finite entries");
  if (a.rows() >= a.cols()) return jacobi_svd_tall(a);
  SvdResult t = jacobi_svd_tall(a.transpose());
  SvdResult out;
  out.sweeps = t.sweeps;
  out.singular_values = std::move(t.singular_values);
  out.u = t.vt.transpose();
  out.vt = t.u.transpose();
  return out;
}

// ---------------------------------------------------------------- Hungarian

namespace {

// Potential-based O(n^3) solver over the sub-matrix rows x cols. Returns the
// optimal cost and fills `match` (row position -> column position).
double solve_assignment(const Matrix& cost, const std::vector<std::size_t>& rows,
                        const std::vector<std::size_t>& cols, std::vector<std::size_t>* match) {
  const std::size_t n = rows.size();
  if (n == 0) return 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(rows[i0 - 1], cols[j - 1]) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> m(n);
  for (std::size_t j = 1; j <= n; ++j) m[p[j] - 1] = j - 1;
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) terms[i] = cost(rows[i], cols[m[i]]);
  if (match) *match = std::move(m);
  return ordered_sum(terms);
}

}  // namespace

Assignment hungarian_assign(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw Error(ErrorCode::NonSquare, "hungarian_assign needs a square cost matrix");
  const std::size_t n = cost.rows();
  Assignment out;
  if (n == 0) return out;
  if (!cost.all_finite()) throw Error(ErrorCode::DimensionMismatch, "hungarian_assign needs finite costs");

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const double best = solve_assignment(cost, all, all, nullptr);
  double scale = 1.0;
  for (double c : cost.data()) scale += std::abs(c);
  const double tol = 1e-12 * scale;

  // Fix rows greedily to the smallest column that still admits an optimum.
  out.row_to_col.resize(n);
  std::vector<std::size_t> free_cols = all;
  double fixed = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<std::size_t> rest_rows(all.begin() + static_cast<std::ptrdiff_t>(r) + 1, all.end());
    bool placed = false;
    for (std::size_t idx = 0; idx < free_cols.size(); ++idx) {
      const std::size_t c = free_cols[idx];
      std::vector<std::size_t> rest_cols = free_cols;
      rest_cols.erase(rest_cols.begin() + static_cast<std::ptrdiff_t>(idx));
      const double total = fixed + cost(r, c) + solve_assignment(cost, rest_rows, rest_cols, nullptr);
      if (total <= best + tol) {
        out.row_to_col[r] = c;
        fixed += cost(r, c);
        free_cols = std::move(rest_cols);
        placed = true;
        break;
      }
    }
    if (!placed) {
      // Roundoff rejected every column; fall back to the solver's own matching.
      std::vector<std::size_t> remaining_rows{r};
      remaining_rows.insert(remaining_rows.end(), rest_rows.begin(), rest_rows.end());
      std::vector<std::size_t> m;
      solve_assignment(cost, remaining_rows, free_cols, &m);
      for (std::size_t i = 0; i < m.size(); ++i) out.row_to_col[r + i] = free_cols[m[i]];
      break;
    }
  }
  std::vector<double> terms(n);
  for (std::size_t r = 0; r < n; ++r) terms[r] = cost(r, out.row_to_col[r]);
  out.cost = ordered_sum(terms);
  return out;
}

// ---------------------------------------------------------------- sums

double ordered_sum(std::span<const double> values) {
  constexpr std::size_t kLeaf = 8;
  if (values.size() <= kLeaf) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return ordered_sum(values.first(half)) + ordered_sum(values.subspan(half));
}

}  // namespace hclab
