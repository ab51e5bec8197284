#pragma once

// Deterministic numerical kernel: seeded RNG, a small row-major dense matrix,
// Householder QR, one-sided Jacobi SVD, Hungarian assignment and fixed-order
// summation. Everything here is a pure function of its inputs.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "hclab/error.hpp"

namespace hclab {

/// splitmix64 stream. Uniforms take the top 53 bits; every Gaussian consumes
/// exactly two uniforms (Box-Muller, cosine branch).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double gaussian();
  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

std::vector<std::uint64_t> rng_stream(std::uint64_t seed, std::size_t n);

/// Mixes a base seed with a stream tag so derived streams do not overlap.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix gaussian(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<double> col(std::size_t c) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Matrix transpose() const;
  double frobenius() const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
/// Returns a / ||a||; throws NormalizationUndefined for a zero or non-finite norm.
std::vector<double> normalized(std::span<const double> a);

/// Thin QR. Columns whose residual falls below the rank tolerance are skipped,
/// so `q` has `rank` orthonormal columns and `r` is a rank x n echelon matrix
/// with nonnegative pivots; q * r reproduces the input.
struct QrResult {
  Matrix q;
  Matrix r;
  std::size_t rank = 0;
  std::vector<std::size_t> pivot_cols;
};

QrResult householder_qr(const Matrix& a);

/// Thin SVD: a = u * diag(s) * vt with k = min(rows, cols).
struct SvdResult {
  Matrix u;
  std::vector<double> singular_values;
  Matrix vt;
  int sweeps = 0;
};

SvdResult jacobi_svd(const Matrix& a);

struct Assignment {
  std::vector<std::size_t> row_to_col;
  double cost = 0.0;
};

/// Minimum-cost perfect matching; among optimal matchings the lexicographically
/// smallest row->col permutation is returned.
Assignment hungarian_assign(const Matrix& cost);

/// Pairwise summation over a fixed split of the index range.
double ordered_sum(std::span<const double> values);

}  // namespace hclab
