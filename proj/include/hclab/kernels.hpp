#pragma once

// Dense data-parallel kernels used by the encoder, the loss and the probes.
//
// Every kernel has a serial reference and an OpenMP version. Both compute each
// output element with the same sequential inner loop, so results are
// bit-identical for any thread count; parallelism is only over independent
// output rows, never over a reduction index.

#include <span>

#include "hclab/numeric.hpp"

namespace hclab::kernels {

/// Worker threads used by the dispatching kernels (default 1).
void set_thread_count(int n);
int thread_count();
/// Reads EC_THREADS; falls back to 1 when unset or invalid.
int threads_from_env();

/// out(i, :) = w * x(i, :) + b
Matrix affine_rows(const Matrix& x, const Matrix& w, std::span<const double> b);
/// out = a * b^T
Matrix matmul_abt(const Matrix& a, const Matrix& b);
/// out = a^T * b, summed over rows of a and b in index order.
Matrix matmul_atb(const Matrix& a, const Matrix& b);
/// out = a * b
Matrix matmul_ab(const Matrix& a, const Matrix& b);

namespace serial {
Matrix affine_rows(const Matrix& x, const Matrix& w, std::span<const double> b);
Matrix matmul_abt(const Matrix& a, const Matrix& b);
Matrix matmul_atb(const Matrix& a, const Matrix& b);
Matrix matmul_ab(const Matrix& a, const Matrix& b);
}  // namespace serial

namespace parallel {
Matrix affine_rows(const Matrix& x, const Matrix& w, std::span<const double> b, int threads);
Matrix matmul_abt(const Matrix& a, const Matrix& b, int threads);
Matrix matmul_atb(const Matrix& a, const Matrix& b, int threads);
Matrix matmul_ab(const Matrix& a, const Matrix& b, int threads);
}  // namespace parallel

}  // namespace hclab::kernels
