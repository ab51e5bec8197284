#include "hclab/kernels.hpp"

#include <omp.h>

#include <atomic>
#include <cstdlib>
#include <string>

namespace hclab::kernels {

namespace {

std::atomic<int> g_threads{1};

void check_inner(std::size_t lhs, std::size_t rhs, const char* what) {
  if (lhs != rhs) throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": inner dimensions differ");
}

// Row kernels shared by both execution paths.

inline void affine_row(const Matrix& x, const Matrix& w, std::span<const double> b, Matrix& out, std::size_t i) {
  const auto xi = x.row(i);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto wr = w.row(r);
    double s = b.empty() ? 0.0 : b[r];
    for (std::size_t k = 0; k < xi.size(); ++k) s += wr[k] * xi[k];
    out(i, r) = s;
  }
}

inline void abt_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const auto ai = a.row(i);
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const auto bj = b.row(j);
    double s = 0.0;
    for (std::size_t k = 0; k < ai.size(); ++k) s += ai[k] * bj[k];
    out(i, j) = s;
  }
}

inline void atb_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t r) {
  auto orow = out.row(r);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double air = a(i, r);
    if (air == 0.0) continue;
    const auto bi = b.row(i);
    for (std::size_t c = 0; c < orow.size(); ++c) orow[c] += air * bi[c];
  }
}

inline void ab_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  auto orow = out.row(i);
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const double aik = a(i, k);
    const auto bk = b.row(k);
    for (std::size_t c = 0; c < orow.size(); ++c) orow[c] += aik * bk[c];
  }
}

template <class RowFn>
void run_rows(std::size_t n, int threads, RowFn&& fn) {
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static) num_threads(threads)
  for (long long i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
}

Matrix affine_impl(const Matrix& x, const Matrix& w, std::span<const double> b, int threads) {
  check_inner(x.cols(), w.cols(), "affine_rows");
  if (!b.empty() && b.size() != w.rows()) throw Error(ErrorCode::DimensionMismatch, "affine_rows: bias length");
  Matrix out(x.rows(), w.rows());
  run_rows(x.rows(), threads, [&](std::size_t i) { affine_row(x, w, b, out, i); });
  return out;
}

Matrix abt_impl(const Matrix& a, const Matrix& b, int threads) {
  check_inner(a.cols(), b.cols(), "matmul_abt");
  Matrix out(a.rows(), b.rows());
  run_rows(a.rows(), threads, [&](std::size_t i) { abt_row(a, b, out, i); });
  return out;
}

Matrix atb_impl(const Matrix& a, const Matrix& b, int threads) {
  check_inner(a.rows(), b.rows(), "matmul_atb");
  Matrix out(a.cols(), b.cols());
  run_rows(a.cols(), threads, [&](std::size_t r) { atb_row(a, b, out, r); });
  return out;
}

Matrix ab_impl(const Matrix& a, const Matrix& b, int threads) {
  check_inner(a.cols(), b.rows(), "matmul_ab");
  Matrix out(a.rows(), b.cols());
  run_rows(a.rows(), threads, [&](std::size_t i) { ab_row(a, b, out, i); });
  return out;
}

}  // namespace

void set_thread_count(int n) { g_threads.store(n > 0 ? n : 1); }
int thread_count() { return g_threads.load(); }

int threads_from_env() {
  const char* v = std::getenv("EC_THREADS");
  if (!v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 1) return 1;
  return static_cast<int>(std::min<long>(n, omp_get_num_procs() > 0 ? 4L * omp_get_num_procs() : n));
}

Matrix affine_rows(const Matrix& x, const Matrix& w, std::span<const double> b) {
  return affine_impl(x, w, b, thread_count());
}
Matrix matmul_abt(const Matrix& a, const Matrix& b) { return abt_impl(a, b, thread_count()); }
Matrix matmul_atb(const Matrix& a, const Matrix& b) { return atb_impl(a, b, thread_count()); }
Matrix matmul_ab(const Matrix& a, const Matrix& b) { return ab_impl(a, b, thread_count()); }

namespace serial {
Matrix affine_rows(const Matrix& x, const Matrix& w, std::span<const double> b) { return affine_impl(x, w, b, 1); }
Matrix matmul_abt(const Matrix& a, const Matrix& b) { return abt_impl(a, b, 1); }
Matrix matmul_atb(const Matrix& a, const Matrix& b) { return atb_impl(a, b, 1); }
Matrix matmul_ab(const Matrix& a, const Matrix& b) { return ab_impl(a, b, 1); }
}  // namespace serial

namespace parallel {
Matrix affine_rows(const Matrix& x, const Matrix& w, std::span<const double> b, int threads) {
  return affine_impl(x, w, b, threads);
}
Matrix matmul_abt(const Matrix& a, const Matrix& b, int threads) { return abt_impl(a, b, threads); }
Matrix matmul_atb(const Matrix& a, const Matrix& b, int threads) { return atb_impl(a, b, threads); }
Matrix matmul_ab(const Matrix& a, const Matrix& b, int threads) { return ab_impl(a, b, threads); }
}  // namespace parallel

}  // namespace hclab::kernels
