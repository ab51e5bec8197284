#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "hclab/numeric.hpp"

using namespace hclab;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("rng streams are reproducible and uniforms stay in [0,1)") {
  CHECK(rng_stream(42, 16) == rng_stream(42, 16));
  CHECK(rng_stream(42, 16) != rng_stream(43, 16));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  Rng r(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
  }
  Rng g(5);
  double s = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = g.gaussian();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.03);
  CHECK(std::abs(s2 / n - 1.0) < 0.05);
}

TEST_CASE("qr of the 2x1 hand instance") {
  const auto qr = householder_qr(Matrix{{3.0}, {4.0}});
  REQUIRE(qr.rank == 1);
  CHECK(std::abs(std::abs(qr.q(0, 0)) - 0.6) < 1e-15);
  CHECK(std::abs(std::abs(qr.q(1, 0)) - 0.8) < 1e-15);
  CHECK(std::abs(qr.r(0, 0) - 5.0) < 1e-14);
}

TEST_CASE("qr reconstructs and skips dependent columns") {
  Rng rng(11);
  Matrix a = Matrix::gaussian(6, 4, rng);
  for (std::size_t i = 0; i < 6; ++i) a(i, 2) = 2.0 * a(i, 0) - a(i, 1);
  const auto qr = householder_qr(a);
  CHECK(qr.rank == 3);
  CHECK(max_abs_diff(matmul(qr.q, qr.r), a) < 1e-12);
  CHECK(max_abs_diff(matmul(qr.q.transpose(), qr.q), Matrix::identity(3)) < 1e-12);
}

TEST_CASE("svd of the 2x2 hand instance") {
  const auto svd = jacobi_svd(Matrix{{0.0, 2.0}, {1.0, 0.0}});
  REQUIRE(svd.singular_values.size() == 2);
  CHECK(std::abs(svd.singular_values[0] - 2.0) < 1e-14);
  CHECK(std::abs(svd.singular_values[1] - 1.0) < 1e-14);
}

TEST_CASE("svd reconstructs random matrices") {
  Rng rng(3);
  for (auto [r, c] : {std::pair{5, 3}, std::pair{3, 5}, std::pair{4, 4}}) {
    const Matrix a = Matrix::gaussian(r, c, rng);
    const auto svd = jacobi_svd(a);
    Matrix us = svd.u;
    for (std::size_t i = 0; i < us.rows(); ++i)
      for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= svd.singular_values[j];
    CHECK(max_abs_diff(matmul(us, svd.vt), a) < 1e-12);
    CHECK(std::is_sorted(svd.singular_values.rbegin(), svd.singular_values.rend()));
  }
}

TEST_CASE("hungarian matches exhaustive search") {
  Rng rng(21);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 1 + rng.index(6);
    Matrix c(n, n);
    for (auto& v : c.data()) v = static_cast<double>(rng.index(5));
    std::vector<std::size_t> p(n), best;
    std::iota(p.begin(), p.end(), 0);
    double best_cost = 1e300;
    do {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += c(i, p[i]);
      if (s < best_cost) {  // strict: permutations come in lexicographic order
        best_cost = s;
        best = p;
      }
    } while (std::next_permutation(p.begin(), p.end()));
    const auto a = hungarian_assign(c);
    CHECK(a.cost == best_cost);
    CHECK(a.row_to_col == best);
  }
}

TEST_CASE("ordered_sum is exact on integers and errors are typed") {
  std::vector<double> v(1001);
  std::iota(v.begin(), v.end(), 0.0);
  CHECK(ordered_sum(v) == 500500.0);
  CHECK_THROWS_AS(normalized(std::vector<double>{0.0, 0.0}), Error);
  try {
    normalized(std::vector<double>{0.0});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NormalizationUndefined);
  }
}
