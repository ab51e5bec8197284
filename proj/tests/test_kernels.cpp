#include "doctest.h"
#include "hclab/kernels.hpp"

using namespace hclab;

TEST_CASE("parallel kernels are bit-identical to the serial references") {
  Rng rng(17);
  const Matrix x = Matrix::gaussian(37, 23, rng);
  const Matrix w = Matrix::gaussian(19, 23, rng);
  const Matrix y = Matrix::gaussian(37, 19, rng);
  const Matrix sq = Matrix::gaussian(23, 29, rng);
  std::vector<double> b(19);
  for (auto& v : b) v = rng.gaussian();
  for (int t : {1, 2, 3, 8}) {
    CAPTURE(t);
    CHECK(kernels::parallel::affine_rows(x, w, b, t) == kernels::serial::affine_rows(x, w, b));
    CHECK(kernels::parallel::matmul_abt(x, w, t) == kernels::serial::matmul_abt(x, w));
    CHECK(kernels::parallel::matmul_atb(x, y, t) == kernels::serial::matmul_atb(x, y));
    CHECK(kernels::parallel::matmul_ab(x, sq, t) == kernels::serial::matmul_ab(x, sq));
  }
}

TEST_CASE("kernels agree with the plain matmul") {
  Rng rng(2);
  const Matrix a = Matrix::gaussian(5, 4, rng);
  const Matrix b = Matrix::gaussian(4, 3, rng);
  const Matrix ab = kernels::matmul_ab(a, b);
  const Matrix ref = matmul(a, b);
  for (std::size_t i = 0; i < ab.data().size(); ++i) CHECK(ab.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-14));
  CHECK_THROWS_AS(kernels::matmul_ab(a, a), Error);
}

TEST_CASE("thread count setting") {
  kernels::set_thread_count(3);
  CHECK(kernels::thread_count() == 3);
  kernels::set_thread_count(1);
  CHECK(kernels::thread_count() == 1);
}
