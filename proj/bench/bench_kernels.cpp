// Serial reference vs OpenMP kernels at training-sized shapes.
// Thread counts above the core count only measure overhead.

#include <benchmark/benchmark.h>

#include "hclab/kernels.hpp"

using namespace hclab;

namespace {

struct Shapes {
  Matrix x, w, g;
  std::vector<double> b;
  explicit Shapes(std::size_t n) {
    Rng rng(1);
    x = Matrix::gaussian(n, 96, rng);
    w = Matrix::gaussian(128, 96, rng);
    g = Matrix::gaussian(n, 128, rng);
    b.assign(128, 0.5);
  }
};

void BM_affine_serial(benchmark::State& s) {
  Shapes d(s.range(0));
  for (auto _ : s) benchmark::DoNotOptimize(kernels::serial::affine_rows(d.x, d.w, d.b));
}
void BM_affine_parallel(benchmark::State& s) {
  Shapes d(s.range(0));
  for (auto _ : s) benchmark::DoNotOptimize(kernels::parallel::affine_rows(d.x, d.w, d.b, s.range(1)));
}
void BM_logits_serial(benchmark::State& s) {
  Shapes d(s.range(0));
  for (auto _ : s) benchmark::DoNotOptimize(kernels::serial::matmul_abt(d.g, d.g));
}
void BM_logits_parallel(benchmark::State& s) {
  Shapes d(s.range(0));
  for (auto _ : s) benchmark::DoNotOptimize(kernels::parallel::matmul_abt(d.g, d.g, s.range(1)));
}
// Weight gradient: sums over the batch index.
void BM_wgrad_serial(benchmark::State& s) {
  Shapes d(s.range(0));
  for (auto _ : s) benchmark::DoNotOptimize(kernels::serial::matmul_atb(d.g, d.x));
}
void BM_wgrad_parallel(benchmark::State& s) {
  Shapes d(s.range(0));
  for (auto _ : s) benchmark::DoNotOptimize(kernels::parallel::matmul_atb(d.g, d.x, s.range(1)));
}

}  // namespace

BENCHMARK(BM_affine_serial)->Arg(64)->Arg(1024);
BENCHMARK(BM_affine_parallel)->ArgsProduct({{64, 1024}, {1, 2, 4}});
BENCHMARK(BM_logits_serial)->Arg(64)->Arg(1024);
BENCHMARK(BM_logits_parallel)->ArgsProduct({{64, 1024}, {1, 2, 4}});
BENCHMARK(BM_wgrad_serial)->Arg(64)->Arg(1024);
BENCHMARK(BM_wgrad_parallel)->ArgsProduct({{64, 1024}, {1, 2, 4}});

BENCHMARK_MAIN();
