// Parallel kernels against their serial references.
#include <benchmark/benchmark.h>

#include "f2scil/kernels.hpp"
#include "f2scil/rng.hpp"

using namespace f2scil;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  return uniform_tensor({r, c}, rng, -1.0, 1.0);
}

template <void (*Gemm)(const Tensor&, const Tensor&, Tensor&, bool)>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  Tensor c({n, n});
  for (auto _ : state) {
    Gemm(a, b, c, false);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n * n));
}

template <void (*Moments)(const Tensor&, std::span<double>, std::span<double>)>
void BM_ColumnMoments(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_matrix(n, 64, 3);
  std::vector<double> mu(64), var(64);
  for (auto _ : state) {
    Moments(x, mu, var);
    benchmark::DoNotOptimize(mu.data());
  }
}

template <void (*Softmax)(const Tensor&, Tensor&)>
void BM_Softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_matrix(n, 64, 4);
  Tensor y({n, 64});
  for (auto _ : state) {
    Softmax(x, y);
    benchmark::DoNotOptimize(y.data().data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<kernels::gemm>)->Name("gemm/omp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Gemm<kernels::reference::gemm>)->Name("gemm/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Gemm<kernels::gemm_at_b>)->Name("gemm_at_b/omp")->Arg(128);
BENCHMARK(BM_Gemm<kernels::reference::gemm_at_b>)->Name("gemm_at_b/serial")->Arg(128);
BENCHMARK(BM_Gemm<kernels::gemm_a_bt>)->Name("gemm_a_bt/omp")->Arg(128);
BENCHMARK(BM_Gemm<kernels::reference::gemm_a_bt>)->Name("gemm_a_bt/serial")->Arg(128);
BENCHMARK(BM_ColumnMoments<kernels::column_moments>)->Name("column_moments/omp")->Arg(1024);
BENCHMARK(BM_ColumnMoments<kernels::reference::column_moments>)->Name("column_moments/serial")->Arg(1024);
BENCHMARK(BM_Softmax<kernels::softmax_rows>)->Name("softmax_rows/omp")->Arg(1024);
BENCHMARK(BM_Softmax<kernels::reference::softmax_rows>)->Name("softmax_rows/serial")->Arg(1024);

BENCHMARK_MAIN();
