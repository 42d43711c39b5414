// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>

#include "cdcl/kernels.hpp"
#include "cdcl/numerics.hpp"

namespace {

cdcl::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  cdcl::Matrix m(rows, cols);
  for (double& v : m.flat()) v = dist(rng);
  return m;
}

template <cdcl::Matrix (*Kernel)(const cdcl::Matrix&, const cdcl::Matrix&)>
void BM_MatmulNT(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const cdcl::Matrix a = random_matrix(n, 64, 1), b = random_matrix(n, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * 64));
}

template <cdcl::Matrix (*Kernel)(const cdcl::Matrix&, const cdcl::Matrix&)>
void BM_MatmulTN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const cdcl::Matrix a = random_matrix(n, 64, 1), b = random_matrix(n, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 64 * 64));
}

template <cdcl::kernels::Assignment (*Kernel)(const cdcl::Matrix&, const cdcl::Matrix&)>
void BM_AssignNearest(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const cdcl::Matrix points = cdcl::normalize_rows(random_matrix(n, 64, 3));
  const cdcl::Matrix centers = cdcl::normalize_rows(random_matrix(12, 64, 4));
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(points, centers));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

}  // namespace

BENCHMARK(BM_MatmulNT<cdcl::kernels::serial::matmul_nt>)->Name("matmul_nt/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(BM_MatmulNT<cdcl::kernels::parallel::matmul_nt>)->Name("matmul_nt/omp")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(BM_MatmulTN<cdcl::kernels::serial::matmul_tn>)->Name("matmul_tn/serial")->RangeMultiplier(4)->Range(256, 16384);
BENCHMARK(BM_MatmulTN<cdcl::kernels::parallel::matmul_tn>)->Name("matmul_tn/omp")->RangeMultiplier(4)->Range(256, 16384);
BENCHMARK(BM_AssignNearest<cdcl::kernels::serial::assign_nearest>)->Name("assign_nearest/serial")->RangeMultiplier(8)->Range(512, 32768);
BENCHMARK(BM_AssignNearest<cdcl::kernels::parallel::assign_nearest>)->Name("assign_nearest/omp")->RangeMultiplier(8)->Range(512, 32768);

BENCHMARK_MAIN();
