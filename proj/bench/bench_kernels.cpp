// Serial reference vs OpenMP kernels on the shapes the training loops hit:
// (batch * nodes) rows against narrow hidden widths.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "relcp/kernels.hpp"

namespace {

using Kernel = void (*)(const float*, const float*, float*, std::size_t, std::size_t, std::size_t);

std::vector<float> random_buffer(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <Kernel K, bool Transposed>
void run(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = random_buffer(m * k, 1);
  const auto b = random_buffer(Transposed ? m * n : k * n, 2);
  std::vector<float> c(Transposed ? k * n : m * n);
  for (auto _ : state) {
    K(a.data(), b.data(), c.data(), m, k, n);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * m * k * n));
  state.counters["threads"] = relcp::kernels::max_threads();
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({1920, 32, 96});   // forecaster GRU gates, batch 32 x 60 nodes
  b->Args({3840, 16, 48});   // quantile network GRU gates, batch 64 x 60 nodes
  b->Args({3840, 24, 16});   // quantile network encoder
  b->Args({512, 512, 512});  // square reference
}

}  // namespace

BENCHMARK(run<relcp::kernels::serial::gemm_nn<float>, false>)->Name("gemm_nn/serial")->Apply(shapes);
BENCHMARK(run<relcp::kernels::parallel::gemm_nn<float>, false>)->Name("gemm_nn/parallel")->Apply(shapes);
BENCHMARK(run<relcp::kernels::serial::gemm_tn<float>, true>)->Name("gemm_tn/serial")->Apply(shapes);
BENCHMARK(run<relcp::kernels::parallel::gemm_tn<float>, true>)->Name("gemm_tn/parallel")->Apply(shapes);

BENCHMARK_MAIN();
