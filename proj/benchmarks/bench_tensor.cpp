#include <benchmark/benchmark.h>

#include <random>

#include "percdia/tensor.hpp"

namespace {

void BM_Matmul(benchmark::State& state) {
  const int64_t n = state.range(0);
  std::mt19937_64 rng(1);
  percdia::Tensor a = percdia::Tensor::randn({n, n}, rng, 1.0);
  percdia::Tensor b = percdia::Tensor::randn({n, n}, rng, 1.0);
  for (auto _ : state) {
    percdia::Tensor c = percdia::matmul(a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}

}  // namespace

BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);
