#include <benchmark/benchmark.h>

#include <random>

#include "percdia/eda.hpp"
#include "percdia/model.hpp"
#include "percdia/perceiver.hpp"

namespace {

constexpr int64_t kDim = 128;

percdia::Tensor embeddings(int64_t frames) {
  std::mt19937_64 rng(7);
  return percdia::Tensor::randn({frames, kDim}, rng, 1.0);
}

void BM_PerceiverDecode(benchmark::State& state) {
  percdia::ModelConfig cfg;
  cfg.encoder.model_dim = kDim;
  percdia::ParamStore params = percdia::init_params(cfg);
  percdia::Tensor e = embeddings(state.range(0));
  for (auto _ : state) {
    percdia::AttractorSet set = percdia::decode(e, params, cfg.decoder, kDim);
    benchmark::DoNotOptimize(set.attractors.values().data());
  }
}

void BM_EdaDecode(benchmark::State& state) {
  percdia::EdaConfig cfg;
  cfg.existence_threshold = 0.0;
  percdia::ParamStore params = percdia::init_eda_params(cfg, kDim, 7);
  percdia::Tensor e = embeddings(state.range(0));
  for (auto _ : state) {
    percdia::AttractorSet set = percdia::eda_decode(e, params, cfg, 7);
    benchmark::DoNotOptimize(set.attractors.values().data());
  }
}

}  // namespace

BENCHMARK(BM_PerceiverDecode)->Arg(600)->Arg(6000)->Arg(36000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EdaDecode)->Arg(600)->Arg(6000)->Arg(36000)->Unit(benchmark::kMillisecond);
