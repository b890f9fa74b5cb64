#include "uigan/cmtm.hpp"
#include "uigan/evalkit.hpp"
#include "uigan/trainer.hpp"

#include <benchmark/benchmark.h>

using namespace uigan;

namespace {

ModelConfig bench_config(int channels) {
  ModelConfig c;
  c.channels = channels;
  return c;
}

Dataset tiny_dataset(int n) {
  std::vector<ImagePair> pairs;
  for (int i = 0; i < n; ++i) pairs.push_back(make_pair(7, i));
  return Dataset::from_pairs(std::move(pairs));
}

}  // namespace

static void BM_GeneratorForward(benchmark::State& state) {
  auto gen = make_generator(bench_config(static_cast<int>(state.range(0))));
  torch::NoGradGuard no_grad;
  const auto lr = torch::rand({1, 3, kLowRes, kLowRes});
  for (auto _ : state) benchmark::DoNotOptimize(gen->forward(lr).final_image());
}
BENCHMARK(BM_GeneratorForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_Attention(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const int channels = 32;
  CrossModalAttention att(channels, ModelConfig{}.token_patch(side));
  torch::NoGradGuard no_grad;
  const auto f = torch::randn({1, channels, side, side});
  for (auto _ : state) benchmark::DoNotOptimize(att(f, f).priors);
}
BENCHMARK(BM_Attention)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_Ssim(benchmark::State& state) {
  const auto a = torch::rand({3, kHighRes, kHighRes}), b = torch::rand({3, kHighRes, kHighRes});
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  const int phase = static_cast<int>(state.range(0));
  TrainConfig config;
  config.model = bench_config(static_cast<int>(state.range(1)));
  config.batch_size = 4;
  Trainer trainer(config, tiny_dataset(8));
  TrainState ts(config);
  ts.phase = phase;
  ts.prepare(config);
  const auto batch = trainer.batch_indices(0);
  for (auto _ : state) {
    if (phase == 3) trainer.discriminator_step(ts, batch);
    benchmark::DoNotOptimize(trainer.generator_step(ts, batch).total);
  }
}
BENCHMARK(BM_TrainStep)->Args({1, 32})->Args({2, 32})->Args({3, 32})->Args({3, 64})->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
