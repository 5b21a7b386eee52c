// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "haven/srft.hpp"
#include "haven/tdpo.hpp"

namespace {

using namespace haven;

void BM_TdpoLossGradient(benchmark::State& state) {
  const FeatureMap fm;
  const auto pairs = make_synthetic_pairs(16, 32, fm.video_dim, 1);
  const auto pol = ToyPolicy::random(fm, 32, 0.1, 1);
  const auto ref = ToyPolicy::random(fm, 32, 0.1, 2);
  const TdpoConfig cfg;
  for (auto _ : state) {
    for (const auto& p : pairs) benchmark::DoNotOptimize(loss_gradient(p, pol, ref, cfg));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(pairs.size()));
}
BENCHMARK(BM_TdpoLossGradient);

void BM_TdpoTrainStep(benchmark::State& state) {
  const FeatureMap fm;
  const auto pairs = make_synthetic_pairs(50, 32, fm.video_dim, 7);
  const auto init = ToyPolicy::random(fm, 32, 0.01, 7);
  TdpoConfig cfg;
  cfg.steps = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train_tdpo(pairs, init, cfg));
}
BENCHMARK(BM_TdpoTrainStep);

void BM_SrftGradient(benchmark::State& state) {
  const FeatureMap fm;
  const auto batch = make_synthetic_reasoning_batch(static_cast<std::size_t>(state.range(0)), fm, 32, 3);
  const auto w = make_base_weights(fm, 32, 3);
  const auto adapter = LoraAdapter::init(fm.dim(), 32, 4, 1.0, 0.1, 3);
  for (auto _ : state) benchmark::DoNotOptimize(srft_gradient(batch, w, adapter, fm));
}
BENCHMARK(BM_SrftGradient)->Arg(10)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
