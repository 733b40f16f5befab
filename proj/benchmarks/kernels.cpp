#include <benchmark/benchmark.h>

#include <algorithm>

#include "zerodiff/classifier.hpp"
#include "zerodiff/diffusion.hpp"
#include "zerodiff/diffusion_loss.hpp"
#include "zerodiff/rng.hpp"
#include "zerodiff/synth.hpp"

using namespace zdiff;

namespace {

void BM_AffineForward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix x = gaussian_sample(rng, batch, 428, 0, 1);
  const Matrix w = gaussian_sample(rng, 428, 128, 0, 0.05);
  const Matrix b(1, 128, 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(affine_forward(x, w, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_AffineForward)->Arg(16)->Arg(64)->Arg(256);

void BM_AffineBackward(benchmark::State& state) {
  Rng rng(2);
  const Matrix x = gaussian_sample(rng, 64, 428, 0, 1);
  const Matrix w = gaussian_sample(rng, 428, 128, 0, 0.05);
  const Matrix up = gaussian_sample(rng, 64, 128, 0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(affine_backward(x, w, up));
}
BENCHMARK(BM_AffineBackward);

void BM_DiffusionLoss(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Matrix gen = gaussian_sample(rng, batch, 128, 0, 0.3);
  const Matrix real = gaussian_sample(rng, batch, 128, 0.1, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(diffusion_loss(gen, real, {}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_DiffusionLoss)->Arg(16)->Arg(64)->Arg(128);

void BM_DiffusionEpoch(benchmark::State& state) {
  Rng data_rng(4);
  const SynthBenchmark b = synth_benchmark({}, data_rng);
  FeatureTable seen;
  for (const auto& r : b.features)
    if (std::find(b.partition.seen.begin(), b.partition.seen.end(), r.class_label) != b.partition.seen.end())
      seen.push_back(r);
  DiffusionTrainConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) {
    Rng rng(5);
    benchmark::DoNotOptimize(train_diffusion(seen, b.classes, cfg, rng));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(seen.size()));
}
BENCHMARK(BM_DiffusionEpoch)->Unit(benchmark::kMillisecond);

void BM_Logits(benchmark::State& state) {
  const auto classes = static_cast<std::size_t>(state.range(0));
  Rng rng(6);
  const auto model = CompatibilityModel::initialized(CompatibilityVariant::nonlinear, 128, 300, 300, rng);
  const Matrix f = gaussian_sample(rng, 64, 128, 0, 0.3);
  const Matrix z = gaussian_sample(rng, classes, 300, 0, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(logits(model, f, z));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Logits)->Arg(10)->Arg(50);

}  // namespace

BENCHMARK_MAIN();
