#include <benchmark/benchmark.h>

#include <vector>

#include "cdgmae/flops.hpp"
#include "cdgmae/labelprop.hpp"
#include "cdgmae/ops.hpp"
#include "cdgmae/patch_mask.hpp"
#include "cdgmae/trainer.hpp"

namespace cdgmae {
namespace {

Tensor uniform(const Shape& shape, Rng& rng) {
  std::vector<float> v(numel(shape));
  for (float& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return Tensor::from_data(shape, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = uniform({n, n}, rng), b = uniform({n, n}, rng);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_Encode(benchmark::State& state) {
  const ModelConfig cfg = ModelConfig::preset(state.range(0) == 0 ? "toy" : "vit-s16");
  const ModelParams params = init_params(cfg, 1);
  Rng rng(2);
  const std::size_t n = cfg.num_patches();
  const MaskPlan plan = sample_mask(n, 0.75, 3);
  const Tensor tokens = uniform({plan.visible.size(), cfg.patch_dim()}, rng);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(encode(params, tokens, plan.visible));
}
BENCHMARK(BM_Encode)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.model = ModelConfig::preset("toy");
  cfg.steps = 1;
  cfg.batch_size = static_cast<std::size_t>(state.range(0));
  std::vector<ViewBag> bags;
  for (std::size_t i = 0; i < cfg.batch_size; ++i)
    bags.push_back(gen_views(gen_scene(mix_seed(4, i), cfg.model.image_size).spec, 4, 0.5));
  ModelParams params = init_params(cfg.model, 5);
  OptimizerState opt = OptimizerState::for_params(params);
  Rng rng(6);
  std::vector<SampleInputs> batch;
  for (std::size_t i = 0; i < bags.size(); ++i) batch.push_back(make_sample(bags, i, cfg, rng));
  for (auto _ : state) benchmark::DoNotOptimize(train_step(params, opt, batch, 1e-4, cfg));
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_EstimateFlops(benchmark::State& state) {
  const ModelConfig cfg = ModelConfig::preset("vit-s16");
  for (auto _ : state) {
    for (const auto& [n, ra] : standard_flops_settings()) benchmark::DoNotOptimize(estimate_flops(cfg, n, ra, 0.9));
  }
}
BENCHMARK(BM_EstimateFlops);

void BM_PropagateFrame(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const std::size_t l = side * side, d = 64, c = 4;
  Rng rng(7);
  const Tensor labels = Tensor::zeros({l, c});
  std::vector<Tensor> frames;
  for (int i = 0; i < 8; ++i) frames.push_back(uniform({l, d}, rng));
  for (auto _ : state) {
    state.PauseTiming();
    PropagationContext ctx(side, side, PropagationConfig{});
    ctx.seed(frames[0], labels);
    state.ResumeTiming();
    for (std::size_t f = 1; f < frames.size(); ++f) benchmark::DoNotOptimize(propagate_frame(ctx, frames[f]));
  }
}
BENCHMARK(BM_PropagateFrame)->Arg(8)->Arg(14)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace cdgmae

BENCHMARK_MAIN();
