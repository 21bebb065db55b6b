#include <benchmark/benchmark.h>

#include <random>

#include "vslp/network.hpp"
#include "vslp/regularizer.hpp"
#include "vslp/solver.hpp"
#include "vslp/synth.hpp"
#include "vslp/training.hpp"

namespace {

using namespace vslp;

PixelField noise_field(std::size_t h, std::size_t w, std::size_t c,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PixelField f(h, w, c);
  for (double& v : f.data()) v = u(rng);
  return f;
}

void BM_Conv(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto ch = static_cast<std::size_t>(state.range(1));
  nn::Tensor w({k, k, ch, ch}, 0.01);
  const PixelField x = noise_field(64, 64, ch, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nn::conv2d(x, w, nullptr, 1, nn::Padding::kZero));
  }
}
BENCHMARK(BM_Conv)->Args({3, 8})->Args({3, 32})->Args({7, 12})->Args({7, 24});

RegularizerSpec spec_for(bool full_size) {
  RegularizerSpec spec;
  if (!full_size) {
    spec.widths = {8, 16, 32, 64};
    spec.kernel = 3;
  }
  return spec;
}

void BM_RegularizerForward(benchmark::State& state) {
  const Regularizer reg(spec_for(state.range(0) != 0));
  const auto params = reg.init_params(2);
  const PixelField x = noise_field(64, 64, reg.spec().input_channels(), 3);
  for (auto _ : state) benchmark::DoNotOptimize(reg.evaluate(params, x));
}
BENCHMARK(BM_RegularizerForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_UnrolledStep(benchmark::State& state) {
  const auto variant = static_cast<SolverVariant>(state.range(0));
  RegularizerSpec spec = spec_for(false);
  if (variant == SolverVariant::kGmm) spec.posterior = PosteriorKind::kGaussian;
  const Regularizer reg(spec);
  const auto params = reg.init_params(4);
  SynthConfig sc;
  const SynthItem s = generate_item(sc, 5);
  const auto stack = simulate_tta(s.mask, 2, build_patch_grid(64, 64, 16, 16, 8),
                                  24, 0.25, 6);
  const Stage2Item item = make_stage2_item(s.image, stack, 3, s.label);
  UnrollOptions opt;
  opt.variant = variant;
  opt.steps = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(unrolled_loss(reg, params, opt, item, true));
  }
}
BENCHMARK(BM_UnrolledStep)
    ->Arg(static_cast<int>(SolverVariant::kDiffusion))
    ->Arg(static_cast<int>(SolverVariant::kGmm))
    ->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
