#include <benchmark/benchmark.h>

#include "smoothrl/certify/normal.hpp"
#include "smoothrl/nn/mlp.hpp"
#include "smoothrl/rng.hpp"
#include "smoothrl/smoothing/smoothing.hpp"

namespace {

using namespace smoothrl;

nn::Mlp q_network(Rng& rng) {
  return nn::Mlp::glorot({8, 64, 64, 4}, {nn::Activation::relu, nn::Activation::relu, nn::Activation::identity}, rng);
}

void BM_MlpForward(benchmark::State& state) {
  Rng rng(1);
  const auto net = q_network(rng);
  const Vector x(8, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_MlpForward);

void BM_EstimateSmoothedQ(benchmark::State& state) {
  Rng rng(2);
  const auto net = q_network(rng);
  Rng den_rng(3);
  const auto denoiser = nn::Mlp::glorot({8, 128, 8}, {nn::Activation::relu, nn::Activation::identity}, den_rng, true);
  const Vector x(8, 0.3);
  const smoothing::SmoothConfig cfg{0.1, static_cast<std::size_t>(state.range(0)), 0.05, 0.5};
  for (auto _ : state) benchmark::DoNotOptimize(smoothing::estimate_smoothed_q(net, &denoiser, x, cfg, rng));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EstimateSmoothedQ)->Arg(100)->Arg(10000);

void BM_PercentileSmooth(benchmark::State& state) {
  Rng rng(4);
  Vector samples(static_cast<std::size_t>(state.range(0)));
  for (double& s : samples) s = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(smoothing::percentile_smooth(samples, 0.5));
}
BENCHMARK(BM_PercentileSmooth)->Arg(100)->Arg(10000);

void BM_NormalInvCdf(benchmark::State& state) {
  double p = 0.001;
  for (auto _ : state) {
    benchmark::DoNotOptimize(certify::normal_inv_cdf(p));
    p = p < 0.998 ? p + 0.001 : 0.001;
  }
}
BENCHMARK(BM_NormalInvCdf);

}  // namespace

BENCHMARK_MAIN();
