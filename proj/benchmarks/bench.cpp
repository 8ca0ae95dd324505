#include <benchmark/benchmark.h>

#include "lotlab/adam.hpp"
#include "lotlab/curvature.hpp"
#include "lotlab/metrics.hpp"
#include "lotlab/nn.hpp"

namespace {

using namespace lotlab;

struct Fixture {
  Activation act = Activation::relu();
  ParamSet params;
  Batch batch;
  Regularizer reg = Regularizer::l2(1e-3);

  Fixture(std::size_t width, std::size_t b) {
    Rng rng(1);
    params = init_params({784, {width}, 10}, act, rng);
    batch.inputs = Eigen::MatrixXd::NullaryExpr(
        static_cast<Eigen::Index>(b), 784, [&] { return rng.normal(); });
    for (std::size_t i = 0; i < b; ++i)
      batch.labels.push_back(static_cast<int>(rng.uniform_index(10)));
  }
};

void BM_LossGrad(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)), 256);
  for (auto _ : state) benchmark::DoNotOptimize(loss_grad(f.params, f.act, f.batch, f.reg));
}
BENCHMARK(BM_LossGrad)->Arg(64)->Arg(256);

void BM_Hvp(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)), 256);
  const ParamSet v = loss_grad(f.params, f.act, f.batch, f.reg).grads;
  for (auto _ : state) benchmark::DoNotOptimize(hvp(f.params, f.act, f.batch, f.reg, v));
}
BENCHMARK(BM_Hvp)->Arg(64)->Arg(256);

void BM_PerSampleVariance(benchmark::State& state) {
  Fixture f(64, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    GradVarianceAccumulator acc(loss_grad(f.params, f.act, f.batch, f.reg).grads);
    for_each_per_sample_grad(f.params, f.act, f.batch, f.reg,
                             [&](std::size_t, const ParamSet& g) { acc.add(g); });
    benchmark::DoNotOptimize(acc.variance());
  }
}
BENCHMARK(BM_PerSampleVariance)->Arg(32)->Arg(256);

void BM_AdamStep(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)), 8);
  const ParamSet g = loss_grad(f.params, f.act, f.batch, f.reg).grads;
  Adam adam(f.params, AdamConfig{}, 1e-3);
  for (auto _ : state) adam.step(f.params, g);
}
BENCHMARK(BM_AdamStep)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
