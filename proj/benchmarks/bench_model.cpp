#include <benchmark/benchmark.h>

#include "sdsa/model.hpp"

namespace {

using namespace sdsa;

nd::Mat random_inputs(std::size_t days, std::size_t dim, std::uint64_t seed) {
  nd::RngStream rng(seed);
  nd::Mat m(days, dim);
  for (double& v : m.span()) v = rng.normal(0.0, 1.0);
  return m;
}

void BM_Forward(benchmark::State& state) {
  const auto cfg = model::ModelConfig::for_level(model::AwarenessLevel::level1,
                                                 static_cast<std::size_t>(state.range(0)), 2, 32);
  const auto params = model::init_params(cfg, nd::RngStream(1));
  const auto x = random_inputs(365, cfg.input_dim, 2);
  model::ForwardCache cache;
  for (auto _ : state) {
    auto pred = model::forward(cfg, x, params, cache);
    benchmark::DoNotOptimize(pred.yield_hat);
  }
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const auto cfg = model::ModelConfig::for_level(model::AwarenessLevel::level1,
                                                 static_cast<std::size_t>(state.range(0)), 2, 32);
  const auto params = model::init_params(cfg, nd::RngStream(1));
  const auto x = random_inputs(365, cfg.input_dim, 2);
  model::ForwardCache cache;
  model::BackwardWorkspace ws;
  auto grads = model::ModelParams::zeros(cfg);
  auto up = model::PredictionGrad::zeros(365);
  for (auto& v : up.d_ra) v = 0.01;
  for (auto& v : up.d_rh) v = -0.01;
  up.d_yield = 0.5;
  for (auto _ : state) {
    model::forward(cfg, x, params, cache);
    model::backward(cache, params, up, grads, ws);
    benchmark::DoNotOptimize(grads.b_y[0]);
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
