// Parallel kernels against their serial references.

#include <memory>
#include <vector>

#include <benchmark/benchmark.h>

#include "eos/bifurcation.hpp"
#include "eos/dataset.hpp"
#include "eos/models.hpp"

namespace {

void BM_DiagramSerial(benchmark::State& state) {
  const auto loss = eos::ScalarLoss::mlsq(1.0, 2);
  const int count = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(eos::diagram_serial(loss, 0.2505, 0.30, count));
}

void BM_DiagramParallel(benchmark::State& state) {
  const auto loss = eos::ScalarLoss::mlsq(1.0, 2);
  const int count = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(eos::diagram(loss, 0.2505, 0.30, count));
}

eos::TinyMLP make_mlp(std::size_t samples) {
  auto data = std::make_shared<const eos::Dataset>(eos::make_two_gaussians(samples, 2, 2.0, 1));
  return eos::TinyMLP({2, 16, 16, 1}, eos::OutputLoss::kBCE, data, 1);
}

void BM_MlpGradientSerial(benchmark::State& state) {
  const auto model = make_mlp(static_cast<std::size_t>(state.range(0)));
  std::vector<double> grad(model.dim());
  for (auto _ : state) benchmark::DoNotOptimize(model.loss_and_gradient_serial(grad));
}

void BM_MlpGradientParallel(benchmark::State& state) {
  const auto model = make_mlp(static_cast<std::size_t>(state.range(0)));
  std::vector<double> grad(model.dim());
  for (auto _ : state) benchmark::DoNotOptimize(model.loss_and_gradient(grad));
}

}  // namespace

BENCHMARK(BM_DiagramSerial)->Arg(64)->Arg(512);
BENCHMARK(BM_DiagramParallel)->Arg(64)->Arg(512);
BENCHMARK(BM_MlpGradientSerial)->Arg(1000)->Arg(10000);
BENCHMARK(BM_MlpGradientParallel)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
