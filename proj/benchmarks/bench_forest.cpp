#include <benchmark/benchmark.h>

#include <cmath>

#include "polieval/forest.hpp"
#include "polieval/rng.hpp"

using namespace polieval;

namespace {

struct Data {
  FeatureMatrix x;
  std::vector<double> y;
};

Data make_data(std::size_t n) {
  auto rng = make_rng(17);
  Data data;
  data.x.names = {"age", "male", "x1", "x2"};
  for (std::size_t i = 0; i < n; ++i) {
    const double age = 6.0 + std::floor(11.0 * uniform01(rng));
    const double male = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    data.x.push_row(std::vector<double>{age, male, uniform01(rng), uniform01(rng)});
    data.y.push_back((age >= 13.0 ? 0.7 : 0.2) + (uniform01(rng) < 0.5 ? 0.05 : -0.05));
  }
  return data;
}

}  // namespace

static void FitForest(benchmark::State& state) {
  Data data = make_data(static_cast<std::size_t>(state.range(0)));
  ForestConfig cfg;
  cfg.n_trees = 200;
  cfg.seed = 5;
  for (auto _ : state) {
    Forest forest = fit_forest(data.x, data.y, cfg);
    benchmark::DoNotOptimize(forest);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(FitForest)->RangeMultiplier(4)->Range(500, 8000)->Unit(benchmark::kMillisecond)
    ->Complexity();

static void PredictForest(benchmark::State& state) {
  Data data = make_data(4000);
  ForestConfig cfg;
  cfg.n_trees = static_cast<std::size_t>(state.range(0));
  cfg.seed = 5;
  Forest forest = fit_forest(data.x, data.y, cfg);
  std::vector<double> row = {12.0, 1.0, 0.4, 0.6};
  for (auto _ : state) {
    benchmark::DoNotOptimize(forest.predict(row));
  }
}
BENCHMARK(PredictForest)->Arg(200)->Arg(2000);

BENCHMARK_MAIN();
