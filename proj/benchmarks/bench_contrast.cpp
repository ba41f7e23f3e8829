#include <benchmark/benchmark.h>

#include "polieval/contrast.hpp"
#include "polieval/mcs.hpp"
#include "polieval/synth.hpp"

using namespace polieval;

namespace {

SynthData make_data(std::size_t n) {
  DgpSpec spec = DgpSpec::cct_fixture();
  spec.n_reference = 0;
  spec.n_target_ex_ante = 0;
  spec.n_target_ex_post = n;
  return generate(spec);
}

const CostSchedule& schedule() {
  static const CostSchedule sched(1000.0, {{6, 0.09}, {8, 0.12}, {10, 0.15}});
  return sched;
}

}  // namespace

static void EstimateContrast(benchmark::State& state) {
  SynthData data = make_data(static_cast<std::size_t>(state.range(0)));
  DgpSpec spec = DgpSpec::cct_fixture();
  TreatmentRule oracle = oracle_rule(spec, schedule());
  TreatmentRule all = treat_all_rule();
  for (auto _ : state) {
    ContrastEstimate est = estimate_contrast(data.target_ex_post, oracle, all, schedule());
    benchmark::DoNotOptimize(est);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(EstimateContrast)->RangeMultiplier(10)->Range(1000, 100000)->Complexity();

static void PairwiseMatrix(benchmark::State& state) {
  SynthData data = make_data(static_cast<std::size_t>(state.range(0)));
  DgpSpec spec = DgpSpec::cct_fixture();
  std::vector<TreatmentRule> rules = {oracle_rule(spec, schedule()), treat_all_rule(),
                                      treat_none_rule()};
  for (auto _ : state) {
    auto matrix = pairwise_matrix(data.target_ex_post, rules, schedule());
    benchmark::DoNotOptimize(matrix);
  }
}
BENCHMARK(PairwiseMatrix)->Arg(10000);

static void ModelConfidenceSet(benchmark::State& state) {
  SynthData data = make_data(20000);
  DgpSpec spec = DgpSpec::cct_fixture();
  std::vector<TreatmentRule> rules = {oracle_rule(spec, schedule()), treat_all_rule(),
                                      treat_none_rule()};
  for (auto _ : state) {
    McsResult r = model_confidence_set(data.target_ex_post, rules, schedule(), 0.05,
                                       static_cast<std::size_t>(state.range(0)), 7);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(ModelConfidenceSet)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
