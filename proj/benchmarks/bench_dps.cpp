#include <benchmark/benchmark.h>

#include "polieval/dps.hpp"
#include "polieval/rng.hpp"

using namespace polieval;

namespace {

StateGrid grid_of(int n_ages) {
  StateGrid g;
  g.min_age = 18 - n_ages;
  g.max_age = 17;
  g.terminal_age = 18;
  g.ed_max = 12;
  g.primary_grades = 6;
  g.sec = 12;
  g.behind_offset = 6;
  return g;
}

DpsParams params_k(std::size_t k) {
  DpsParams p = DpsParams::neutral(k);
  p.grant_util = 0.5;
  p.money_coef = 0.4;
  return p;
}

DpsCell cell_for(const StateGrid& grid) {
  DpsCell cell;
  cell.male = true;
  cell.father_ed = 1.0;
  cell.distance = 1.0;
  for (int a = grid.min_age; a <= grid.max_age; ++a) {
    cell.wage_by_age.push_back(1.0 + 0.2 * (a - grid.min_age));
  }
  return cell;
}

}  // namespace

static void SolveDp(benchmark::State& state) {
  const StateGrid grid = grid_of(static_cast<int>(state.range(0)));
  const DpsParams params = params_k(3);
  const DpsCell cell = cell_for(grid);
  const PassProbTable pass = PassProbTable::all_pass();
  const std::vector<double> grant(static_cast<std::size_t>(grid.n_ages()), 0.4);
  for (auto _ : state) {
    CellValues v = solve_dp(params, grid, pass, cell, grant);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(SolveDp)->Arg(6)->Arg(12);

static void LogLikelihood(benchmark::State& state) {
  const StateGrid grid = grid_of(6);
  const DpsParams params = params_k(2);
  const PassProbTable pass = PassProbTable::all_pass();
  const std::vector<double> no_grant = zero_grant(grid);
  auto rng = make_rng(3);
  std::vector<DpsObservation> obs;
  const DpsCell base = cell_for(grid);
  for (long long i = 0; i < state.range(0); ++i) {
    DpsObservation o;
    o.age = grid.min_age + static_cast<int>(uniform_below(rng, 6));
    o.ed = std::max(0, o.age - grid.behind_offset - static_cast<int>(uniform_below(rng, 2)));
    o.male = i % 2 == 0;
    o.father_ed = i % 3 == 0 ? 1.0 : 0.0;
    o.distance = base.distance;
    o.wage_by_age = base.wage_by_age;
    o.enrolled = uniform01(rng) < 0.7 ? 1 : 0;
    obs.push_back(std::move(o));
  }
  DpsPanel panel(obs, grid);
  for (auto _ : state) {
    benchmark::DoNotOptimize(log_likelihood(params, panel, pass, no_grant));
  }
}
BENCHMARK(LogLikelihood)->Arg(2000)->Arg(20000);

static void DpsCateBench(benchmark::State& state) {
  const StateGrid grid = grid_of(6);
  const DpsParams params = params_k(3);
  const DpsCell cell = cell_for(grid);
  const PassProbTable pass = PassProbTable::all_pass();
  const std::vector<double> grant(static_cast<std::size_t>(grid.n_ages()), 0.4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dps_cate(params, grid, pass, cell, 14, 7, grant));
  }
}
BENCHMARK(DpsCateBench);

BENCHMARK_MAIN();
