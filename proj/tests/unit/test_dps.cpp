#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "polieval/dps.hpp"
#include "polieval/rng.hpp"
#include "support/dps_sim.hpp"

using namespace polieval;
using namespace polieval::testing;

namespace {

StateGrid small_grid() {
  StateGrid g;
  g.min_age = 12;
  g.max_age = 17;
  g.terminal_age = 18;
  g.ed_max = 12;
  g.primary_grades = 6;
  g.sec = 12;
  g.behind_offset = 6;
  return g;
}

DpsCell simple_cell(bool male, const StateGrid& grid, double wage_base = 1.0,
                    double wage_slope = 0.2) {
  DpsCell cell;
  cell.male = male;
  cell.father_ed = male ? 1.0 : 0.0;
  cell.distance = 1.0;
  for (int a = grid.min_age; a <= grid.max_age; ++a) {
    cell.wage_by_age.push_back(wage_base + wage_slope * (a - grid.min_age));
  }
  return cell;
}

DpsParams example_params(std::size_t k_types = 2) {
  DpsParams p;
  p.grant_util = 0.6;
  p.money_coef = 0.5;
  p.pref_age_male = -0.05;
  p.pref_age_female = -0.08;
  p.pref_father_ed = 0.3;
  p.behind_penalties = {-0.2, -0.4, -0.7};
  p.primary_cost = -0.3;
  p.secondary_cost_male = -0.4;
  p.secondary_cost_female = -0.6;
  p.alpha1 = 2.0;
  p.alpha2 = 0.3;
  p.alpha3 = 0.8;
  if (k_types == 1) {
    p.type_means = {0.6};
  } else {
    for (std::size_t k = 0; k < k_types; ++k) {
      p.type_means.push_back(k == 0 ? 0.9 : -0.4);
    }
    p.type_logit.assign(k_types - 1, {0.3, -0.02, 0.05, 0.2, 0.4});
  }
  return p;
}

}  // namespace

TEST_CASE("emax closed form") {
  CHECK(emax(0.0, 0.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(emax(5.0, 0.0, 1.0) == doctest::Approx(5.006715348489118).epsilon(1e-12));

  // Monte Carlo oracle: E max(a + eps, b) over standard logistic draws.
  auto rng = make_rng(99);
  auto mc_emax = [&](double a, double b, std::size_t n) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = uniform01(rng);
      const double eps = std::log(u / (1.0 - u));
      total += std::max(a + eps, b);
    }
    return total / static_cast<double>(n);
  };
  CHECK(emax(5.0, 0.0, 1.0) == doctest::Approx(mc_emax(5.0, 0.0, 1000000)).epsilon(3e-3));
  CHECK(emax(0.0, 0.0, 1.0) == doctest::Approx(mc_emax(0.0, 0.0, 1000000)).epsilon(3e-3));

  SUBCASE("shift invariance and bounds") {
    auto prng = make_rng(5);
    for (int rep = 0; rep < 300; ++rep) {
      const double a = 20.0 * uniform01(prng) - 10.0;
      const double b = 20.0 * uniform01(prng) - 10.0;
      const double c = 10.0 * uniform01(prng) - 5.0;
      const double s = 0.25 + 2.0 * uniform01(prng);
      CHECK(emax(a + c, b + c, s) == doctest::Approx(emax(a, b, s) + c).epsilon(1e-10));
      CHECK(emax(a, b, 1.0) >= std::max(a, b));
      CHECK(emax(a, b, 1.0) <= std::max(a, b) + std::log(2.0) + 1e-15);
    }
  }

  SUBCASE("guards") {
    CHECK_THROWS_AS(emax(std::numeric_limits<double>::infinity(), 0.0, 1.0), NumericError);
    CHECK_THROWS_AS(emax(std::numeric_limits<double>::quiet_NaN(), 0.0, 1.0), NumericError);
    CHECK_THROWS_AS(emax(0.0, 0.0, 0.0), ValidationError);
  }
}

TEST_CASE("terminal value") {
  CHECK(terminal_value(5, 1.4, 0.0, 0.7, 12) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(terminal_value(5, 0.0, 0.5, 0.0, 12) == 0.0);
  CHECK(terminal_value(12, 2.0, 10.0, 0.5, 12) == doctest::Approx(2.5).epsilon(1e-6));
  CHECK(terminal_value(11, 2.0, 10.0, 0.5, 12) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("one decision age solves by hand") {
  StateGrid grid;
  grid.min_age = 17;
  grid.max_age = 17;
  grid.terminal_age = 18;
  grid.ed_max = 12;
  grid.primary_grades = 6;
  grid.sec = 12;
  grid.behind_offset = 6;
  DpsParams p = example_params(1);
  DpsCell cell = simple_cell(true, grid, 2.0, 0.0);
  PassProbTable pass;
  pass.set(17, 9, 0.8);  // grade 9 attempted at 17 passes 80% of the time
  std::vector<double> grant = {0.5};

  CellValues v = solve_dp(p, grid, pass, cell, grant);

  // State (17, ed = 8): attends secondary, behind by 3.
  {
    const double u_s = p.grant_util * 0.5 + p.type_means[0] + p.pref_age_male * 17.0 +
                       p.pref_father_ed * 1.0 + p.behind_penalties[2] + p.secondary_cost_male;
    const double t_pass = terminal_value(9, p.alpha1, p.alpha2, p.alpha3, grid.sec);
    const double t_fail = terminal_value(8, p.alpha1, p.alpha2, p.alpha3, grid.sec);
    const double expected_school = u_s + 0.95 * (0.8 * t_pass + 0.2 * t_fail);
    const double expected_work = p.money_coef * 2.0 + 0.95 * t_fail;
    CHECK(v.v_school(0, 0, 8) == doctest::Approx(expected_school).epsilon(1e-12));
    CHECK(v.v_work(0, 0, 8) == doctest::Approx(expected_work).epsilon(1e-12));
  }
  // State (17, ed = 12): already at the cap, cannot advance.
  {
    const double u_s = p.grant_util * 0.5 + p.type_means[0] + p.pref_age_male * 17.0 +
                       p.pref_father_ed * 1.0 + p.secondary_cost_male;
    const double t_stay = terminal_value(12, p.alpha1, p.alpha2, p.alpha3, grid.sec);
    CHECK(v.v_school(0, 0, 12) == doctest::Approx(u_s + 0.95 * t_stay).epsilon(1e-12));
  }
}

TEST_CASE("bellman recursion holds at every state") {
  StateGrid grid = small_grid();
  DpsParams p = example_params(2);
  DpsCell cell = simple_cell(false, grid);
  PassProbTable pass;
  for (int a = grid.min_age; a <= grid.max_age; ++a) {
    for (int ed = 1; ed <= grid.ed_max; ++ed) {
      pass.set(a, ed, 0.6 + 0.4 * ((a + ed) % 2));
    }
  }
  std::vector<double> grant(static_cast<std::size_t>(grid.n_ages()), 0.3);
  CellValues v = solve_dp(p, grid, pass, cell, grant);

  for (std::size_t k = 0; k < p.n_types(); ++k) {
    for (int a = grid.min_age; a <= grid.max_age; ++a) {
      const int ai = a - grid.min_age;
      for (int ed = 0; ed <= grid.ed_max; ++ed) {
        auto cont = [&](int ed_next) {
          if (a == grid.max_age) {
            return terminal_value(ed_next, p.alpha1, p.alpha2, p.alpha3, grid.sec);
          }
          return emax(v.v_school(k, ai + 1, ed_next), v.v_work(k, ai + 1, ed_next), p.scale);
        };
        const double p_adv = ed + 1 <= grid.ed_max ? pass.at(a, ed + 1) : 0.0;
        const double school = flow_school(p, grid, cell, grant[ai], a, ed, k) +
                              p.discount * (p_adv * cont(ed + 1 <= grid.ed_max ? ed + 1 : ed) +
                                            (1.0 - p_adv) * cont(ed));
        const double work = flow_work(p, cell, ai) + p.discount * cont(ed);
        CHECK(std::abs(school - v.v_school(k, ai, ed)) <= 1e-10);
        CHECK(std::abs(work - v.v_work(k, ai, ed)) <= 1e-10);
      }
    }
  }
}

TEST_CASE("zero pass probability freezes education") {
  StateGrid grid = small_grid();
  DpsParams p = example_params(1);
  DpsCell cell = simple_cell(true, grid);
  PassProbTable pass;
  for (int a = grid.min_age; a <= grid.max_age; ++a) {
    for (int ed = 0; ed <= grid.ed_max; ++ed) pass.set(a, ed, 0.0);
  }
  std::vector<double> grant(static_cast<std::size_t>(grid.n_ages()), 0.4);
  CellValues v = solve_dp(p, grid, pass, cell, grant);
  // With no grade progression both choices share the continuation state, so
  // the value gap is exactly the flow-utility gap.
  for (int a = grid.min_age; a <= grid.max_age; ++a) {
    const int ai = a - grid.min_age;
    for (int ed = 0; ed <= grid.ed_max; ++ed) {
      const double gap = v.v_school(0, ai, ed) - v.v_work(0, ai, ed);
      const double flow_gap =
          flow_school(p, grid, cell, grant[ai], a, ed, 0) - flow_work(p, cell, ai);
      CHECK(gap == doctest::Approx(flow_gap).epsilon(1e-10));
    }
  }
}

TEST_CASE("enrollment probability is the logistic value gap") {
  StateGrid grid = small_grid();
  DpsParams p = example_params(1);
  DpsCell cell = simple_cell(true, grid);
  CellValues v = solve_dp(p, grid, PassProbTable::all_pass(), cell, zero_grant(grid));
  for (int a = grid.min_age; a <= grid.max_age; ++a) {
    for (int ed = 0; ed <= std::min(grid.ed_max, a - grid.behind_offset); ++ed) {
      const double prob = enroll_prob(v, grid, 0, a, ed);
      CHECK(prob > 0.0);
      CHECK(prob < 1.0);
      const double gap = v.v_school(0, a - grid.min_age, ed) - v.v_work(0, a - grid.min_age, ed);
      CHECK(prob == doctest::Approx(1.0 / (1.0 + std::exp(-gap))).epsilon(1e-12));
    }
  }
  // Logistic arithmetic: a ln 9 gap is a 0.9 probability.
  CellValues tiny(1, 1, 1);
  tiny.v_school(0, 0, 0) = std::log(9.0);
  tiny.v_work(0, 0, 0) = 0.0;
  StateGrid one;
  one.min_age = one.max_age = 6;
  one.terminal_age = 7;
  one.ed_max = 0;
  CHECK(enroll_prob(tiny, one, 0, 6, 0) == doctest::Approx(0.9).epsilon(1e-12));
  tiny.v_school(0, 0, 0) = 0.0;
  CHECK(enroll_prob(tiny, one, 0, 6, 0) == 0.5);
}

TEST_CASE("type posterior is a softmax over K-1 rows plus a base category") {
  DpsParams p1 = example_params(1);
  CHECK(type_posterior(p1, 12, 3, true, 1.0) == std::vector<double>{1.0});

  DpsParams p3 = DpsParams::neutral(3);
  for (auto& row : p3.type_logit) row = {0.0, 0.0, 0.0, 0.0, 0.0};
  std::vector<double> uniform = type_posterior(p3, 14, 5, false, 0.0);
  REQUIRE(uniform.size() == 3);
  for (double w : uniform) CHECK(w == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  DpsParams p = example_params(3);
  p.type_logit[0] = {0.4, -0.01, 0.03, 0.2, 0.1};
  p.type_logit[1] = {-0.2, 0.02, -0.05, 0.0, 0.3};
  std::vector<double> probs = type_posterior(p, 15, 6, true, 1.0);
  double total = 0.0;
  for (double w : probs) {
    CHECK(w > 0.0);
    total += w;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  // Relabeling the two non-base types permutes their probabilities.
  DpsParams swapped = p;
  std::swap(swapped.type_logit[0], swapped.type_logit[1]);
  std::swap(swapped.type_means[0], swapped.type_means[1]);
  std::vector<double> probs2 = type_posterior(swapped, 15, 6, true, 1.0);
  CHECK(probs2[0] == doctest::Approx(probs[1]).epsilon(1e-12));
  CHECK(probs2[1] == doctest::Approx(probs[0]).epsilon(1e-12));
  CHECK(probs2[2] == doctest::Approx(probs[2]).epsilon(1e-12));
}

TEST_CASE("likelihood reductions") {
  StateGrid grid = small_grid();
  PassProbTable pass = PassProbTable::all_pass();

  SUBCASE("all-zero utilities put every state at probability one half") {
    DpsParams p;
    p.type_means = {0.0, 0.0};
    p.type_logit.assign(1, {0.0, 0.0, 0.0, 0.0, 0.0});
    p.alpha1 = p.alpha2 = p.alpha3 = 0.0;
    p.grant_util = p.money_coef = 0.0;
    DpsCell cell = simple_cell(true, grid, 0.0, 0.0);
    std::vector<DpsObservation> obs;
    auto rng = make_rng(3);
    for (int i = 0; i < 50; ++i) {
      DpsObservation o;
      o.age = grid.min_age + static_cast<int>(uniform_below(rng, 6));
      o.ed = 0;
      o.male = cell.male;
      o.father_ed = cell.father_ed;
      o.distance = cell.distance;
      o.wage_by_age = cell.wage_by_age;
      o.enrolled = i % 2;
      obs.push_back(o);
    }
    DpsPanel panel(obs, grid);
    const double ll = log_likelihood(p, panel, pass, zero_grant(grid));
    CHECK(ll == doctest::Approx(50.0 * std::log(0.5)).epsilon(1e-12));
  }

  SUBCASE("K = 1 reduces to the plain logit likelihood") {
    DpsParams p = example_params(1);
    DpsCell cell = simple_cell(false, grid);
    std::vector<DpsObservation> obs =
        simulate_dps(p, grid, pass, {cell}, zero_grant(grid), 200, 7);
    DpsPanel panel(obs, grid);
    const double ll = log_likelihood(p, panel, pass, zero_grant(grid));

    CellValues v = solve_dp(p, grid, pass, cell, zero_grant(grid));
    double direct = 0.0;
    for (const auto& o : obs) {
      const double prob = enroll_prob(v, grid, 0, o.age, o.ed);
      direct += std::log(o.enrolled ? prob : 1.0 - prob);
    }
    CHECK(ll == doctest::Approx(direct).epsilon(1e-10));
    CHECK(ll <= 0.0);
  }

  SUBCASE("numeric gradient is step-size consistent (Richardson check)") {
    DpsParams p = example_params(2);
    DpsCell cell_a = simple_cell(true, grid);
    DpsCell cell_b = simple_cell(false, grid);
    std::vector<DpsObservation> obs =
        simulate_dps(p, grid, pass, {cell_a, cell_b}, zero_grant(grid), 400, 13);
    DpsPanel panel(obs, grid);
    const Eigen::VectorXd x0 = pack_params(p);
    auto ll_at = [&](const Eigen::VectorXd& x) {
      return log_likelihood(unpack_params(x, p), panel, pass, zero_grant(grid));
    };
    for (Eigen::Index j = 0; j < x0.size(); ++j) {
      auto central = [&](double h) {
        Eigen::VectorXd up = x0, down = x0;
        up(j) += h;
        down(j) -= h;
        return (ll_at(up) - ll_at(down)) / (2.0 * h);
      };
      const double d1 = central(1e-4);
      const double d2 = central(5e-5);
      CHECK(std::abs(d1 - d2) <= 1e-4 * (1.0 + std::abs(d2)));
    }
  }
}

TEST_CASE("zero mixture probabilities are floored and flagged") {
  StateGrid grid = small_grid();
  DpsParams p = example_params(1);
  p.money_coef = 5.0;  // work value so large the choice probability underflows
  DpsCell cell = simple_cell(true, grid, 500.0, 0.0);
  DpsObservation o;
  o.age = 13;
  o.ed = 2;
  o.male = cell.male;
  o.father_ed = cell.father_ed;
  o.distance = cell.distance;
  o.wage_by_age = cell.wage_by_age;
  o.enrolled = 1;  // observed enrollment against a zero model probability
  DpsPanel panel({o}, grid);
  LikelihoodDiagnostics diag;
  const double ll = log_likelihood(p, panel, PassProbTable::all_pass(), zero_grant(grid), &diag);
  CHECK(std::isfinite(ll));
  CHECK(ll < -600.0);
  CHECK(diag.floored == 1);
}

TEST_CASE("grant weakly raises enrollment whenever grant utility is non-negative") {
  // Holds for program-shaped (constant or age-increasing) grant schedules;
  // schedules that fall with age can reverse the sign through the
  // continuation value, so the sweep draws non-decreasing profiles only.
  StateGrid grid = small_grid();
  auto rng = make_rng(2029);
  int states_checked = 0;
  for (int draw = 0; draw < 40; ++draw) {
    DpsParams p;
    p.grant_util = uniform01(rng);
    p.money_coef = 0.8 * uniform01(rng);
    p.pref_age_male = -0.15 + 0.25 * uniform01(rng);
    p.pref_age_female = -0.15 + 0.25 * uniform01(rng);
    p.pref_father_ed = 0.8 * uniform01(rng) - 0.2;
    p.behind_penalties = {-0.8 * uniform01(rng), -0.8 * uniform01(rng), -0.8 * uniform01(rng)};
    p.primary_cost = -0.8 * uniform01(rng);
    p.secondary_cost_male = -0.8 * uniform01(rng) + 0.2;
    p.secondary_cost_female = -0.8 * uniform01(rng) + 0.2;
    p.alpha1 = 2.0 * uniform01(rng);
    p.alpha2 = 0.5 * uniform01(rng);
    p.alpha3 = uniform01(rng);
    p.type_means = {0.5, -0.5};
    p.type_logit.assign(1, {uniform01(rng) - 0.5, 0.0, 0.0, 0.2, 0.1});

    PassProbTable pass;
    for (int a = grid.min_age; a <= grid.max_age; ++a) {
      for (int ed = 1; ed <= grid.ed_max; ++ed) pass.set(a, ed, 0.5 + 0.5 * uniform01(rng));
    }
    DpsCell cell = simple_cell(draw % 2 == 0, grid, 2.0 * uniform01(rng), 0.3 * uniform01(rng));
    std::vector<double> grant;
    const double g0 = uniform01(rng);
    const double slope = 0.2 * uniform01(rng);
    for (int a = grid.min_age; a <= grid.max_age; ++a) {
      grant.push_back(g0 * (1.0 + slope * (a - grid.min_age)));
    }

    CellValues with = solve_dp(p, grid, pass, cell, grant);
    CellValues without = solve_dp(p, grid, pass, cell, zero_grant(grid));
    for (std::size_t k = 0; k < p.n_types(); ++k) {
      for (int a = grid.min_age; a <= grid.max_age; ++a) {
        for (int ed = 0; ed <= grid.ed_max; ++ed) {
          if (!grid.on_grid(a, ed)) continue;
          CHECK(enroll_prob(with, grid, k, a, ed) >=
                enroll_prob(without, grid, k, a, ed) - 1e-12);
          ++states_checked;
        }
      }
    }
    const double cate = dps_cate(p, grid, pass, cell, 14, 4, grant);
    CHECK(cate >= -1e-12);
  }
  CHECK(states_checked >= 1000);
}

TEST_CASE("dps_cate reductions") {
  StateGrid grid = small_grid();
  DpsParams p = example_params(2);
  DpsCell cell = simple_cell(true, grid);
  PassProbTable pass = PassProbTable::all_pass();

  CHECK(dps_cate(p, grid, pass, cell, 13, 1, zero_grant(grid)) == 0.0);

  DpsParams no_grant_value = p;
  no_grant_value.grant_util = 0.0;
  std::vector<double> grant(static_cast<std::size_t>(grid.n_ages()), 0.7);
  CHECK(dps_cate(no_grant_value, grid, pass, cell, 13, 1, grant) == 0.0);

  CHECK(dps_cate(p, grid, pass, cell, 13, 1, grant) > 0.0);
}

TEST_CASE("panel construction validates states and deduplicates cells") {
  StateGrid grid = small_grid();
  DpsCell cell = simple_cell(true, grid);
  DpsObservation o;
  o.age = 13;
  o.ed = 2;
  o.male = cell.male;
  o.father_ed = cell.father_ed;
  o.distance = cell.distance;
  o.wage_by_age = cell.wage_by_age;
  o.enrolled = 1;

  DpsObservation clone = o;
  clone.enrolled = 0;
  DpsObservation other_cell = o;
  other_cell.distance = 9.0;
  DpsPanel panel({o, clone, other_cell, o}, grid);
  CHECK(panel.cells().size() == 2);
  CHECK(panel.n_units() == 4);
  std::size_t total = 0;
  for (const auto& g : panel.groups()) total += g.count;
  CHECK(total == 4);

  DpsObservation off_grid = o;
  off_grid.age = 20;
  CHECK_THROWS_AS(DpsPanel({off_grid}, grid), ValidationError);

  DpsObservation short_wages = o;
  short_wages.wage_by_age.pop_back();
  CHECK_THROWS_AS(DpsPanel({short_wages}, grid), ValidationError);
}

TEST_CASE("maximum likelihood never falls below the initial point") {
  StateGrid grid = small_grid();
  PassProbTable pass = PassProbTable::all_pass();
  DpsParams truth = example_params(1);
  DpsCell cell_a = simple_cell(true, grid);
  DpsCell cell_b = simple_cell(false, grid);
  std::vector<DpsObservation> obs =
      simulate_dps(truth, grid, pass, {cell_a, cell_b}, zero_grant(grid), 1500, 3);
  DpsPanel panel(obs, grid);

  DpsParams init = DpsParams::neutral(1);
  const double ll_init = log_likelihood(init, panel, pass, zero_grant(grid));

  FitOptions opts;
  opts.restarts = 2;
  opts.max_iter = 400;
  opts.polish_iter = 40;
  FitResult fit = fit_mle(panel, init, pass, zero_grant(grid), opts, 17);
  CHECK(fit.loglik >= ll_init);
  CHECK(fit.loglik ==
        doctest::Approx(log_likelihood(fit.params, panel, pass, zero_grant(grid)))
            .epsilon(1e-10));

  // More iterations never achieve less.
  FitOptions more = opts;
  more.max_iter = 800;
  FitResult fit2 = fit_mle(panel, init, pass, zero_grant(grid), more, 17);
  CHECK(fit2.loglik >= fit.loglik - 1e-9);

  // Restarting from the found optimum cannot ascend further by much.
  FitOptions none;
  none.restarts = 1;
  none.max_iter = 200;
  none.polish_iter = 0;
  FitResult at_opt = fit_mle(panel, fit.params, pass, zero_grant(grid), none, 5);
  CHECK(at_opt.loglik >= fit.loglik - 1e-9);
  CHECK(at_opt.loglik <= fit.loglik + 0.05);

  // Degenerate outcomes are rejected.
  for (auto& o : obs) o.enrolled = 1;
  DpsPanel all_ones(obs, grid);
  CHECK_THROWS_AS(fit_mle(all_ones, init, pass, zero_grant(grid), opts, 1), ValidationError);
}

TEST_CASE("small simulation recovery of choice probabilities (K = 1)") {
  StateGrid grid = small_grid();
  PassProbTable pass = PassProbTable::all_pass();
  DpsParams truth = example_params(1);
  DpsCell cell = simple_cell(true, grid);
  std::vector<DpsObservation> obs =
      simulate_dps(truth, grid, pass, {cell}, zero_grant(grid), 6000, 11);
  DpsPanel panel(obs, grid);

  FitOptions opts;
  opts.restarts = 3;
  opts.max_iter = 1500;
  opts.polish_iter = 150;
  FitResult fit = fit_mle(panel, DpsParams::neutral(1), pass, zero_grant(grid), opts, 23);

  CellValues v_true = solve_dp(truth, grid, pass, cell, zero_grant(grid));
  CellValues v_fit = solve_dp(fit.params, grid, pass, cell, zero_grant(grid));
  double worst = 0.0;
  for (const auto& g : panel.groups()) {
    const double p_true = enroll_prob(v_true, grid, 0, g.age, g.ed);
    const double p_fit = enroll_prob(v_fit, grid, 0, g.age, g.ed);
    worst = std::max(worst, std::abs(p_true - p_fit));
  }
  CHECK(worst <= 0.05);
}
