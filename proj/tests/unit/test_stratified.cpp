#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "polieval/rng.hpp"
#include "polieval/stratified.hpp"
#include "polieval/synth.hpp"
#include "support/fixtures.hpp"

using namespace polieval;
using namespace polieval::testing;

TEST_CASE("unadjusted variant reproduces the raw age-sex effects exactly") {
  // With g == 0 the constant-per-cell construction makes every arm mean an
  // exact dyadic average, so the cell effect equals the table difference
  // bitwise.
  Dataset reference = age_sex_reference(/*adjusted_targets=*/false);
  StrataTable table = fit_strata(reference, CostSchedule::flat(0.0));
  for (const auto& row : age_sex_rows()) {
    const StrataCell& cell = table.cell(row.age, row.male);
    CHECK(cell.mean_treated_adj == row.treated_raw);
    CHECK(cell.mean_control == row.control);
    CHECK(cell.cate_adj == row.treated_raw - row.control);
    CHECK(cell.n_treated == 4);
    CHECK(cell.n_control == 4);
  }
  CHECK(table.cell(14, true).cate_adj == 0.74 - 0.60);
  CHECK(table.cell(14, true).cate_adj == doctest::Approx(0.14).epsilon(1e-12));
}

TEST_CASE("adjusted variant reproduces the cost-adjusted effects within 1e-12") {
  Dataset reference = age_sex_reference(/*adjusted_targets=*/true);
  StrataTable table = fit_strata(reference, cct_schedule());
  for (const auto& row : age_sex_rows()) {
    const StrataCell& cell = table.cell(row.age, row.male);
    CHECK(cell.mean_treated_adj == doctest::Approx(row.treated_adj).epsilon(1e-12));
    CHECK(cell.cate_adj ==
          doctest::Approx(row.treated_adj - row.control).epsilon(1e-12));
  }
  CHECK(table.cell(14, true).cate_adj == doctest::Approx(0.03).epsilon(1e-10));
  CHECK(table.cell(6, true).cate_adj == doctest::Approx(-0.07).epsilon(1e-10));
}

TEST_CASE("identical arms with zero cost give zero effects everywhere") {
  Dataset reference;
  reference.role = DatasetRole::reference;
  reference.contexts = {{"ref", false, {}, {0, 1}}};
  std::size_t id = 0;
  for (int age = 6; age <= 10; ++age) {
    for (int t = 0; t <= 1; ++t) {
      UnitRecord u;
      u.unit_id = "u" + std::to_string(++id);
      u.context_id = "ref";
      u.treatment = t;
      u.propensity = 0.5;
      u.outcome = 0.75;
      u.age = age;
      u.male = true;
      reference.units.push_back(u);
    }
  }
  StrataTable table = fit_strata(reference, CostSchedule::flat(0.0));
  for (const auto& [key, cell] : table.cells()) CHECK(cell.cate_adj == 0.0);
}

TEST_CASE("a cell missing one arm is an error naming the cell") {
  Dataset reference = age_sex_reference(false);
  UnitRecord extra = reference.units.front();
  extra.unit_id = "lonely";
  extra.age = 17;  // only a treated unit at age 17
  extra.treatment = 1;
  reference.units.push_back(extra);
  CHECK_THROWS_WITH_AS(fit_strata(reference, CostSchedule::flat(0.0)),
                       doctest::Contains("age=17"), ValidationError);
}

TEST_CASE("fit_strata requires reference data") {
  Dataset d = age_sex_reference(false);
  d.role = DatasetRole::target_ex_post;
  CHECK_THROWS_AS(fit_strata(d, CostSchedule::flat(0.0)), ValidationError);
}

TEST_CASE("prediction is a cell lookup with coverage errors") {
  Dataset reference = age_sex_reference(false);
  StrataTable table = fit_strata(reference, CostSchedule::flat(0.0));

  UnitRecord girl14;
  girl14.age = 14;
  girl14.male = false;
  CHECK(predict(table, girl14) == table.cell(14, false).cate_adj);

  UnitRecord copy = girl14;
  copy.unit_id = "another";
  CHECK(predict(table, copy) == predict(table, girl14));  // constant within cells

  UnitRecord out_of_range;
  out_of_range.age = 17;
  out_of_range.male = true;
  CHECK_THROWS_WITH_AS(predict(table, out_of_range), doctest::Contains("age=17"),
                       ValidationError);
}

TEST_CASE("strata rule treats exactly the cells with non-negative adjusted effects") {
  Dataset reference = age_sex_reference(true);
  StrataTable table = fit_strata(reference, cct_schedule());
  TreatmentRule rule = strata_rule(table);
  for (const auto& row : age_sex_rows()) {
    CovariateView w{row.age, row.male, {}, {}, nullptr};
    CHECK(rule(w) == (table.cell(row.age, row.male).cate_adj >= 0.0 ? 1 : 0));
  }
}

TEST_CASE("cell means recover a known law within three standard errors") {
  DgpSpec spec;
  spec.propensity = 0.5;
  spec.seed = 2027;
  // Four cells, 5000 expected units per cell.
  spec.n_reference = 20000;
  spec.cells.push_back({8, true, {}, 0.25, 0.90, 0.02, std::nullopt});
  spec.cells.push_back({8, false, {}, 0.25, 0.88, 0.01, std::nullopt});
  spec.cells.push_back({14, true, {}, 0.25, 0.60, 0.14, std::nullopt});
  spec.cells.push_back({14, false, {}, 0.25, 0.52, 0.13, std::nullopt});
  SynthData data = generate(spec);
  const CostSchedule sched = cct_schedule();
  StrataTable table = fit_strata(data.reference, sched);
  for (const auto& cell : spec.cells) {
    const StrataCell& fit = table.cell(cell.age, cell.male);
    const double truth = true_adjusted_cate(spec, cell, sched);
    // Bernoulli arm variances, scaled by the adjustment on the treated side.
    const double g = sched.share_at(cell.age);
    const double p1 = cell.baseline + cell.cate;
    const double var1 = (1.0 - g) * (1.0 - g) * p1 * (1.0 - p1);
    const double var0 = cell.baseline * (1.0 - cell.baseline);
    const double se = std::sqrt(var1 / static_cast<double>(fit.n_treated) +
                                var0 / static_cast<double>(fit.n_control));
    CHECK(std::abs(fit.cate_adj - truth) <= 3.0 * se);
  }
}

TEST_CASE("table csv round-trips") {
  Dataset reference = age_sex_reference(false);
  StrataTable table = fit_strata(reference, CostSchedule::flat(0.0));
  const std::string path =
      (std::filesystem::temp_directory_path() / "polieval_strata.csv").string();
  table.save_csv(path);
  StrataTable back = StrataTable::load_csv(path);
  REQUIRE(back.cells().size() == table.cells().size());
  for (const auto& [key, cell] : table.cells()) {
    const StrataCell& b = back.cell(key.first, key.second);
    CHECK(b.mean_treated_adj == cell.mean_treated_adj);
    CHECK(b.mean_control == cell.mean_control);
    CHECK(b.cate_adj == cell.cate_adj);
    CHECK(b.n_treated == cell.n_treated);
  }
}
