#pragma once

#include <string>
#include <vector>

#include "polieval/types.hpp"

namespace polieval::testing {

// Reference-experiment age-sex profile used as a fixture across suites:
// per (age 6..16, male) the raw arm means, and the adjusted treated means
// under the 0.09/0.12/0.15 transfer-share schedule.
struct AgeSexRow {
  int age;
  bool male;
  double treated_raw;    // unadjusted treated mean
  double control;        // control mean
  double treated_adj;    // treated mean after the (1 - g(age)) scaling
};

inline const std::vector<AgeSexRow>& age_sex_rows() {
  static const std::vector<AgeSexRow> rows = {
      {6, true, 0.93, 0.91, 0.84},  {7, true, 0.96, 0.96, 0.87},  {8, true, 0.97, 0.96, 0.85},
      {9, true, 0.98, 0.96, 0.86},  {10, true, 0.97, 0.96, 0.83}, {11, true, 0.96, 0.93, 0.82},
      {12, true, 0.91, 0.86, 0.77}, {13, true, 0.83, 0.76, 0.70}, {14, true, 0.74, 0.60, 0.63},
      {15, true, 0.53, 0.46, 0.45}, {16, true, 0.35, 0.32, 0.30}, {6, false, 0.90, 0.89, 0.82},
      {7, false, 0.95, 0.95, 0.87}, {8, false, 0.96, 0.96, 0.85}, {9, false, 0.97, 0.95, 0.85},
      {10, false, 0.97, 0.96, 0.82}, {11, false, 0.94, 0.92, 0.80}, {12, false, 0.88, 0.79, 0.75},
      {13, false, 0.74, 0.68, 0.63}, {14, false, 0.65, 0.52, 0.56}, {15, false, 0.41, 0.35, 0.35},
      {16, false, 0.33, 0.25, 0.28},
  };
  return rows;
}

/// Transfer-share schedule of the motivating program: 0.09 for ages 6-7,
/// 0.12 for 8-9, 0.15 from 10 up.
inline CostSchedule cct_schedule(double kappa = 1000.0) {
  return CostSchedule(kappa, {{6, 0.09}, {8, 0.12}, {10, 0.15}});
}

/// Reference dataset whose cell arm means exactly equal a supplied target:
/// `per_arm` identical units per (cell, arm). When `adjusted_targets` is
/// true, treated raw outcomes are chosen so the adjusted means reproduce
/// treated_adj under cct_schedule(); otherwise raw outcomes are used as-is.
inline Dataset age_sex_reference(bool adjusted_targets, std::size_t per_arm = 4) {
  Dataset data;
  data.role = DatasetRole::reference;
  data.contexts = {{"ref", false, {}, {0, 1}}};
  const CostSchedule sched = cct_schedule();
  std::size_t id = 0;
  for (const auto& row : age_sex_rows()) {
    const double y_treated =
        adjusted_targets ? row.treated_adj / (1.0 - sched.share_at(row.age)) : row.treated_raw;
    for (std::size_t r = 0; r < per_arm; ++r) {
      UnitRecord treated;
      treated.unit_id = "t" + std::to_string(++id);
      treated.context_id = "ref";
      treated.treatment = 1;
      treated.propensity = 0.5;
      treated.outcome = y_treated;
      treated.age = row.age;
      treated.male = row.male;
      data.units.push_back(treated);

      UnitRecord control = treated;
      control.unit_id = "c" + std::to_string(id) + "_" + std::to_string(r);
      control.treatment = 0;
      control.outcome = row.control;
      data.units.push_back(control);
    }
  }
  return data;
}

/// Minimal ex-post dataset wrapper for hand-built inference examples.
inline Dataset expost_dataset(std::vector<UnitRecord> units,
                              std::vector<std::string> covariate_names = {}) {
  Dataset data;
  data.role = DatasetRole::target_ex_post;
  data.contexts = {{"tgt", true, {}, {0, 1}}};
  data.covariate_names = std::move(covariate_names);
  std::size_t id = 0;
  for (auto& u : units) {
    u.unit_id = u.unit_id.empty() ? "u" + std::to_string(++id) : u.unit_id;
    u.context_id = "tgt";
    u.covariates.resize(data.covariate_names.size(), 0.0);
    u.missing.resize(data.covariate_names.size(), 0);
    data.units.push_back(std::move(u));
  }
  return data;
}

inline UnitRecord expost_unit(int treatment, double propensity, double outcome, int age,
                              bool male = true) {
  UnitRecord u;
  u.treatment = treatment;
  u.propensity = propensity;
  u.outcome = outcome;
  u.age = age;
  u.male = male;
  return u;
}

}  // namespace polieval::testing
