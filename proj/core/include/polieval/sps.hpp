#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "polieval/contrast.hpp"
#include "polieval/lasso.hpp"
#include "polieval/types.hpp"

namespace polieval {

/// One person in the earnings roster. Earnings are absent for non-earners;
/// such rows still matter for household composition.
struct WorkerRecord {
  std::string person_id;
  std::string household_id;
  std::optional<double> earnings;
  int age = 0;
  bool male = false;
  std::string industry;  // empty = unobserved
  std::string locality;
  std::string province;
};

/// Workers CSV: person_id,household_id,earnings,age,male,industry,locality,province
std::vector<WorkerRecord> load_workers(const std::string& path);

/// Sparse log-earnings model: intercept + age + (age-21)+ spline + male plus
/// penalized industry/province/locality effects. The age block and the
/// industries employing the majority of child workers escape the penalty.
class WageModel {
 public:
  struct Offer {
    double value = 0.0;
    bool locality_fallback = false;  // unseen locality level; effect dropped
  };

  Offer offer(int age, bool male, const std::string& industry, const std::string& locality,
              const std::string& province) const;

  double intercept = 0.0;
  double age_coef = 0.0;
  double spline_coef = 0.0;  // on (age - 21)+
  double male_coef = 0.0;
  std::map<std::string, double> industry_effects;
  std::map<std::string, double> province_effects;
  std::map<std::string, double> locality_effects;
  std::string default_industry;  // most common industry among child workers

  std::vector<std::string> unpenalized;
  double penalty = 0.0;
  std::size_t cv_folds = 5;
  std::vector<double> lambda_grid;
  std::vector<double> cv_mse;
};

WageModel fit_wage_model(const std::vector<WorkerRecord>& workers,
                         const std::vector<double>& penalty_grid, std::size_t folds,
                         std::uint64_t seed, int child_age_max = 17);

/// exp of the fitted conditional mean of log earnings for one child.
WageModel::Offer wage_offer(const WageModel& model, int age, bool male,
                            const std::string& industry, const std::string& locality,
                            const std::string& province);

/// Sum of fitted earnings over household members excluding the child.
double nonchild_income(const WageModel& model, const std::vector<WorkerRecord>& household,
                       const std::string& child_person_id);

struct SurfacePoint {
  double e = 0.0;  // imputed child wage offer
  double n = 0.0;  // imputed non-child income
  bool male = false;
  double y = 0.0;  // enrollment outcome
};

struct Bandwidths {
  double h_e = 1.0;
  double h_n = 1.0;
  double h_sex = 0.5;  // mismatch weight for the discrete kernel, in [0,1]
};

/// Nadaraya-Watson surface with a Gaussian product kernel on (e, n) and an
/// exact-match/mismatch kernel on sex. Predictions are convex combinations
/// of training outcomes.
class EnrollmentSurface {
 public:
  double predict(double e, double n, bool male) const;  // throws NumericError on zero weight

  Bandwidths bandwidths;
  std::vector<SurfacePoint> points;
  std::vector<Bandwidths> grid;
  std::vector<double> loo_sse;  // leave-one-out SSE per grid entry (NaN: undefined)
};

/// cv_folds == 0 selects bandwidths by leave-one-out least squares (the
/// default); cv_folds >= 2 uses seeded k-fold assignment instead.
EnrollmentSurface fit_enrollment_surface(const std::vector<SurfacePoint>& points,
                                         const std::vector<Bandwidths>& bandwidth_grid,
                                         std::uint64_t seed, std::size_t cv_folds = 0);

/// Reference grid scaled to the data: sd * n^(-1/6) times {0.5, 1, 2} on each
/// continuous dimension, crossed with h_sex in {0.1, 0.5, 1}.
std::vector<Bandwidths> default_bandwidth_grid(const std::vector<SurfacePoint>& points);

/// Annual school grant by age, in wage units.
class GrantSpec {
 public:
  GrantSpec() = default;
  explicit GrantSpec(std::map<int, double> by_age);
  static GrantSpec flat(double grant, int age_min, int age_max);

  bool covers(int age) const;
  double at(int age) const;  // throws ValidationError when uncovered
  const std::map<int, double>& by_age() const { return by_age_; }

 private:
  std::map<int, double> by_age_;
};

/// Grant CSV: age,annual_grant
GrantSpec load_grants(const std::string& path);

struct SpsUnitPoint {
  double e = 0.0;
  double n = 0.0;
  bool male = false;
  int age = 0;
};

/// Counterfactual grant shift: m(e - g, n + g, sex) - m(e, n, sex).
double sps_cate(const EnrollmentSurface& surface, const SpsUnitPoint& unit,
                const GrantSpec& grant);

/// Study-data plumbing: column names used to derive wage-model inputs from
/// unit covariates, and the tuning grids.
struct SpsSettings {
  std::vector<double> lambda_grid = {0.0, 0.001, 0.01, 0.1};
  std::size_t folds = 5;
  std::size_t surface_cv_folds = 0;        // 0 = leave-one-out
  std::vector<Bandwidths> bandwidth_grid;  // empty: default grid from the data
  std::string household_col = "hh_id";
  std::string industry_col = "industry";
  std::string locality_col = "locality";
  std::string province_col = "province";
  int child_age_max = 17;
};

struct SpsModel {
  WageModel wage;
  EnrollmentSurface surface;
  GrantSpec grant;
  SpsSettings settings;
};

/// Covariate code rendered as a categorical level ("12" for integral values).
std::string level_code(double value);

/// Imputed (e, n) for one unit given the earnings roster.
SpsUnitPoint sps_point(const WageModel& model, const CovariateView& w,
                       const std::vector<WorkerRecord>& workers, const std::string& unit_id,
                       const SpsSettings& settings);

SpsModel fit_sps(const Dataset& target_predictor_half, const std::vector<WorkerRecord>& workers,
                 const GrantSpec& grant, const SpsSettings& settings, std::uint64_t seed);

double sps_predict_cate(const SpsModel& model, const CovariateView& w,
                        const std::vector<WorkerRecord>& workers, const std::string& unit_id);

TreatmentRule sps_rule(const SpsModel& model, const std::vector<WorkerRecord>& workers,
                       std::string label = "sps");

}  // namespace polieval
