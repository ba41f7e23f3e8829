#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "polieval/contrast.hpp"
#include "polieval/sps.hpp"
#include "polieval/types.hpp"

namespace polieval {

/// Parameters of the finite-horizon schooling/work model. The grant enters
/// flow utility through one composite coefficient (gamma*delta); wages enter
/// work utility through money_coef (delta). Discount and shock scale are
/// held fixed in estimation.
struct DpsParams {
  double grant_util = 0.0;
  double money_coef = 0.0;
  double pref_age_male = 0.0;
  double pref_age_female = 0.0;
  double pref_father_ed = 0.0;
  std::array<double, 3> behind_penalties{0.0, 0.0, 0.0};  // behind by 1, 2, >=3 years
  double primary_cost = 0.0;                              // on distance to school
  double secondary_cost_male = 0.0;
  double secondary_cost_female = 0.0;
  double alpha1 = 0.0;  // terminal sigmoid level
  double alpha2 = 0.0;  // terminal sigmoid slope in ed
  double alpha3 = 0.0;  // completed-secondary bonus
  std::vector<double> type_means;                   // mu_1..mu_K
  std::vector<std::array<double, 5>> type_logit;    // K-1 rows on (1, age, ed, male, father_ed)
  double discount = 0.95;
  double scale = 1.0;

  std::size_t n_types() const { return type_means.size(); }
  void validate() const;

  static DpsParams neutral(std::size_t k_types);
};

struct StateGrid {
  int min_age = 6;
  int max_age = 17;     // children can only be enrolled through this age
  int terminal_age = 18;
  int ed_max = 12;
  int primary_grades = 6;  // enrolling with ed < primary_grades attends primary school
  int sec = 12;            // completed years counting as finished secondary
  int behind_offset = 6;   // years behind grade = (age - behind_offset) - ed
  int initial_ed_max = 12; // education a child may already hold at min_age

  int n_ages() const { return max_age - min_age + 1; }
  int n_ed() const { return ed_max + 1; }
  void validate() const;
  bool on_grid(int age, int ed) const;
};

/// Grade-passing probabilities p(age, ed): chance of completing grade `ed`
/// attempted at `age`. Unset states default to 1.
class PassProbTable {
 public:
  static PassProbTable all_pass() { return PassProbTable(); }
  static PassProbTable from_csv(const std::string& path);

  double at(int age, int ed) const;
  void set(int age, int ed, double p);

 private:
  std::map<std::pair<int, int>, double> table_;
};

/// Time-invariant unit characteristics plus the wage-offer profile over the
/// decision ages (indexed age - min_age).
struct DpsCell {
  bool male = false;
  double father_ed = 0.0;
  double distance = 0.0;
  std::vector<double> wage_by_age;

  bool operator==(const DpsCell&) const = default;
};

/// Deterministic parts of the school/work value functions for one cell,
/// per (type, age, ed).
class CellValues {
 public:
  CellValues(std::size_t n_types, int n_ages, int n_ed);

  double v_school(std::size_t type, int age_idx, int ed) const;
  double v_work(std::size_t type, int age_idx, int ed) const;
  double& v_school(std::size_t type, int age_idx, int ed);
  double& v_work(std::size_t type, int age_idx, int ed);

  std::size_t n_types() const { return n_types_; }

 private:
  std::size_t n_types_;
  int n_ages_;
  int n_ed_;
  std::vector<double> school_;
  std::vector<double> work_;
};

/// Expected maximum of (v_school + eps, v_work) over a standard logistic
/// shock: scale * log(exp(v_school/scale) + exp(v_work/scale)), overflow-safe.
double emax(double v_school, double v_work, double scale);

/// alpha1 / (1 + exp(-alpha2 * ed)) + alpha3 * 1{ed >= sec}.
double terminal_value(int ed, double alpha1, double alpha2, double alpha3, int sec);

/// Flow utilities excluding the taste shock.
double flow_school(const DpsParams& params, const StateGrid& grid, const DpsCell& cell,
                   double grant, int age, int ed, std::size_t type);
double flow_work(const DpsParams& params, const DpsCell& cell, int age_idx);

/// Grant profile over the grid ages; ages not covered by the spec get 0.
std::vector<double> grant_vector(const GrantSpec& grant, const StateGrid& grid);
std::vector<double> zero_grant(const StateGrid& grid);

/// Backward induction from the terminal value at terminal_age.
CellValues solve_dp(const DpsParams& params, const StateGrid& grid, const PassProbTable& pass,
                    const DpsCell& cell, const std::vector<double>& grant_by_age);

/// 1 / (1 + exp(v_work - v_school)) at a grid state.
double enroll_prob(const CellValues& values, const StateGrid& grid, std::size_t type, int age,
                   int ed);

/// Multinomial-logit type probabilities on (1, age, ed, male, father_ed);
/// the K-th type is the base category.
std::vector<double> type_posterior(const DpsParams& params, int age, int ed, bool male,
                                   double father_ed);

struct DpsObservation {
  int age = 0;
  int ed = 0;
  bool male = false;
  double father_ed = 0.0;
  double distance = 0.0;
  std::vector<double> wage_by_age;
  int enrolled = 0;
};

/// Estimation panel: observations deduplicated into covariate cells and
/// (cell, age, ed, outcome) groups so likelihood evaluations stay cheap.
class DpsPanel {
 public:
  struct Group {
    std::size_t cell = 0;
    int age = 0;
    int ed = 0;
    int enrolled = 0;
    std::size_t count = 0;
  };

  DpsPanel(const std::vector<DpsObservation>& observations, const StateGrid& grid);

  const StateGrid& grid() const { return grid_; }
  const std::vector<DpsCell>& cells() const { return cells_; }
  const std::vector<Group>& groups() const { return groups_; }
  std::size_t n_units() const { return n_units_; }

 private:
  StateGrid grid_;
  std::vector<DpsCell> cells_;
  std::vector<Group> groups_;
  std::size_t n_units_ = 0;
};

struct LikelihoodDiagnostics {
  std::size_t floored = 0;  // mixture probabilities clamped away from 0
};

double log_likelihood(const DpsParams& params, const DpsPanel& panel, const PassProbTable& pass,
                      const std::vector<double>& grant_by_age,
                      LikelihoodDiagnostics* diag = nullptr);

struct FitOptions {
  std::size_t restarts = 3;
  std::size_t max_iter = 2000;
  double tol = 1e-9;
  std::size_t polish_iter = 200;
};

struct FitTraceRow {
  std::size_t restart = 0;  // restart index; polish reported as restarts
  std::size_t iter = 0;     // objective evaluations spent
  double loglik = 0.0;
};

struct FitResult {
  DpsParams params;
  double loglik = 0.0;
  bool converged = false;
  std::vector<FitTraceRow> trace;
};

/// Multi-start simplex search with a quasi-Newton polish on the incumbent.
/// The returned likelihood is never below the initial point's.
FitResult fit_mle(const DpsPanel& panel, const DpsParams& init, const PassProbTable& pass,
                  const std::vector<double>& grant_by_age, const FitOptions& options,
                  std::uint64_t seed);

/// Type-mixed difference in enrollment probability between the grant program
/// and no program, each from a full re-solve of the dynamic program.
double dps_cate(const DpsParams& params, const StateGrid& grid, const PassProbTable& pass,
                const DpsCell& cell, int age, int ed, const std::vector<double>& grant_by_age);

/// Parameter packing used by the optimizer (discount and scale stay fixed).
Eigen::VectorXd pack_params(const DpsParams& params);
DpsParams unpack_params(const Eigen::VectorXd& x, const DpsParams& shape);

/// Study-data plumbing.
struct DpsSettings {
  std::string ed_col = "yrs_educ";
  std::string father_ed_col = "father_ed";
  std::string distance_col = "distance";
  StateGrid grid;
  FitOptions fit;
};

using WageProfileFn = std::function<std::vector<double>(const CovariateView&)>;

/// Wage profiles from the fitted sparse log-earnings model evaluated at each
/// grid age with the unit's observed categorical levels.
WageProfileFn wage_profile_from_model(const WageModel& model, const SpsSettings& sps_settings,
                                      const StateGrid& grid);

DpsObservation dps_observation(const CovariateView& w, double outcome,
                               const DpsSettings& settings, const WageProfileFn& wages);

std::vector<DpsObservation> dps_observations(const Dataset& data, const DpsSettings& settings,
                                             const WageProfileFn& wages);

struct DpsModel {
  DpsParams params;
  DpsSettings settings;
  PassProbTable pass;
  std::vector<double> grant_by_age;
  WageProfileFn wages;
  FitResult fit;
};

DpsModel fit_dps(const Dataset& target_predictor_half, const DpsParams& init,
                 const DpsSettings& settings, const PassProbTable& pass, const GrantSpec& grant,
                 const WageProfileFn& wages, std::uint64_t seed);

double dps_predict_cate(const DpsModel& model, const CovariateView& w);

TreatmentRule dps_rule(const DpsModel& model, std::string label = "dps");

/// Fitted-parameter report rows: name,value,std_flag.
std::vector<std::array<std::string, 3>> dps_param_report(const DpsParams& params);

}  // namespace polieval
