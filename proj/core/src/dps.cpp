#include "polieval/dps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <unordered_map>

#include "polieval/csv.hpp"
#include "polieval/optim.hpp"
#include "polieval/rng.hpp"

namespace polieval {

void DpsParams::validate() const {
  if (type_means.empty()) throw ValidationError("dps params need K >= 1 types");
  if (type_logit.size() + 1 != type_means.size()) {
    throw ValidationError("dps params need K-1 type-logit rows");
  }
  if (!(discount > 0.0 && discount < 1.0)) throw ValidationError("discount must lie in (0,1)");
  if (!(scale > 0.0)) throw ValidationError("shock scale must be positive");
}

DpsParams DpsParams::neutral(std::size_t k_types) {
  if (k_types < 1) throw ValidationError("need K >= 1 types");
  DpsParams p;
  p.grant_util = 0.1;
  p.money_coef = 0.1;
  p.behind_penalties = {-0.1, -0.1, -0.1};
  p.alpha1 = 1.0;
  p.alpha2 = 0.1;
  p.alpha3 = 0.1;
  for (std::size_t k = 0; k < k_types; ++k) {
    // Spread support points so the type labels are not symmetric at start.
    p.type_means.push_back(-0.5 + static_cast<double>(k) /
                                      std::max<std::size_t>(1, k_types - 1));
  }
  if (k_types == 1) p.type_means = {0.0};
  p.type_logit.assign(k_types - 1, {0.0, 0.0, 0.0, 0.0, 0.0});
  return p;
}

void StateGrid::validate() const {
  if (min_age > max_age) throw ValidationError("state grid: min_age > max_age");
  if (terminal_age != max_age + 1) {
    throw ValidationError("state grid: terminal_age must be max_age + 1");
  }
  if (ed_max < 0) throw ValidationError("state grid: ed_max must be >= 0");
  if (primary_grades < 0 || sec < 0) throw ValidationError("state grid: negative grade levels");
}

bool StateGrid::on_grid(int age, int ed) const {
  if (age < min_age || age > max_age || ed < 0 || ed > ed_max) return false;
  return ed <= (age - min_age) + initial_ed_max;
}

PassProbTable PassProbTable::from_csv(const std::string& path) {
  csv::Table t = csv::read_file(path);
  const std::size_t c_age = t.column("age");
  const std::size_t c_ed = t.column("ed");
  const std::size_t c_p = t.column("p_pass");
  PassProbTable table;
  for (const auto& row : t.rows) {
    table.set(static_cast<int>(csv::parse_int(row[c_age], path)),
              static_cast<int>(csv::parse_int(row[c_ed], path)),
              csv::parse_double(row[c_p], path));
  }
  return table;
}

double PassProbTable::at(int age, int ed) const {
  auto it = table_.find({age, ed});
  return it == table_.end() ? 1.0 : it->second;
}

void PassProbTable::set(int age, int ed, double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ValidationError("pass probability must lie in [0,1], got " + std::to_string(p));
  }
  table_[{age, ed}] = p;
}

CellValues::CellValues(std::size_t n_types, int n_ages, int n_ed)
    : n_types_(n_types),
      n_ages_(n_ages),
      n_ed_(n_ed),
      school_(n_types * static_cast<std::size_t>(n_ages) * static_cast<std::size_t>(n_ed), 0.0),
      work_(school_.size(), 0.0) {}

namespace {
inline std::size_t value_index(std::size_t type, int age_idx, int ed, int n_ages, int n_ed) {
  return (type * static_cast<std::size_t>(n_ages) + static_cast<std::size_t>(age_idx)) *
             static_cast<std::size_t>(n_ed) +
         static_cast<std::size_t>(ed);
}
}  // namespace

double CellValues::v_school(std::size_t type, int age_idx, int ed) const {
  return school_[value_index(type, age_idx, ed, n_ages_, n_ed_)];
}
double CellValues::v_work(std::size_t type, int age_idx, int ed) const {
  return work_[value_index(type, age_idx, ed, n_ages_, n_ed_)];
}
double& CellValues::v_school(std::size_t type, int age_idx, int ed) {
  return school_[value_index(type, age_idx, ed, n_ages_, n_ed_)];
}
double& CellValues::v_work(std::size_t type, int age_idx, int ed) {
  return work_[value_index(type, age_idx, ed, n_ages_, n_ed_)];
}

double emax(double v_school, double v_work, double scale) {
  if (!(scale > 0.0)) throw ValidationError("emax scale must be positive");
  if (!std::isfinite(v_school) || !std::isfinite(v_work)) {
    throw NumericError("emax received a non-finite value");
  }
  const double hi = std::max(v_school, v_work);
  const double lo = std::min(v_school, v_work);
  return hi + scale * std::log1p(std::exp((lo - hi) / scale));
}

double terminal_value(int ed, double alpha1, double alpha2, double alpha3, int sec) {
  const double sigmoid = 1.0 / (1.0 + std::exp(-alpha2 * static_cast<double>(ed)));
  return alpha1 * sigmoid + (ed >= sec ? alpha3 : 0.0);
}

double flow_school(const DpsParams& params, const StateGrid& grid, const DpsCell& cell,
                   double grant, int age, int ed, std::size_t type) {
  double u = params.grant_util * grant + params.type_means[type];
  u += (cell.male ? params.pref_age_male : params.pref_age_female) * static_cast<double>(age);
  u += params.pref_father_ed * cell.father_ed;
  const int behind = (age - grid.behind_offset) - ed;
  if (behind >= 3) u += params.behind_penalties[2];
  else if (behind == 2) u += params.behind_penalties[1];
  else if (behind == 1) u += params.behind_penalties[0];
  if (ed < grid.primary_grades) {
    u += params.primary_cost * cell.distance;
  } else {
    u += cell.male ? params.secondary_cost_male : params.secondary_cost_female;
  }
  return u;
}

double flow_work(const DpsParams& params, const DpsCell& cell, int age_idx) {
  return params.money_coef * cell.wage_by_age[static_cast<std::size_t>(age_idx)];
}

std::vector<double> grant_vector(const GrantSpec& grant, const StateGrid& grid) {
  std::vector<double> g(static_cast<std::size_t>(grid.n_ages()), 0.0);
  for (int a = grid.min_age; a <= grid.max_age; ++a) {
    if (grant.covers(a)) g[static_cast<std::size_t>(a - grid.min_age)] = grant.at(a);
  }
  return g;
}

std::vector<double> zero_grant(const StateGrid& grid) {
  return std::vector<double>(static_cast<std::size_t>(grid.n_ages()), 0.0);
}

CellValues solve_dp(const DpsParams& params, const StateGrid& grid, const PassProbTable& pass,
                    const DpsCell& cell, const std::vector<double>& grant_by_age) {
  params.validate();
  grid.validate();
  if (cell.wage_by_age.size() != static_cast<std::size_t>(grid.n_ages())) {
    throw ValidationError("wage profile does not cover the grid ages");
  }
  if (grant_by_age.size() != static_cast<std::size_t>(grid.n_ages())) {
    throw ValidationError("grant profile does not cover the grid ages");
  }

  const int n_ed = grid.n_ed();
  CellValues values(params.n_types(), grid.n_ages(), n_ed);

  for (std::size_t k = 0; k < params.n_types(); ++k) {
    for (int age = grid.max_age; age >= grid.min_age; --age) {
      const int age_idx = age - grid.min_age;
      for (int ed = 0; ed < n_ed; ++ed) {
        auto continuation = [&](int next_ed) -> double {
          if (age == grid.max_age) {
            return terminal_value(next_ed, params.alpha1, params.alpha2, params.alpha3,
                                  grid.sec);
          }
          return emax(values.v_school(k, age_idx + 1, next_ed),
                      values.v_work(k, age_idx + 1, next_ed), params.scale);
        };
        const double stay = continuation(ed);
        const double p_adv = ed + 1 <= grid.ed_max ? pass.at(age, ed + 1) : 0.0;
        const double advance = p_adv > 0.0 ? continuation(ed + 1) : stay;
        const double grant = grant_by_age[static_cast<std::size_t>(age_idx)];
        values.v_school(k, age_idx, ed) =
            flow_school(params, grid, cell, grant, age, ed, k) +
            params.discount * (p_adv * advance + (1.0 - p_adv) * stay);
        values.v_work(k, age_idx, ed) =
            flow_work(params, cell, age_idx) + params.discount * stay;
      }
    }
  }
  return values;
}

namespace {
double sigmoid(double t) {
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}
}  // namespace

double enroll_prob(const CellValues& values, const StateGrid& grid, std::size_t type, int age,
                   int ed) {
  if (!grid.on_grid(age, ed)) {
    throw ValidationError("state (age=" + std::to_string(age) + ", ed=" + std::to_string(ed) +
                          ") is off the grid");
  }
  const int age_idx = age - grid.min_age;
  return sigmoid(values.v_school(type, age_idx, ed) - values.v_work(type, age_idx, ed));
}

std::vector<double> type_posterior(const DpsParams& params, int age, int ed, bool male,
                                   double father_ed) {
  const std::size_t k_types = params.n_types();
  std::vector<double> logits(k_types, 0.0);
  for (std::size_t k = 0; k + 1 < k_types; ++k) {
    const auto& b = params.type_logit[k];
    logits[k] = b[0] + b[1] * static_cast<double>(age) + b[2] * static_cast<double>(ed) +
                b[3] * (male ? 1.0 : 0.0) + b[4] * father_ed;
  }
  const double hi = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& l : logits) {
    l = std::exp(l - hi);
    total += l;
  }
  for (double& l : logits) l /= total;
  return logits;
}

namespace {

struct CellHash {
  std::size_t operator()(const DpsCell& cell) const {
    std::size_t h = std::hash<bool>()(cell.male);
    auto mix = [&h](double v) {
      h ^= std::hash<double>()(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    };
    mix(cell.father_ed);
    mix(cell.distance);
    for (double w : cell.wage_by_age) mix(w);
    return h;
  }
};

}  // namespace

DpsPanel::DpsPanel(const std::vector<DpsObservation>& observations, const StateGrid& grid)
    : grid_(grid) {
  grid_.validate();
  if (observations.empty()) throw ValidationError("dps panel is empty");
  struct GroupKey {
    std::size_t cell;
    int age, ed, enrolled;
    bool operator<(const GroupKey& o) const {
      return std::tie(cell, age, ed, enrolled) < std::tie(o.cell, o.age, o.ed, o.enrolled);
    }
  };
  std::unordered_map<DpsCell, std::size_t, CellHash> cell_index;
  std::map<GroupKey, std::size_t> counts;
  for (const auto& obs : observations) {
    if (!grid_.on_grid(obs.age, obs.ed)) {
      throw ValidationError("observation state (age=" + std::to_string(obs.age) +
                            ", ed=" + std::to_string(obs.ed) + ") is off the grid");
    }
    if (obs.wage_by_age.size() != static_cast<std::size_t>(grid_.n_ages())) {
      throw ValidationError("observation wage profile does not cover the grid ages");
    }
    DpsCell cell{obs.male, obs.father_ed, obs.distance, obs.wage_by_age};
    auto [it, inserted] = cell_index.try_emplace(std::move(cell), cells_.size());
    if (inserted) cells_.push_back(it->first);
    counts[GroupKey{it->second, obs.age, obs.ed, obs.enrolled ? 1 : 0}] += 1;
    ++n_units_;
  }
  for (const auto& [key, count] : counts) {
    groups_.push_back(Group{key.cell, key.age, key.ed, key.enrolled, count});
  }
}

double log_likelihood(const DpsParams& params, const DpsPanel& panel, const PassProbTable& pass,
                      const std::vector<double>& grant_by_age, LikelihoodDiagnostics* diag) {
  params.validate();
  const StateGrid& grid = panel.grid();
  std::vector<CellValues> values;
  values.reserve(panel.cells().size());
  for (const auto& cell : panel.cells()) {
    values.push_back(solve_dp(params, grid, pass, cell, grant_by_age));
  }
  constexpr double kLogFloor = 1e-300;
  double total = 0.0;
  for (const auto& g : panel.groups()) {
    const DpsCell& cell = panel.cells()[g.cell];
    const std::vector<double> weights =
        type_posterior(params, g.age, g.ed, cell.male, cell.father_ed);
    double mix = 0.0;
    for (std::size_t k = 0; k < params.n_types(); ++k) {
      const double p = enroll_prob(values[g.cell], grid, k, g.age, g.ed);
      mix += weights[k] * (g.enrolled ? p : 1.0 - p);
    }
    if (mix < kLogFloor) {
      mix = kLogFloor;
      if (diag) diag->floored += 1;
    }
    total += static_cast<double>(g.count) * std::log(mix);
  }
  return total;
}

Eigen::VectorXd pack_params(const DpsParams& params) {
  const std::size_t k = params.n_types();
  Eigen::VectorXd x(14 + k + 5 * (k - 1));
  Eigen::Index j = 0;
  x(j++) = params.grant_util;
  x(j++) = params.money_coef;
  x(j++) = params.pref_age_male;
  x(j++) = params.pref_age_female;
  x(j++) = params.pref_father_ed;
  for (double b : params.behind_penalties) x(j++) = b;
  x(j++) = params.primary_cost;
  x(j++) = params.secondary_cost_male;
  x(j++) = params.secondary_cost_female;
  x(j++) = params.alpha1;
  x(j++) = params.alpha2;
  x(j++) = params.alpha3;
  for (double m : params.type_means) x(j++) = m;
  for (const auto& row : params.type_logit) {
    for (double b : row) x(j++) = b;
  }
  return x;
}

DpsParams unpack_params(const Eigen::VectorXd& x, const DpsParams& shape) {
  DpsParams p = shape;
  const std::size_t k = shape.n_types();
  if (x.size() != static_cast<Eigen::Index>(14 + k + 5 * (k - 1))) {
    throw ValidationError("parameter vector has the wrong length");
  }
  Eigen::Index j = 0;
  p.grant_util = x(j++);
  p.money_coef = x(j++);
  p.pref_age_male = x(j++);
  p.pref_age_female = x(j++);
  p.pref_father_ed = x(j++);
  for (double& b : p.behind_penalties) b = x(j++);
  p.primary_cost = x(j++);
  p.secondary_cost_male = x(j++);
  p.secondary_cost_female = x(j++);
  p.alpha1 = x(j++);
  p.alpha2 = x(j++);
  p.alpha3 = x(j++);
  for (double& m : p.type_means) m = x(j++);
  for (auto& row : p.type_logit) {
    for (double& b : row) b = x(j++);
  }
  return p;
}

FitResult fit_mle(const DpsPanel& panel, const DpsParams& init, const PassProbTable& pass,
                  const std::vector<double>& grant_by_age, const FitOptions& options,
                  std::uint64_t seed) {
  init.validate();
  bool any_enrolled = false;
  bool any_not = false;
  for (const auto& g : panel.groups()) {
    (g.enrolled ? any_enrolled : any_not) = true;
  }
  if (!any_enrolled || !any_not) {
    throw ValidationError("dps estimation needs both outcomes in the data");
  }

  const Objective negloglik = [&](const Eigen::VectorXd& x) {
    return -log_likelihood(unpack_params(x, init), panel, pass, grant_by_age);
  };

  FitResult result;
  const Eigen::VectorXd x0 = pack_params(init);
  double best_value = negloglik(x0);
  Eigen::VectorXd best_x = x0;
  result.trace.push_back({0, 1, -best_value});

  auto rng = make_rng(seed, 0x647073 /* "dps" */);
  bool any_converged = false;
  for (std::size_t r = 0; r < options.restarts; ++r) {
    Eigen::VectorXd start = x0;
    if (r > 0) {
      for (Eigen::Index j = 0; j < start.size(); ++j) {
        start(j) += (uniform01(rng) - 0.5) * (1.0 + std::abs(x0(j)));
      }
    }
    OptimResult nm = nelder_mead(negloglik, start, 0.25, options.max_iter, options.tol);
    any_converged = any_converged || nm.converged;
    result.trace.push_back({r + 1, nm.evaluations, -nm.value});
    if (nm.value < best_value) {
      best_value = nm.value;
      best_x = nm.x;
    }
  }

  if (options.polish_iter > 0) {
    OptimResult polish = bfgs_polish(negloglik, best_x, options.polish_iter, 1e-7);
    result.trace.push_back({options.restarts + 1, polish.evaluations, -polish.value});
    if (polish.value < best_value) {
      best_value = polish.value;
      best_x = polish.x;
    }
    any_converged = any_converged || polish.converged;
  }

  result.params = unpack_params(best_x, init);
  result.loglik = -best_value;
  result.converged = any_converged;
  return result;
}

double dps_cate(const DpsParams& params, const StateGrid& grid, const PassProbTable& pass,
                const DpsCell& cell, int age, int ed, const std::vector<double>& grant_by_age) {
  const CellValues with_grant = solve_dp(params, grid, pass, cell, grant_by_age);
  const CellValues no_grant = solve_dp(params, grid, pass, cell, zero_grant(grid));
  const std::vector<double> weights = type_posterior(params, age, ed, cell.male, cell.father_ed);
  double cate = 0.0;
  for (std::size_t k = 0; k < params.n_types(); ++k) {
    cate += weights[k] * (enroll_prob(with_grant, grid, k, age, ed) -
                          enroll_prob(no_grant, grid, k, age, ed));
  }
  return cate;
}

WageProfileFn wage_profile_from_model(const WageModel& model, const SpsSettings& sps_settings,
                                      const StateGrid& grid) {
  auto shared = std::make_shared<WageModel>(model);
  return [shared, sps_settings, grid](const CovariateView& w) {
    std::vector<double> wages;
    wages.reserve(static_cast<std::size_t>(grid.n_ages()));
    auto level = [&](const std::string& col) -> std::string {
      if (col.empty()) return "";
      auto v = w.find(col);
      if (!v || w.is_missing(col)) return "";
      return level_code(*v);
    };
    const std::string industry = level(sps_settings.industry_col);
    const std::string locality = level(sps_settings.locality_col);
    const std::string province = level(sps_settings.province_col);
    for (int a = grid.min_age; a <= grid.max_age; ++a) {
      wages.push_back(shared->offer(a, w.male, industry, locality, province).value);
    }
    return wages;
  };
}

DpsObservation dps_observation(const CovariateView& w, double outcome,
                               const DpsSettings& settings, const WageProfileFn& wages) {
  DpsObservation obs;
  obs.age = w.age;
  obs.male = w.male;
  obs.enrolled = outcome != 0.0 ? 1 : 0;
  obs.ed = static_cast<int>(w.value_of(settings.ed_col));
  obs.father_ed = w.is_missing(settings.father_ed_col) ? 0.0 : w.value_of(settings.father_ed_col);
  obs.distance = w.is_missing(settings.distance_col) ? 0.0 : w.value_of(settings.distance_col);
  obs.wage_by_age = wages(w);
  return obs;
}

std::vector<DpsObservation> dps_observations(const Dataset& data, const DpsSettings& settings,
                                             const WageProfileFn& wages) {
  std::vector<DpsObservation> out;
  out.reserve(data.units.size());
  for (const auto& u : data.units) {
    out.push_back(dps_observation(data.covariates_of(u), u.outcome, settings, wages));
  }
  return out;
}

DpsModel fit_dps(const Dataset& target_predictor_half, const DpsParams& init,
                 const DpsSettings& settings, const PassProbTable& pass, const GrantSpec& grant,
                 const WageProfileFn& wages, std::uint64_t seed) {
  if (target_predictor_half.role != DatasetRole::target_ex_ante) {
    throw ValidationError("fit_dps expects target ex-ante (status quo) data");
  }
  DpsModel model;
  model.settings = settings;
  model.pass = pass;
  model.wages = wages;
  model.grant_by_age = grant_vector(grant, settings.grid);
  DpsPanel panel(dps_observations(target_predictor_half, settings, wages), settings.grid);
  // Status-quo data: choices were made with no program in place.
  model.fit = fit_mle(panel, init, pass, zero_grant(settings.grid), settings.fit, seed);
  model.params = model.fit.params;
  return model;
}

double dps_predict_cate(const DpsModel& model, const CovariateView& w) {
  DpsObservation obs = dps_observation(w, 0.0, model.settings, model.wages);
  DpsCell cell{obs.male, obs.father_ed, obs.distance, obs.wage_by_age};
  return dps_cate(model.params, model.settings.grid, model.pass, cell, obs.age, obs.ed,
                  model.grant_by_age);
}

TreatmentRule dps_rule(const DpsModel& model, std::string label) {
  auto shared = std::make_shared<DpsModel>(model);
  return make_plugin_rule(std::move(label),
                          [shared](const CovariateView& w) { return dps_predict_cate(*shared, w); });
}

std::vector<std::array<std::string, 3>> dps_param_report(const DpsParams& params) {
  std::vector<std::array<std::string, 3>> rows;
  auto add = [&](const std::string& name, double v) {
    rows.push_back({name, csv::format_double(v), "0"});
  };
  add("grant_util", params.grant_util);
  add("money_coef", params.money_coef);
  add("pref_age_male", params.pref_age_male);
  add("pref_age_female", params.pref_age_female);
  add("pref_father_ed", params.pref_father_ed);
  add("behind_1", params.behind_penalties[0]);
  add("behind_2", params.behind_penalties[1]);
  add("behind_3plus", params.behind_penalties[2]);
  add("primary_cost", params.primary_cost);
  add("secondary_cost_male", params.secondary_cost_male);
  add("secondary_cost_female", params.secondary_cost_female);
  add("alpha1", params.alpha1);
  add("alpha2", params.alpha2);
  add("alpha3", params.alpha3);
  for (std::size_t k = 0; k < params.type_means.size(); ++k) {
    add("type_mean_" + std::to_string(k + 1), params.type_means[k]);
  }
  for (std::size_t k = 0; k < params.type_logit.size(); ++k) {
    const char* names[5] = {"const", "age", "ed", "male", "father_ed"};
    for (std::size_t j = 0; j < 5; ++j) {
      add("type_logit_" + std::to_string(k + 1) + "_" + names[j], params.type_logit[k][j]);
    }
  }
  add("discount", params.discount);
  add("scale", params.scale);
  return rows;
}

}  // namespace polieval
