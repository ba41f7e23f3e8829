#include "polieval/sps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <set>
#include <unordered_map>

#include "polieval/csv.hpp"
#include "polieval/rng.hpp"

namespace polieval {

std::vector<WorkerRecord> load_workers(const std::string& path) {
  csv::Table t = csv::read_file(path);
  const std::size_t c_pid = t.column("person_id");
  const std::size_t c_hid = t.column("household_id");
  const std::size_t c_earn = t.column("earnings");
  const std::size_t c_age = t.column("age");
  const std::size_t c_male = t.column("male");
  const std::size_t c_ind = t.column("industry");
  const std::size_t c_loc = t.column("locality");
  const std::size_t c_prov = t.column("province");
  std::vector<WorkerRecord> workers;
  std::size_t lineno = 1;
  for (const auto& row : t.rows) {
    ++lineno;
    const std::string where = path + " line " + std::to_string(lineno);
    WorkerRecord w;
    w.person_id = row[c_pid];
    w.household_id = row[c_hid];
    if (!row[c_earn].empty()) w.earnings = csv::parse_double(row[c_earn], where);
    w.age = static_cast<int>(csv::parse_int(row[c_age], where));
    w.male = csv::parse_int(row[c_male], where) != 0;
    w.industry = row[c_ind];
    w.locality = row[c_loc];
    w.province = row[c_prov];
    workers.push_back(std::move(w));
  }
  return workers;
}

namespace {

double spline21(int age) { return age > 21 ? static_cast<double>(age - 21) : 0.0; }

struct LevelBlock {
  std::vector<std::string> levels;  // design levels, reference dropped
  std::string reference;
  std::unordered_map<std::string, std::size_t> index;  // level -> design column offset
};

LevelBlock make_block(const std::vector<std::string>& values) {
  std::map<std::string, std::size_t> counts;
  for (const auto& v : values) counts[v]++;
  LevelBlock block;
  if (counts.empty()) return block;
  auto ref = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > ref->second) ref = it;
  }
  block.reference = ref->first;
  for (const auto& [level, cnt] : counts) {
    if (level == block.reference) continue;
    block.index.emplace(level, block.levels.size());
    block.levels.push_back(level);
  }
  return block;
}

}  // namespace

WageModel fit_wage_model(const std::vector<WorkerRecord>& workers,
                         const std::vector<double>& penalty_grid, std::size_t folds,
                         std::uint64_t seed, int child_age_max) {
  if (penalty_grid.empty()) throw ValidationError("wage model: empty penalty grid");

  std::vector<const WorkerRecord*> earners;
  for (const auto& w : workers) {
    if (!w.earnings) continue;
    if (!(*w.earnings > 0.0)) {
      throw ValidationError("wage model: non-positive earnings for person " + w.person_id);
    }
    earners.push_back(&w);
  }
  if (earners.size() < folds * 2) {
    throw ValidationError("wage model: need at least " + std::to_string(folds * 2) +
                          " positive-earnings observations");
  }

  // Most common industry among child workers; ties take the smaller code.
  std::map<std::string, std::size_t> child_industry_counts;
  std::size_t n_child_with_industry = 0;
  for (const auto* w : earners) {
    if (w->age <= child_age_max && !w->industry.empty()) {
      child_industry_counts[w->industry]++;
      ++n_child_with_industry;
    }
  }
  WageModel model;
  if (!child_industry_counts.empty()) {
    auto best = child_industry_counts.begin();
    for (auto it = child_industry_counts.begin(); it != child_industry_counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    model.default_industry = best->first;
  } else {
    std::map<std::string, std::size_t> all_counts;
    for (const auto* w : earners) {
      if (!w->industry.empty()) all_counts[w->industry]++;
    }
    if (!all_counts.empty()) {
      auto best = all_counts.begin();
      for (auto it = all_counts.begin(); it != all_counts.end(); ++it) {
        if (it->second > best->second) best = it;
      }
      model.default_industry = best->first;
    }
  }

  // Industries that cover the majority of child workers stay unpenalized.
  std::set<std::string> majority_child;
  if (n_child_with_industry > 0) {
    std::vector<std::pair<std::string, std::size_t>> ranked(child_industry_counts.begin(),
                                                            child_industry_counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::size_t covered = 0;
    for (const auto& [ind, cnt] : ranked) {
      majority_child.insert(ind);
      covered += cnt;
      if (2 * covered > n_child_with_industry) break;
    }
  }

  auto industry_of = [&](const WorkerRecord& w) {
    return w.industry.empty() ? model.default_industry : w.industry;
  };

  std::vector<std::string> inds, provs, locs;
  for (const auto* w : earners) {
    inds.push_back(industry_of(*w));
    provs.push_back(w->province);
    locs.push_back(w->locality);
  }
  LevelBlock ind_block = make_block(inds);
  LevelBlock prov_block = make_block(provs);
  LevelBlock loc_block = make_block(locs);

  const std::size_t n = earners.size();
  const std::size_t k = 4 + ind_block.levels.size() + prov_block.levels.size() +
                        loc_block.levels.size();
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                            static_cast<Eigen::Index>(k));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  const std::size_t off_ind = 4;
  const std::size_t off_prov = off_ind + ind_block.levels.size();
  const std::size_t off_loc = off_prov + prov_block.levels.size();
  for (std::size_t i = 0; i < n; ++i) {
    const WorkerRecord& w = *earners[i];
    x(i, 0) = 1.0;
    x(i, 1) = static_cast<double>(w.age);
    x(i, 2) = spline21(w.age);
    x(i, 3) = w.male ? 1.0 : 0.0;
    if (auto it = ind_block.index.find(industry_of(w)); it != ind_block.index.end()) {
      x(i, static_cast<Eigen::Index>(off_ind + it->second)) = 1.0;
    }
    if (auto it = prov_block.index.find(w.province); it != prov_block.index.end()) {
      x(i, static_cast<Eigen::Index>(off_prov + it->second)) = 1.0;
    }
    if (auto it = loc_block.index.find(w.locality); it != loc_block.index.end()) {
      x(i, static_cast<Eigen::Index>(off_loc + it->second)) = 1.0;
    }
    y(i) = std::log(*w.earnings);
  }

  std::vector<std::uint8_t> penalized(k, 1);
  penalized[0] = penalized[1] = penalized[2] = 0;  // intercept + age spline
  model.unpenalized = {"intercept", "age", "age_spline_21"};
  for (std::size_t j = 0; j < ind_block.levels.size(); ++j) {
    if (majority_child.count(ind_block.levels[j])) {
      penalized[off_ind + j] = 0;
      model.unpenalized.push_back("industry:" + ind_block.levels[j]);
    }
  }

  LassoCvResult cv = lasso_cv(x, y, penalized, penalty_grid, folds, seed);

  model.intercept = cv.beta(0);
  model.age_coef = cv.beta(1);
  model.spline_coef = cv.beta(2);
  model.male_coef = cv.beta(3);
  model.penalty = cv.lambda;
  model.cv_folds = folds;
  model.lambda_grid = cv.lambda_grid;
  model.cv_mse = cv.cv_mse;
  model.industry_effects[ind_block.reference] = 0.0;
  for (std::size_t j = 0; j < ind_block.levels.size(); ++j) {
    model.industry_effects[ind_block.levels[j]] = cv.beta(static_cast<Eigen::Index>(off_ind + j));
  }
  model.province_effects[prov_block.reference] = 0.0;
  for (std::size_t j = 0; j < prov_block.levels.size(); ++j) {
    model.province_effects[prov_block.levels[j]] =
        cv.beta(static_cast<Eigen::Index>(off_prov + j));
  }
  model.locality_effects[loc_block.reference] = 0.0;
  for (std::size_t j = 0; j < loc_block.levels.size(); ++j) {
    model.locality_effects[loc_block.levels[j]] = cv.beta(static_cast<Eigen::Index>(off_loc + j));
  }
  return model;
}

WageModel::Offer WageModel::offer(int age, bool male, const std::string& industry,
                                  const std::string& locality,
                                  const std::string& province) const {
  Offer out;
  double log_wage = intercept + age_coef * static_cast<double>(age) + spline_coef * spline21(age) +
                    (male ? male_coef : 0.0);
  const std::string& ind = industry.empty() ? default_industry : industry;
  if (auto it = industry_effects.find(ind); it != industry_effects.end()) {
    log_wage += it->second;
  } else if (auto dflt = industry_effects.find(default_industry);
             dflt != industry_effects.end()) {
    log_wage += dflt->second;
  }
  if (auto it = province_effects.find(province); it != province_effects.end()) {
    log_wage += it->second;
  }
  if (auto it = locality_effects.find(locality); it != locality_effects.end()) {
    log_wage += it->second;
  } else {
    out.locality_fallback = true;  // province + industry effects only
  }
  out.value = std::exp(log_wage);
  return out;
}

WageModel::Offer wage_offer(const WageModel& model, int age, bool male,
                            const std::string& industry, const std::string& locality,
                            const std::string& province) {
  return model.offer(age, male, industry, locality, province);
}

double nonchild_income(const WageModel& model, const std::vector<WorkerRecord>& household,
                       const std::string& child_person_id) {
  if (household.empty()) throw ValidationError("nonchild income: empty household");
  bool child_found = false;
  double total = 0.0;
  for (const auto& member : household) {
    if (member.person_id == child_person_id) {
      child_found = true;
      continue;
    }
    total += model.offer(member.age, member.male, member.industry, member.locality,
                         member.province)
                 .value;
  }
  if (!child_found) {
    throw ValidationError("nonchild income: child " + child_person_id + " not in household");
  }
  return total;
}

namespace {

constexpr double kNoMass = -std::numeric_limits<double>::infinity();

// Log kernel weight; -inf marks exactly-zero mass (discrete mismatch with a
// zero discrete bandwidth).
double log_kernel_weight(const SurfacePoint& p, double e, double n, bool male,
                         const Bandwidths& h) {
  const double de = (e - p.e) / h.h_e;
  const double dn = (n - p.n) / h.h_n;
  double l = -0.5 * (de * de + dn * dn);
  if (p.male != male) {
    if (h.h_sex == 0.0) return kNoMass;
    l += std::log(h.h_sex);
  }
  return l;
}

// Normalized-weight average evaluated in the log domain, so distant queries
// resolve to the nearest kernel mass instead of underflowing to 0/0.
template <typename Excluded>
double nw_average_if(const std::vector<SurfacePoint>& points, double e, double n, bool male,
                     const Bandwidths& h, Excluded excluded, bool* defined) {
  double best = kNoMass;
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (excluded(j)) continue;
    best = std::max(best, log_kernel_weight(points[j], e, n, male, h));
  }
  if (best == kNoMass) {
    *defined = false;
    return 0.0;
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (excluded(j)) continue;
    const double l = log_kernel_weight(points[j], e, n, male, h);
    if (l == kNoMass) continue;
    const double w = std::exp(l - best);
    num += w * points[j].y;
    den += w;
  }
  *defined = true;
  return num / den;
}

double nw_average(const std::vector<SurfacePoint>& points, double e, double n, bool male,
                  const Bandwidths& h, bool* defined) {
  return nw_average_if(points, e, n, male, h, [](std::size_t) { return false; }, defined);
}

double nw_average_heldout(const std::vector<SurfacePoint>& points,
                          const std::vector<std::uint32_t>& fold, std::uint32_t held_fold,
                          double e, double n, bool male, const Bandwidths& h, bool* defined) {
  return nw_average_if(points, e, n, male, h,
                       [&](std::size_t j) { return fold[j] == held_fold; }, defined);
}

void check_bandwidths(const Bandwidths& h) {
  if (!(h.h_e > 0.0) || !(h.h_n > 0.0)) {
    throw ValidationError("continuous bandwidths must be positive");
  }
  if (!(h.h_sex >= 0.0 && h.h_sex <= 1.0)) {
    throw ValidationError("discrete bandwidth must lie in [0,1]");
  }
}

}  // namespace

double EnrollmentSurface::predict(double e, double n, bool male) const {
  bool defined = false;
  const double value = nw_average(points, e, n, male, bandwidths, &defined);
  if (!defined) {
    throw NumericError("enrollment surface undefined at (" + csv::format_double(e) + ", " +
                       csv::format_double(n) + "): zero kernel mass");
  }
  return value;
}

std::vector<Bandwidths> default_bandwidth_grid(const std::vector<SurfacePoint>& points) {
  const double n = static_cast<double>(points.size());
  double mean_e = 0.0, mean_n = 0.0;
  for (const auto& p : points) {
    mean_e += p.e / n;
    mean_n += p.n / n;
  }
  double var_e = 0.0, var_n = 0.0;
  for (const auto& p : points) {
    var_e += (p.e - mean_e) * (p.e - mean_e) / n;
    var_n += (p.n - mean_n) * (p.n - mean_n) / n;
  }
  const double scale = std::pow(n, -1.0 / 6.0);
  const double ref_e = std::max(std::sqrt(var_e), 1e-8) * scale;
  const double ref_n = std::max(std::sqrt(var_n), 1e-8) * scale;
  std::vector<Bandwidths> grid;
  for (double fe : {0.5, 1.0, 2.0}) {
    for (double fn : {0.5, 1.0, 2.0}) {
      for (double hs : {0.1, 0.5, 1.0}) {
        grid.push_back({ref_e * fe, ref_n * fn, hs});
      }
    }
  }
  return grid;
}

EnrollmentSurface fit_enrollment_surface(const std::vector<SurfacePoint>& points,
                                         const std::vector<Bandwidths>& bandwidth_grid,
                                         std::uint64_t seed, std::size_t cv_folds) {
  if (points.size() < 10) {
    throw ValidationError("enrollment surface needs at least 10 points, got " +
                          std::to_string(points.size()));
  }
  if (bandwidth_grid.empty()) throw ValidationError("empty bandwidth grid");
  if (cv_folds == 1 || cv_folds > points.size()) {
    throw ValidationError("surface cv folds must be 0 (leave-one-out) or in [2, n]");
  }
  for (const auto& h : bandwidth_grid) check_bandwidths(h);

  // Fold id per point: its own index under leave-one-out, otherwise a
  // seeded shuffle into cv_folds blocks. Held-out fits exclude the fold.
  std::vector<std::uint32_t> fold(points.size());
  if (cv_folds == 0) {
    std::iota(fold.begin(), fold.end(), 0);
  } else {
    std::vector<std::uint32_t> perm(points.size());
    std::iota(perm.begin(), perm.end(), 0);
    auto rng = make_rng(seed, 0x737572 /* "sur" */);
    for (std::size_t j = 0; j + 1 < perm.size(); ++j) {
      const std::size_t pick = j + uniform_below(rng, perm.size() - j);
      std::swap(perm[j], perm[pick]);
    }
    for (std::size_t rank = 0; rank < perm.size(); ++rank) {
      fold[perm[rank]] = static_cast<std::uint32_t>(rank % cv_folds);
    }
  }

  EnrollmentSurface surface;
  surface.points = points;
  surface.grid = bandwidth_grid;
  surface.loo_sse.assign(bandwidth_grid.size(), std::numeric_limits<double>::quiet_NaN());

  std::size_t best = bandwidth_grid.size();
  for (std::size_t g = 0; g < bandwidth_grid.size(); ++g) {
    const Bandwidths& h = bandwidth_grid[g];
    double sse = 0.0;
    bool grid_defined = true;
    for (std::size_t i = 0; i < points.size() && grid_defined; ++i) {
      bool defined = false;
      const double fit = nw_average_heldout(points, fold, fold[i], points[i].e, points[i].n,
                                            points[i].male, h, &defined);
      if (!defined) {
        grid_defined = false;
        break;
      }
      const double err = points[i].y - fit;
      sse += err * err;
    }
    if (!grid_defined) continue;
    surface.loo_sse[g] = sse;
    if (best == bandwidth_grid.size() || sse < surface.loo_sse[best]) best = g;
  }
  if (best == bandwidth_grid.size()) {
    throw NumericError("every bandwidth candidate leaves the " +
                       std::string(cv_folds == 0 ? "leave-one-out" : "cross-validation") +
                       " fit undefined");
  }
  surface.bandwidths = bandwidth_grid[best];
  return surface;
}

GrantSpec::GrantSpec(std::map<int, double> by_age) : by_age_(std::move(by_age)) {
  for (const auto& [age, g] : by_age_) {
    if (!(g >= 0.0)) throw ValidationError("grants must be non-negative");
  }
}

GrantSpec GrantSpec::flat(double grant, int age_min, int age_max) {
  std::map<int, double> m;
  for (int a = age_min; a <= age_max; ++a) m[a] = grant;
  return GrantSpec(std::move(m));
}

bool GrantSpec::covers(int age) const { return by_age_.count(age) > 0; }

double GrantSpec::at(int age) const {
  auto it = by_age_.find(age);
  if (it == by_age_.end()) {
    throw ValidationError("grant spec does not cover age " + std::to_string(age));
  }
  return it->second;
}

GrantSpec load_grants(const std::string& path) {
  csv::Table t = csv::read_file(path);
  const std::size_t c_age = t.column("age");
  const std::size_t c_grant = t.column("annual_grant");
  std::map<int, double> by_age;
  for (const auto& row : t.rows) {
    by_age[static_cast<int>(csv::parse_int(row[c_age], path))] =
        csv::parse_double(row[c_grant], path);
  }
  return GrantSpec(std::move(by_age));
}

double sps_cate(const EnrollmentSurface& surface, const SpsUnitPoint& unit,
                const GrantSpec& grant) {
  const double g = grant.at(unit.age);
  return surface.predict(unit.e - g, unit.n + g, unit.male) -
         surface.predict(unit.e, unit.n, unit.male);
}

std::string level_code(double value) {
  const long long as_int = static_cast<long long>(value);
  if (static_cast<double>(as_int) == value) return std::to_string(as_int);
  return csv::format_double(value);
}

namespace {

std::string covariate_level(const CovariateView& w, const std::string& col) {
  if (col.empty()) return "";
  auto v = w.find(col);
  if (!v || w.is_missing(col)) return "";
  return level_code(*v);
}

}  // namespace

SpsUnitPoint sps_point(const WageModel& model, const CovariateView& w,
                       const std::vector<WorkerRecord>& workers, const std::string& unit_id,
                       const SpsSettings& settings) {
  SpsUnitPoint point;
  point.age = w.age;
  point.male = w.male;
  point.e = model
                .offer(w.age, w.male, covariate_level(w, settings.industry_col),
                       covariate_level(w, settings.locality_col),
                       covariate_level(w, settings.province_col))
                .value;
  const std::string hh = covariate_level(w, settings.household_col);
  double income = 0.0;
  for (const auto& member : workers) {
    if (member.household_id != hh || hh.empty()) continue;
    if (member.person_id == unit_id) continue;
    income += model
                  .offer(member.age, member.male, member.industry, member.locality,
                         member.province)
                  .value;
  }
  point.n = income;
  return point;
}

SpsModel fit_sps(const Dataset& target_predictor_half, const std::vector<WorkerRecord>& workers,
                 const GrantSpec& grant, const SpsSettings& settings, std::uint64_t seed) {
  if (target_predictor_half.role != DatasetRole::target_ex_ante) {
    throw ValidationError("fit_sps expects target ex-ante (status quo) data");
  }
  SpsModel model;
  model.settings = settings;
  model.grant = grant;
  model.wage = fit_wage_model(workers, settings.lambda_grid, settings.folds, seed,
                              settings.child_age_max);
  std::vector<SurfacePoint> points;
  for (const auto& u : target_predictor_half.units) {
    SpsUnitPoint p =
        sps_point(model.wage, target_predictor_half.covariates_of(u), workers, u.unit_id,
                  settings);
    points.push_back({p.e, p.n, u.male, u.outcome});
  }
  const std::vector<Bandwidths> grid =
      settings.bandwidth_grid.empty() ? default_bandwidth_grid(points) : settings.bandwidth_grid;
  model.surface = fit_enrollment_surface(points, grid, seed, settings.surface_cv_folds);
  return model;
}

double sps_predict_cate(const SpsModel& model, const CovariateView& w,
                        const std::vector<WorkerRecord>& workers, const std::string& unit_id) {
  SpsUnitPoint point = sps_point(model.wage, w, workers, unit_id, model.settings);
  return sps_cate(model.surface, point, model.grant);
}

TreatmentRule sps_rule(const SpsModel& model, const std::vector<WorkerRecord>& workers,
                       std::string label) {
  auto shared_model = std::make_shared<SpsModel>(model);
  auto shared_workers = std::make_shared<std::vector<WorkerRecord>>(workers);
  const std::string person_col = model.settings.household_col.empty() ? "" : "person_id";
  return make_plugin_rule(std::move(label), [shared_model, shared_workers,
                                             person_col](const CovariateView& w) {
    std::string unit_id;
    if (!person_col.empty()) {
      if (auto v = w.find(person_col)) unit_id = level_code(*v);
    }
    return sps_predict_cate(*shared_model, w, *shared_workers, unit_id);
  });
}

}  // namespace polieval
