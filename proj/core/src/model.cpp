#include "polieval/model.hpp"

#include <algorithm>
#include <map>

#include "polieval/csv.hpp"

namespace polieval {

double transfer_share(double monthly_amount, double months, double fx_rate, double kappa) {
  if (monthly_amount < 0.0) throw ValidationError("transfer amount must be non-negative");
  if (!(months > 0.0)) throw ValidationError("months must be positive");
  if (!(fx_rate > 0.0)) throw ValidationError("fx rate must be positive");
  if (!(kappa > 0.0)) throw ValidationError("kappa must be positive");
  return monthly_amount * months / fx_rate / kappa;
}

double adjusted_outcome(double y, int treated, int age, const CostSchedule& sched) {
  if (treated == 0) return y;
  return (1.0 - sched.share_at(age)) * y;
}

std::pair<Dataset, Dataset> split_control(const Dataset& pool, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ValidationError("split threshold must lie in (0,1]");
  }
  for (const auto& u : pool.units) {
    if (u.treatment != 0) {
      throw ValidationError("split_control expects an all-control pool; unit " + u.unit_id +
                            " is treated");
    }
  }
  Dataset predictor;
  Dataset holdout;
  predictor.role = holdout.role = pool.role;
  predictor.contexts = holdout.contexts = pool.contexts;
  predictor.covariate_names = holdout.covariate_names = pool.covariate_names;
  for (const auto& u : pool.units) {
    (u.split_draw <= threshold ? predictor : holdout).units.push_back(u);
  }
  return {std::move(predictor), std::move(holdout)};
}

namespace {

constexpr std::size_t kFixedLeading = 8;  // unit_id..male

void check_units_header(const csv::Table& t, const std::string& path) {
  const char* expected[kFixedLeading] = {"unit_id", "context_id", "d", "t",
                                         "p",       "y",          "age", "male"};
  if (t.header.size() < kFixedLeading + 1 || t.header.back() != "u_split") {
    throw IoError("'" + path + "': units header must be unit_id,context_id,d,t,p,y,age,male,"
                  "<covariates...>,u_split");
  }
  for (std::size_t j = 0; j < kFixedLeading; ++j) {
    if (t.header[j] != expected[j]) {
      throw IoError("'" + path + "': expected column '" + expected[j] + "' at position " +
                    std::to_string(j + 1) + ", got '" + t.header[j] + "'");
    }
  }
}

}  // namespace

Dataset load_units(const std::string& path, DatasetRole role) {
  csv::Table t = csv::read_file(path);
  check_units_header(t, path);

  Dataset data;
  data.role = role;
  for (std::size_t j = kFixedLeading; j + 1 < t.header.size(); ++j) {
    data.covariate_names.push_back(t.header[j]);
  }
  const std::size_t n_cov = data.covariate_names.size();

  std::map<std::string, Context> contexts;
  std::size_t lineno = 1;
  for (const auto& row : t.rows) {
    ++lineno;
    const std::string where = path + " line " + std::to_string(lineno);
    UnitRecord u;
    u.unit_id = row[0];
    u.context_id = row[1];
    int d = static_cast<int>(csv::parse_int(row[2], where + " column d"));
    u.treatment = static_cast<int>(csv::parse_int(row[3], where + " column t"));
    u.propensity = csv::parse_double(row[4], where + " column p");
    u.outcome = csv::parse_double(row[5], where + " column y");
    u.age = static_cast<int>(csv::parse_int(row[6], where + " column age"));
    u.male = csv::parse_int(row[7], where + " column male") != 0;
    u.split_draw = csv::parse_double(row.back(), where + " column u_split");

    if (!(u.propensity > 0.0 && u.propensity < 1.0)) {
      throw ValidationError(where + ": propensity " + row[4] +
                            " violates overlap (C2 requires p in (0,1))");
    }
    u.covariates.resize(n_cov, 0.0);
    u.missing.resize(n_cov, 0);
    for (std::size_t j = 0; j < n_cov; ++j) {
      const std::string& cell = row[kFixedLeading + j];
      if (cell.empty()) {
        u.missing[j] = 1;
      } else {
        u.covariates[j] = csv::parse_double(cell, where + " column " + data.covariate_names[j]);
      }
    }

    auto [it, inserted] = contexts.try_emplace(u.context_id);
    Context& c = it->second;
    if (inserted) {
      c.context_id = u.context_id;
      c.is_target = d != 0;
    } else if (c.is_target != (d != 0)) {
      throw ValidationError(where + ": context '" + u.context_id +
                            "' has inconsistent target flag d");
    }
    c.active_treatments.insert(u.treatment);
    data.units.push_back(std::move(u));
  }
  for (auto& [id, c] : contexts) data.contexts.push_back(std::move(c));
  data.validate();
  return data;
}

void save_units(const Dataset& data, const std::string& path) {
  csv::Writer w(path);
  std::vector<std::string> header = {"unit_id", "context_id", "d", "t", "p", "y", "age", "male"};
  header.insert(header.end(), data.covariate_names.begin(), data.covariate_names.end());
  header.push_back("u_split");
  w.row(header);
  for (const auto& u : data.units) {
    const Context& c = data.context_of(u);
    std::vector<std::string> row = {u.unit_id,
                                    u.context_id,
                                    c.is_target ? "1" : "0",
                                    std::to_string(u.treatment),
                                    csv::num(u.propensity),
                                    csv::num(u.outcome),
                                    csv::num(u.age),
                                    u.male ? "1" : "0"};
    for (std::size_t j = 0; j < u.covariates.size(); ++j) {
      row.push_back(u.missing[j] ? "" : csv::num(u.covariates[j]));
    }
    row.push_back(csv::num(u.split_draw));
    w.row(row);
  }
}

CovariateTable load_covariate_table(const std::string& path) {
  csv::Table t = csv::read_file(path);
  const char* expected[4] = {"unit_id", "context_id", "age", "male"};
  if (t.header.size() < 4) throw IoError("'" + path + "': covariate roster header too short");
  for (std::size_t j = 0; j < 4; ++j) {
    if (t.header[j] != expected[j]) {
      throw IoError("'" + path + "': expected column '" + expected[j] + "' at position " +
                    std::to_string(j + 1));
    }
  }
  CovariateTable table;
  for (std::size_t j = 4; j < t.header.size(); ++j) table.covariate_names.push_back(t.header[j]);
  const std::size_t n_cov = table.covariate_names.size();
  std::size_t lineno = 1;
  for (const auto& row : t.rows) {
    ++lineno;
    const std::string where = path + " line " + std::to_string(lineno);
    CovariateTable::Row r;
    r.unit_id = row[0];
    r.context_id = row[1];
    r.age = static_cast<int>(csv::parse_int(row[2], where + " column age"));
    r.male = csv::parse_int(row[3], where + " column male") != 0;
    r.values.resize(n_cov, 0.0);
    r.missing.resize(n_cov, 0);
    for (std::size_t j = 0; j < n_cov; ++j) {
      const std::string& cell = row[4 + j];
      if (cell.empty()) {
        r.missing[j] = 1;
      } else {
        r.values[j] = csv::parse_double(cell, where + " column " + table.covariate_names[j]);
      }
    }
    table.rows.push_back(std::move(r));
  }
  return table;
}

void save_covariate_table(const CovariateTable& table, const std::string& path) {
  csv::Writer w(path);
  std::vector<std::string> header = {"unit_id", "context_id", "age", "male"};
  header.insert(header.end(), table.covariate_names.begin(), table.covariate_names.end());
  w.row(header);
  for (const auto& r : table.rows) {
    std::vector<std::string> row = {r.unit_id, r.context_id, csv::num(r.age), r.male ? "1" : "0"};
    for (std::size_t j = 0; j < r.values.size(); ++j) {
      row.push_back(r.missing[j] ? "" : csv::num(r.values[j]));
    }
    w.row(row);
  }
}

CostSchedule load_cost_schedule(const std::string& path, double kappa) {
  csv::Table t = csv::read_file(path);
  std::size_t c_age = t.column("min_age");
  std::size_t c_amt = t.column("monthly_amount");
  std::size_t c_mon = t.column("months");
  std::size_t c_fx = t.column("fx_rate");
  std::vector<CostBracket> brackets;
  std::size_t lineno = 1;
  for (const auto& row : t.rows) {
    ++lineno;
    const std::string where = path + " line " + std::to_string(lineno);
    CostBracket b;
    b.min_age = static_cast<int>(csv::parse_int(row[c_age], where));
    b.share = transfer_share(csv::parse_double(row[c_amt], where),
                             csv::parse_double(row[c_mon], where),
                             csv::parse_double(row[c_fx], where), kappa);
    brackets.push_back(b);
  }
  return CostSchedule(kappa, std::move(brackets));
}

}  // namespace polieval
