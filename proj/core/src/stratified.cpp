#include "polieval/stratified.hpp"

#include <memory>

#include "polieval/csv.hpp"
#include "polieval/model.hpp"

namespace polieval {

namespace {

std::string cell_name(int age, bool male) {
  return "(age=" + std::to_string(age) + ", " + (male ? "male" : "female") + ")";
}

}  // namespace

bool StrataTable::covers(int age, bool male) const {
  return cells_.find({age, male}) != cells_.end();
}

const StrataCell& StrataTable::cell(int age, bool male) const {
  auto it = cells_.find({age, male});
  if (it == cells_.end()) {
    throw ValidationError("strata table does not cover cell " + cell_name(age, male));
  }
  return it->second;
}

StrataTable fit_strata(const Dataset& reference, const CostSchedule& sched) {
  if (reference.role != DatasetRole::reference) {
    throw ValidationError("fit_strata expects reference data, got " + to_string(reference.role));
  }
  struct Acc {
    double sum1 = 0.0, sum0 = 0.0;
    std::size_t n1 = 0, n0 = 0;
  };
  std::map<StrataTable::Key, Acc> acc;
  for (const auto& u : reference.units) {
    Acc& a = acc[{u.age, u.male}];
    if (u.treatment == 1) {
      a.sum1 += adjusted_outcome(u.outcome, 1, u.age, sched);
      a.n1 += 1;
    } else {
      a.sum0 += u.outcome;
      a.n0 += 1;
    }
  }
  StrataTable table;
  for (const auto& [key, a] : acc) {
    if (a.n1 == 0 || a.n0 == 0) {
      throw ValidationError("strata cell " + cell_name(key.first, key.second) +
                            " lacks a " + (a.n1 == 0 ? "treated" : "control") + " arm");
    }
    StrataCell cell;
    cell.mean_treated_adj = a.sum1 / static_cast<double>(a.n1);
    cell.mean_control = a.sum0 / static_cast<double>(a.n0);
    cell.cate_adj = cell.mean_treated_adj - cell.mean_control;
    cell.n_treated = a.n1;
    cell.n_control = a.n0;
    table.cells_[key] = cell;
  }
  return table;
}

double predict(const StrataTable& table, int age, bool male) {
  return table.cell(age, male).cate_adj;
}

double predict(const StrataTable& table, const UnitRecord& unit) {
  return predict(table, unit.age, unit.male);
}

TreatmentRule strata_rule(const StrataTable& table, std::string label) {
  auto shared = std::make_shared<StrataTable>(table);
  return make_plugin_rule(std::move(label), [shared](const CovariateView& w) {
    return predict(*shared, w.age, w.male);
  });
}

void StrataTable::save_csv(const std::string& path) const {
  csv::Writer w(path);
  w.row({"age", "male", "mean_treated_adj", "mean_control", "cate_adj", "n1", "n0"});
  for (const auto& [key, c] : cells_) {
    w.row({csv::num(key.first), key.second ? "1" : "0", csv::num(c.mean_treated_adj),
           csv::num(c.mean_control), csv::num(c.cate_adj), csv::num(c.n_treated),
           csv::num(c.n_control)});
  }
}

StrataTable StrataTable::load_csv(const std::string& path) {
  csv::Table t = csv::read_file(path);
  const std::size_t c_age = t.column("age");
  const std::size_t c_male = t.column("male");
  const std::size_t c_m1 = t.column("mean_treated_adj");
  const std::size_t c_m0 = t.column("mean_control");
  const std::size_t c_cate = t.column("cate_adj");
  const std::size_t c_n1 = t.column("n1");
  const std::size_t c_n0 = t.column("n0");
  StrataTable table;
  for (const auto& row : t.rows) {
    StrataCell cell;
    const int age = static_cast<int>(csv::parse_int(row[c_age], path));
    const bool male = csv::parse_int(row[c_male], path) != 0;
    cell.mean_treated_adj = csv::parse_double(row[c_m1], path);
    cell.mean_control = csv::parse_double(row[c_m0], path);
    cell.cate_adj = csv::parse_double(row[c_cate], path);
    cell.n_treated = static_cast<std::size_t>(csv::parse_int(row[c_n1], path));
    cell.n_control = static_cast<std::size_t>(csv::parse_int(row[c_n0], path));
    table.cells_[{age, male}] = cell;
  }
  return table;
}

}  // namespace polieval
