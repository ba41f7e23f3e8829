#pragma once

#include <map>
#include <string>

#include "polieval/contrast.hpp"
#include "polieval/types.hpp"

namespace polieval {

struct StrataCell {
  double mean_treated_adj = 0.0;
  double mean_control = 0.0;
  double cate_adj = 0.0;  // mean_treated_adj - mean_control
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
};

/// Per-(age, sex) arm means of the cost-adjusted outcome in the reference
/// context. Cells are exact integer-age matches; no pooling or smoothing.
class StrataTable {
 public:
  using Key = std::pair<int, bool>;  // (age, male)

  bool covers(int age, bool male) const;
  const StrataCell& cell(int age, bool male) const;  // throws on uncovered cells

  const std::map<Key, StrataCell>& cells() const { return cells_; }

  void save_csv(const std::string& path) const;
  static StrataTable load_csv(const std::string& path);

  friend StrataTable fit_strata(const Dataset& reference, const CostSchedule& sched);

 private:
  std::map<Key, StrataCell> cells_;
};

/// Arm means per observed (age, male) cell; every cell present in the data
/// must contain both arms, otherwise the offending cell is reported.
StrataTable fit_strata(const Dataset& reference, const CostSchedule& sched);

/// The cell's adjusted conditional effect for this unit's (age, male).
double predict(const StrataTable& table, const UnitRecord& unit);
double predict(const StrataTable& table, int age, bool male);

/// Plug-in rule over the fitted table.
TreatmentRule strata_rule(const StrataTable& table, std::string label = "strata");

}  // namespace polieval
