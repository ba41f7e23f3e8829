#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polieval/errors.hpp"

namespace polieval {

enum class DatasetRole { reference, target_ex_ante, target_ex_post };

std::string to_string(DatasetRole role);
DatasetRole role_from_string(const std::string& s);

/// A study site. Target contexts hold only the status-quo treatment before
/// their experiment runs.
struct Context {
  std::string context_id;
  bool is_target = false;
  std::vector<double> attributes;
  std::set<int> active_treatments;
};

/// One individual. Covariate values are aligned with the owning dataset's
/// covariate_names; missing[j] == 1 means values[j] was imputed (as 0).
struct UnitRecord {
  std::string unit_id;
  std::string context_id;
  int treatment = 0;
  double propensity = 0.5;
  double outcome = 0.0;
  int age = 0;
  bool male = false;
  std::vector<double> covariates;
  std::vector<std::uint8_t> missing;
  double split_draw = 0.0;
};

/// The slice of a unit a treatment rule may condition on: covariates only,
/// never treatment, outcome or propensity.
struct CovariateView {
  int age = 0;
  bool male = false;
  std::span<const double> values;
  std::span<const std::uint8_t> missing;
  const std::vector<std::string>* names = nullptr;

  std::optional<double> find(std::string_view name) const;
  double value_of(std::string_view name) const;  // throws ValidationError when unknown
  bool is_missing(std::string_view name) const;
};

struct CostBracket {
  int min_age = 0;
  double share = 0.0;  // annual transfer value / kappa
};

/// Cost-effectiveness schedule: kappa plus age-bracketed transfer shares
/// g(age). Brackets are closed below and open above; the last bracket is
/// unbounded above. Ages below the first bracket are uncovered.
class CostSchedule {
 public:
  CostSchedule(double kappa, std::vector<CostBracket> brackets);

  static CostSchedule flat(double share, double kappa = 1.0);

  double kappa() const { return kappa_; }
  const std::vector<CostBracket>& brackets() const { return brackets_; }

  bool covers(int age) const;
  double share_at(int age) const;  // g(age); throws ValidationError when uncovered

 private:
  double kappa_ = 1.0;
  std::vector<CostBracket> brackets_;
};

struct Dataset {
  DatasetRole role = DatasetRole::reference;
  std::vector<Context> contexts;
  std::vector<std::string> covariate_names;
  std::vector<UnitRecord> units;

  CovariateView covariates_of(const UnitRecord& u) const;
  const Context& context_of(const UnitRecord& u) const;

  // Role invariants, context resolution, interior propensities, covariate
  // vector lengths. Throws ValidationError on the first violation.
  void validate() const;
};

/// Covariates-only roster (no treatment, outcome or propensity columns).
/// This is what the recommendation stage sees for the full target sample.
struct CovariateTable {
  struct Row {
    std::string unit_id;
    std::string context_id;
    int age = 0;
    bool male = false;
    std::vector<double> values;
    std::vector<std::uint8_t> missing;
  };

  std::vector<std::string> covariate_names;
  std::vector<Row> rows;

  CovariateView view(const Row& r) const;
};

}  // namespace polieval
