#pragma once

#include <string>
#include <utility>

#include "polieval/types.hpp"

namespace polieval {

/// Annual transfer value as a share of kappa:
/// monthly_amount * months / fx_rate / kappa.
/// monthly_amount may be zero; the other arguments must be positive.
double transfer_share(double monthly_amount, double months, double fx_rate, double kappa);

/// Cost-adjusted outcome: treated units are scaled by (1 - g(age)),
/// untreated outcomes pass through unchanged.
double adjusted_outcome(double y, int treated, int age, const CostSchedule& sched);

/// Deterministic split of an all-control target pool on the stored split
/// draws. Units with split_draw <= threshold go to the predictor half.
/// threshold must lie in (0, 1].
std::pair<Dataset, Dataset> split_control(const Dataset& target_ex_ante_pool, double threshold);

/// Units CSV, header required:
///   unit_id,context_id,d,t,p,y,age,male,<covariate columns...>,u_split
/// Empty covariate cells are imputed to 0 with the missing flag set.
Dataset load_units(const std::string& path, DatasetRole role);
void save_units(const Dataset& data, const std::string& path);

/// Covariates-only roster CSV: unit_id,context_id,age,male,<covariate columns...>
CovariateTable load_covariate_table(const std::string& path);
void save_covariate_table(const CovariateTable& table, const std::string& path);

/// Cost schedule CSV: min_age,monthly_amount,months,fx_rate. Shares are
/// derived with transfer_share at the given kappa.
CostSchedule load_cost_schedule(const std::string& path, double kappa);

}  // namespace polieval
