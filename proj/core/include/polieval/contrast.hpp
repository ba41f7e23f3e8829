#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "polieval/types.hpp"

namespace polieval {

/// Deterministic treatment assignment rule pi(w) in {0,1}. Rules see
/// covariates only; they are evaluated as fixed functions at inference time.
struct TreatmentRule {
  std::string label;
  std::function<int(const CovariateView&)> assign;

  int operator()(const CovariateView& w) const;
};

/// Plug-in rule: treat exactly when the predicted cost-adjusted conditional
/// effect is >= 0 (ties treat).
TreatmentRule make_plugin_rule(std::string label,
                               std::function<double(const CovariateView&)> cate_predictor);

TreatmentRule treat_all_rule(std::string label = "treat_all");
TreatmentRule treat_none_rule(std::string label = "treat_none");

/// Normalized-IPW welfare contrast between two rules with its asymptotic
/// variance, z statistic and two-sided normal p-value.
struct ContrastEstimate {
  std::string label_l;
  std::string label_m;
  double delta_hat = 0.0;  // delta1 - delta0
  double delta1 = 0.0;     // treated-arm weighted mean of (pi_l - pi_m) * adjusted outcome
  double delta0 = 0.0;     // control-arm weighted mean of (pi_l - pi_m) * outcome
  double var_hat = 0.0;
  std::size_t n = 0;
  double z = 0.0;
  double p_value = 1.0;
  bool degenerate = false;  // var_hat == 0 with delta_hat != 0; z undefined
};

/// Contrast from precomputed per-unit assignments (aligned with expost.units).
ContrastEstimate estimate_contrast_assigned(const Dataset& expost, std::span<const int> assign_l,
                                            std::span<const int> assign_m,
                                            const CostSchedule& sched,
                                            const std::string& label_l,
                                            const std::string& label_m);

ContrastEstimate estimate_contrast(const Dataset& expost, const TreatmentRule& rule_l,
                                   const TreatmentRule& rule_m, const CostSchedule& sched);

std::vector<int> apply_rule(const TreatmentRule& rule, const Dataset& data);

/// All pairwise contrasts; entry (l,m) holds the contrast of rules[l] over
/// rules[m]. Antisymmetric in delta_hat with a zero diagonal.
std::vector<std::vector<ContrastEstimate>> pairwise_matrix(const Dataset& expost,
                                                           const std::vector<TreatmentRule>& rules,
                                                           const CostSchedule& sched);

std::vector<std::vector<ContrastEstimate>> pairwise_matrix_assigned(
    const Dataset& expost, const std::vector<std::vector<int>>& assignments,
    const std::vector<std::string>& labels, const CostSchedule& sched);

double two_sided_normal_p(double z);

}  // namespace polieval
