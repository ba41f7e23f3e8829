#include "polieval/contrast.hpp"

#include <cmath>
#include <limits>

#include "polieval/model.hpp"

namespace polieval {

int TreatmentRule::operator()(const CovariateView& w) const {
  if (!assign) throw ValidationError("rule '" + label + "' has no assignment function");
  int a = assign(w);
  if (a != 0 && a != 1) {
    throw ValidationError("rule '" + label + "' returned " + std::to_string(a) +
                          "; assignments must be 0 or 1");
  }
  return a;
}

TreatmentRule make_plugin_rule(std::string label,
                               std::function<double(const CovariateView&)> cate_predictor) {
  return TreatmentRule{
      std::move(label),
      [pred = std::move(cate_predictor)](const CovariateView& w) -> int {
        double cate = pred(w);
        if (std::isnan(cate)) throw NumericError("cate predictor returned NaN");
        return cate >= 0.0 ? 1 : 0;
      }};
}

TreatmentRule treat_all_rule(std::string label) {
  return TreatmentRule{std::move(label), [](const CovariateView&) { return 1; }};
}

TreatmentRule treat_none_rule(std::string label) {
  return TreatmentRule{std::move(label), [](const CovariateView&) { return 0; }};
}

double two_sided_normal_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

ContrastEstimate estimate_contrast_assigned(const Dataset& expost, std::span<const int> assign_l,
                                            std::span<const int> assign_m,
                                            const CostSchedule& sched,
                                            const std::string& label_l,
                                            const std::string& label_m) {
  if (expost.role != DatasetRole::target_ex_post) {
    throw ValidationError("ex-post inference requires a target_ex_post dataset, got " +
                          to_string(expost.role));
  }
  const std::size_t n = expost.units.size();
  if (assign_l.size() != n || assign_m.size() != n) {
    throw ValidationError("assignment vectors must align with the ex-post units");
  }
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  for (const auto& u : expost.units) {
    if (!(u.propensity > 0.0 && u.propensity < 1.0)) {
      throw ValidationError("unit " + u.unit_id + ": propensity outside (0,1)");
    }
    if (!std::isfinite(u.outcome)) {
      throw ValidationError("unit " + u.unit_id + ": outcome is not observed/finite");
    }
    (u.treatment == 1 ? n_treated : n_control) += 1;
  }
  if (n_treated < 2 || n_control < 2) {
    throw ValidationError("ex-post inference needs at least 2 units per arm (treated=" +
                          std::to_string(n_treated) + ", control=" + std::to_string(n_control) +
                          ")");
  }

  // First pass: normalized-weight arm means of the rule-difference outcomes.
  double w1_sum = 0.0, w0_sum = 0.0;
  double num1 = 0.0, num0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const UnitRecord& u = expost.units[i];
    const double diff = static_cast<double>(assign_l[i] - assign_m[i]);
    if (u.treatment == 1) {
      const double w = 1.0 / u.propensity;
      w1_sum += w;
      num1 += w * diff * adjusted_outcome(u.outcome, 1, u.age, sched);
    } else {
      const double w = 1.0 / (1.0 - u.propensity);
      w0_sum += w;
      num0 += w * diff * u.outcome;
    }
  }
  ContrastEstimate est;
  est.label_l = label_l;
  est.label_m = label_m;
  est.n = n;
  est.delta1 = num1 / w1_sum;
  est.delta0 = num0 / w0_sum;
  est.delta_hat = est.delta1 - est.delta0;

  // Second pass: the variance estimator of the asymptotic normal limit.
  double v1 = 0.0, v0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const UnitRecord& u = expost.units[i];
    const double diff = static_cast<double>(assign_l[i] - assign_m[i]);
    if (u.treatment == 1) {
      const double dev = diff * adjusted_outcome(u.outcome, 1, u.age, sched) - est.delta1;
      v1 += dev * dev / (u.propensity * u.propensity);
    } else {
      const double q = 1.0 - u.propensity;
      const double dev = diff * u.outcome - est.delta0;
      v0 += dev * dev / (q * q);
    }
  }
  est.var_hat = v1 / w1_sum + v0 / w0_sum;

  if (est.var_hat > 0.0) {
    est.z = std::sqrt(static_cast<double>(n)) * est.delta_hat / std::sqrt(est.var_hat);
    est.p_value = two_sided_normal_p(est.z);
  } else if (est.delta_hat == 0.0) {
    est.z = 0.0;
    est.p_value = 1.0;
  } else {
    est.degenerate = true;
    est.z = std::numeric_limits<double>::quiet_NaN();
    est.p_value = std::numeric_limits<double>::quiet_NaN();
  }
  return est;
}

std::vector<int> apply_rule(const TreatmentRule& rule, const Dataset& data) {
  std::vector<int> out;
  out.reserve(data.units.size());
  for (const auto& u : data.units) {
    try {
      out.push_back(rule(data.covariates_of(u)));
    } catch (const std::exception& e) {
      throw ValidationError("rule '" + rule.label + "' failed on unit " + u.unit_id + ": " +
                            e.what());
    }
  }
  return out;
}

ContrastEstimate estimate_contrast(const Dataset& expost, const TreatmentRule& rule_l,
                                   const TreatmentRule& rule_m, const CostSchedule& sched) {
  std::vector<int> al = apply_rule(rule_l, expost);
  std::vector<int> am = apply_rule(rule_m, expost);
  return estimate_contrast_assigned(expost, al, am, sched, rule_l.label, rule_m.label);
}

std::vector<std::vector<ContrastEstimate>> pairwise_matrix_assigned(
    const Dataset& expost, const std::vector<std::vector<int>>& assignments,
    const std::vector<std::string>& labels, const CostSchedule& sched) {
  const std::size_t k = assignments.size();
  if (k < 2) throw ValidationError("pairwise comparison needs at least 2 rules");
  if (labels.size() != k) throw ValidationError("label/assignment count mismatch");
  std::vector<std::vector<ContrastEstimate>> matrix(k, std::vector<ContrastEstimate>(k));
  for (std::size_t l = 0; l < k; ++l) {
    for (std::size_t m = 0; m < k; ++m) {
      if (l == m) {
        ContrastEstimate& e = matrix[l][m];
        e.label_l = e.label_m = labels[l];
        e.n = expost.units.size();
        continue;
      }
      matrix[l][m] = estimate_contrast_assigned(expost, assignments[l], assignments[m], sched,
                                                labels[l], labels[m]);
    }
  }
  return matrix;
}

std::vector<std::vector<ContrastEstimate>> pairwise_matrix(const Dataset& expost,
                                                           const std::vector<TreatmentRule>& rules,
                                                           const CostSchedule& sched) {
  std::vector<std::vector<int>> assignments;
  std::vector<std::string> labels;
  assignments.reserve(rules.size());
  for (const auto& r : rules) {
    assignments.push_back(apply_rule(r, expost));
    labels.push_back(r.label);
  }
  return pairwise_matrix_assigned(expost, assignments, labels, sched);
}

}  // namespace polieval
