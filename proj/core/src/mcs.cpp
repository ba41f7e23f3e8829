#include "polieval/mcs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "polieval/model.hpp"
#include "polieval/rng.hpp"

namespace polieval {

namespace {

// Effective studentized statistic for the range test. A zero-variance pair
// with a nonzero contrast is an exact difference: it rejects with certainty.
double z_for_test(const ContrastEstimate& e) {
  if (e.degenerate) {
    return std::copysign(std::numeric_limits<double>::infinity(), e.delta_hat);
  }
  return e.z;
}

struct PairScores {
  std::size_t l, m;
  double sqrt_var;                // sqrt(var_hat); 0 when degenerate or exact tie
  std::vector<double> unit_score; // per-unit contribution to delta_hat, mean zero
};

}  // namespace

bool McsResult::is_retained(const std::string& label) const {
  return std::find(retained.begin(), retained.end(), label) != retained.end();
}

McsResult model_confidence_set_assigned(const Dataset& expost,
                                        const std::vector<std::vector<int>>& assignments,
                                        const std::vector<std::string>& labels,
                                        const CostSchedule& sched, double alpha, std::size_t reps,
                                        std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
  const std::size_t k = labels.size();
  McsResult result;
  result.alpha = alpha;
  result.bootstrap_reps = reps;
  if (k == 0) throw ValidationError("model confidence set needs at least one rule");
  if (k == 1) {
    result.retained = labels;
    return result;
  }
  if (reps < 100) throw ValidationError("bootstrap reps must be >= 100");

  auto matrix = pairwise_matrix_assigned(expost, assignments, labels, sched);
  const std::size_t n = expost.units.size();
  const double sqrt_n = std::sqrt(static_cast<double>(n));

  // Per-pair unit-level score contributions. delta_hat = mean of
  // w1*(a - delta1)*N/W1 - w0*(c - delta0)*N/W0 over units, which is exactly
  // zero at the fitted arm means; resampling these recreates the sampling
  // variation of delta_hat under the equivalence null.
  double w1_total = 0.0, w0_total = 0.0;
  for (const auto& u : expost.units) {
    if (u.treatment == 1) w1_total += 1.0 / u.propensity;
    else w0_total += 1.0 / (1.0 - u.propensity);
  }
  std::vector<PairScores> pairs;
  for (std::size_t l = 0; l < k; ++l) {
    for (std::size_t m = l + 1; m < k; ++m) {
      PairScores p;
      p.l = l;
      p.m = m;
      const ContrastEstimate& e = matrix[l][m];
      p.sqrt_var = e.var_hat > 0.0 ? std::sqrt(e.var_hat) : 0.0;
      p.unit_score.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const UnitRecord& u = expost.units[i];
        const double diff = static_cast<double>(assignments[l][i] - assignments[m][i]);
        double s;
        if (u.treatment == 1) {
          const double a = diff * adjusted_outcome(u.outcome, 1, u.age, sched);
          s = (a - e.delta1) / u.propensity * (static_cast<double>(n) / w1_total);
        } else {
          const double c = diff * u.outcome;
          s = -(c - e.delta0) / (1.0 - u.propensity) * (static_cast<double>(n) / w0_total);
        }
        p.unit_score[i] = s;
      }
      pairs.push_back(std::move(p));
    }
  }

  // Bootstrap the studentized resampled means once; stage tests reuse them.
  std::vector<std::vector<double>> boot_z(reps, std::vector<double>(pairs.size(), 0.0));
  auto rng = make_rng(seed, 0x6d6373 /* "mcs" */);
  std::vector<std::uint32_t> idx(n);
  for (std::size_t b = 0; b < reps; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      idx[i] = static_cast<std::uint32_t>(uniform_below(rng, n));
    }
    for (std::size_t q = 0; q < pairs.size(); ++q) {
      if (pairs[q].sqrt_var == 0.0) continue;  // exact pair: no resampling noise
      double sum = 0.0;
      const auto& score = pairs[q].unit_score;
      for (std::size_t i = 0; i < n; ++i) sum += score[idx[i]];
      boot_z[b][q] = sqrt_n * (sum / static_cast<double>(n)) / pairs[q].sqrt_var;
    }
  }

  std::vector<char> active(k, 1);
  std::size_t n_active = k;
  while (true) {
    if (n_active == 1) break;
    double t_obs = 0.0;
    for (const auto& p : pairs) {
      if (!active[p.l] || !active[p.m]) continue;
      t_obs = std::max(t_obs, std::abs(z_for_test(matrix[p.l][p.m])));
    }
    std::size_t count_ge = 0;
    for (std::size_t b = 0; b < reps; ++b) {
      double t_star = 0.0;
      for (std::size_t q = 0; q < pairs.size(); ++q) {
        if (!active[pairs[q].l] || !active[pairs[q].m]) continue;
        t_star = std::max(t_star, std::abs(boot_z[b][q]));
      }
      if (t_star >= t_obs) ++count_ge;
    }
    const double p_value =
        static_cast<double>(1 + count_ge) / static_cast<double>(reps + 1);
    result.stage_p.push_back(p_value);
    if (p_value >= alpha) break;

    // Reject: drop the rule with the worst average studentized contrast.
    // Ties (including the exact delta = 0 case) remove the lexicographically
    // smaller label so elimination is reproducible.
    std::size_t worst = k;
    double worst_avg = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
      if (!active[r]) continue;
      double sum = 0.0;
      std::size_t cnt = 0;
      for (std::size_t s = 0; s < k; ++s) {
        if (s == r || !active[s]) continue;
        sum += z_for_test(matrix[r][s]);
        ++cnt;
      }
      double avg = sum / static_cast<double>(cnt);
      if (std::isnan(avg)) avg = -std::numeric_limits<double>::infinity();
      if (worst == k || avg < worst_avg || (avg == worst_avg && labels[r] < labels[worst])) {
        worst_avg = avg;
        worst = r;
      }
    }
    active[worst] = 0;
    --n_active;
    result.elimination_order.emplace_back(labels[worst], p_value);
  }

  for (std::size_t r = 0; r < k; ++r) {
    if (active[r]) result.retained.push_back(labels[r]);
  }
  return result;
}

McsResult model_confidence_set(const Dataset& expost, const std::vector<TreatmentRule>& rules,
                               const CostSchedule& sched, double alpha, std::size_t reps,
                               std::uint64_t seed) {
  std::vector<std::vector<int>> assignments;
  std::vector<std::string> labels;
  for (const auto& r : rules) {
    assignments.push_back(apply_rule(r, expost));
    labels.push_back(r.label);
  }
  return model_confidence_set_assigned(expost, assignments, labels, sched, alpha, reps, seed);
}

}  // namespace polieval
