#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "polieval/contrast.hpp"

namespace polieval {

/// Result of the sequential equivalence-testing elimination. Rules are
/// removed while the max absolute studentized pairwise contrast rejects at
/// level alpha; the surviving set is reported with the recorded p-values.
struct McsResult {
  std::vector<std::string> retained;                          // in input order
  std::vector<std::pair<std::string, double>> elimination_order;  // (label, p at removal)
  std::vector<double> stage_p;                                // p of every test, in order
  double alpha = 0.05;
  std::size_t bootstrap_reps = 0;

  bool is_retained(const std::string& label) const;
};

McsResult model_confidence_set(const Dataset& expost, const std::vector<TreatmentRule>& rules,
                               const CostSchedule& sched, double alpha, std::size_t reps,
                               std::uint64_t seed);

McsResult model_confidence_set_assigned(const Dataset& expost,
                                        const std::vector<std::vector<int>>& assignments,
                                        const std::vector<std::string>& labels,
                                        const CostSchedule& sched, double alpha, std::size_t reps,
                                        std::uint64_t seed);

}  // namespace polieval
