#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "polieval/config.hpp"
#include "polieval/contrast.hpp"
#include "polieval/types.hpp"

namespace polieval {

/// One support point of the covariate law with its potential-outcome means.
struct DgpCell {
  int age = 0;
  bool male = false;
  std::vector<double> extra;
  double prob = 0.0;      // P(cell)
  double baseline = 0.0;  // E[Y0 | cell]
  double cate = 0.0;      // E[Y1 - Y0 | cell]
  std::optional<double> propensity;  // overrides the spec-level propensity
};

/// Finite-support data generating process. Outcomes are Bernoulli in binary
/// mode, otherwise mean + Gaussian noise. Conditions C1-C3 hold by
/// construction: treatment is independent Bernoulli(p(cell)) given the cell.
struct DgpSpec {
  std::vector<std::string> extra_names;
  std::vector<DgpCell> cells;
  double propensity = 0.5;
  std::size_t n_reference = 0;
  std::size_t n_target_ex_ante = 0;
  std::size_t n_target_ex_post = 0;
  std::uint64_t seed = 1;
  bool binary_outcome = true;
  double noise_sd = 0.1;  // continuous mode only

  void validate() const;

  double cell_propensity(const DgpCell& c) const;

  static DgpSpec from_config(const KeyValueConfig& cfg);
  KeyValueConfig to_config() const;

  /// Canned fixture: ages 6-16 by sex, near-universal enrollment for young
  /// children and a steep drop plus positive effects for teens.
  static DgpSpec cct_fixture();
};

struct SynthData {
  Dataset reference;
  Dataset target_ex_ante;
  Dataset target_ex_post;
};

SynthData generate(const DgpSpec& spec);

/// The exact welfare contrast under the known law: enumeration of
/// P(cell) * (pi_l - pi_m)(cell) * [ (1-g(age)) E[Y1|cell] - E[Y0|cell] ].
double true_contrast(const DgpSpec& spec, const TreatmentRule& rule_l,
                     const TreatmentRule& rule_m, const CostSchedule& sched);

/// Cost-adjusted conditional effect of one cell.
double true_adjusted_cate(const DgpSpec& spec, const DgpCell& cell, const CostSchedule& sched);

/// Rule that treats exactly the cells whose true adjusted effect is >= 0.
TreatmentRule oracle_rule(const DgpSpec& spec, const CostSchedule& sched,
                          std::string label = "oracle");

/// Covariate view over one cell (for evaluating rules in enumeration).
CovariateView cell_view(const DgpSpec& spec, const DgpCell& cell);

}  // namespace polieval
