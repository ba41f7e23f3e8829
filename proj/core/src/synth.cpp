#include "polieval/synth.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "polieval/csv.hpp"
#include "polieval/rng.hpp"

namespace polieval {

namespace {

double gaussian(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

void DgpSpec::validate() const {
  if (cells.empty()) throw ValidationError("dgp spec has no cells");
  double total = 0.0;
  for (const auto& c : cells) {
    if (!(c.prob >= 0.0)) throw ValidationError("cell probability must be >= 0");
    total += c.prob;
    if (c.extra.size() != extra_names.size()) {
      throw ValidationError("cell extra-covariate arity mismatch");
    }
    const double p = c.propensity.value_or(propensity);
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("propensity must be interior");
    if (binary_outcome) {
      if (!(c.baseline >= 0.0 && c.baseline <= 1.0) ||
          !(c.baseline + c.cate >= 0.0 && c.baseline + c.cate <= 1.0)) {
        throw ValidationError("binary-outcome means must lie in [0,1]");
      }
    }
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("cell probabilities must sum to 1, got " + std::to_string(total));
  }
  if (!binary_outcome && !(noise_sd >= 0.0)) throw ValidationError("noise sd must be >= 0");
}

double DgpSpec::cell_propensity(const DgpCell& c) const { return c.propensity.value_or(propensity); }

namespace {

std::size_t draw_cell(const DgpSpec& spec, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double cum = 0.0;
  for (std::size_t j = 0; j < spec.cells.size(); ++j) {
    cum += spec.cells[j].prob;
    if (u < cum) return j;
  }
  return spec.cells.size() - 1;
}

double draw_outcome(const DgpSpec& spec, double mean, std::mt19937_64& rng) {
  if (spec.binary_outcome) return uniform01(rng) < mean ? 1.0 : 0.0;
  return mean + spec.noise_sd * gaussian(rng);
}

UnitRecord make_unit(const DgpCell& cell, std::string id, const std::string& ctx) {
  UnitRecord u;
  u.unit_id = std::move(id);
  u.context_id = ctx;
  u.age = cell.age;
  u.male = cell.male;
  u.covariates = cell.extra;
  u.missing.assign(cell.extra.size(), 0);
  return u;
}

}  // namespace

SynthData generate(const DgpSpec& spec) {
  spec.validate();
  SynthData out;

  Context ref_ctx{"ref", false, {}, {0, 1}};
  Context tgt_sq_ctx{"tgt", true, {}, {0}};
  Context tgt_xp_ctx{"tgt", true, {}, {0, 1}};

  out.reference.role = DatasetRole::reference;
  out.reference.contexts = {ref_ctx};
  out.reference.covariate_names = spec.extra_names;

  out.target_ex_ante.role = DatasetRole::target_ex_ante;
  out.target_ex_ante.contexts = {tgt_sq_ctx};
  out.target_ex_ante.covariate_names = spec.extra_names;

  out.target_ex_post.role = DatasetRole::target_ex_post;
  out.target_ex_post.contexts = {tgt_xp_ctx};
  out.target_ex_post.covariate_names = spec.extra_names;

  // Independent substreams so each dataset is unaffected by the others' sizes.
  auto rng_ref = make_rng(spec.seed, 1);
  for (std::size_t i = 0; i < spec.n_reference; ++i) {
    const DgpCell& cell = spec.cells[draw_cell(spec, rng_ref)];
    UnitRecord u = make_unit(cell, "r" + std::to_string(i + 1), "ref");
    u.propensity = spec.cell_propensity(cell);
    u.treatment = uniform01(rng_ref) < u.propensity ? 1 : 0;
    u.outcome = draw_outcome(spec, cell.baseline + (u.treatment ? cell.cate : 0.0), rng_ref);
    out.reference.units.push_back(std::move(u));
  }

  auto rng_sq = make_rng(spec.seed, 2);
  for (std::size_t i = 0; i < spec.n_target_ex_ante; ++i) {
    const DgpCell& cell = spec.cells[draw_cell(spec, rng_sq)];
    UnitRecord u = make_unit(cell, "a" + std::to_string(i + 1), "tgt");
    u.propensity = spec.cell_propensity(cell);
    u.treatment = 0;
    u.outcome = draw_outcome(spec, cell.baseline, rng_sq);
    u.split_draw = uniform01(rng_sq);
    out.target_ex_ante.units.push_back(std::move(u));
  }

  auto rng_xp = make_rng(spec.seed, 3);
  for (std::size_t i = 0; i < spec.n_target_ex_post; ++i) {
    const DgpCell& cell = spec.cells[draw_cell(spec, rng_xp)];
    UnitRecord u = make_unit(cell, "p" + std::to_string(i + 1), "tgt");
    u.propensity = spec.cell_propensity(cell);
    u.treatment = uniform01(rng_xp) < u.propensity ? 1 : 0;
    u.outcome = draw_outcome(spec, cell.baseline + (u.treatment ? cell.cate : 0.0), rng_xp);
    out.target_ex_post.units.push_back(std::move(u));
  }

  out.reference.validate();
  out.target_ex_ante.validate();
  out.target_ex_post.validate();
  return out;
}

CovariateView cell_view(const DgpSpec& spec, const DgpCell& cell) {
  return CovariateView{cell.age, cell.male, cell.extra, {}, &spec.extra_names};
}

double true_adjusted_cate(const DgpSpec& spec, const DgpCell& cell, const CostSchedule& sched) {
  (void)spec;
  return (1.0 - sched.share_at(cell.age)) * (cell.baseline + cell.cate) - cell.baseline;
}

double true_contrast(const DgpSpec& spec, const TreatmentRule& rule_l,
                     const TreatmentRule& rule_m, const CostSchedule& sched) {
  spec.validate();
  double total = 0.0;
  for (const auto& cell : spec.cells) {
    CovariateView w = cell_view(spec, cell);
    const int diff = rule_l(w) - rule_m(w);
    if (diff != 0) {
      total += cell.prob * static_cast<double>(diff) * true_adjusted_cate(spec, cell, sched);
    }
  }
  return total;
}

TreatmentRule oracle_rule(const DgpSpec& spec, const CostSchedule& sched, std::string label) {
  struct CellDecision {
    int age;
    bool male;
    std::vector<double> extra;
    int treat;
  };
  auto table = std::make_shared<std::vector<CellDecision>>();
  for (const auto& cell : spec.cells) {
    table->push_back({cell.age, cell.male, cell.extra,
                      true_adjusted_cate(spec, cell, sched) >= 0.0 ? 1 : 0});
  }
  return TreatmentRule{std::move(label), [table](const CovariateView& w) -> int {
                         for (const auto& c : *table) {
                           if (c.age != w.age || c.male != w.male) continue;
                           bool match = c.extra.size() == w.values.size();
                           for (std::size_t j = 0; match && j < c.extra.size(); ++j) {
                             match = c.extra[j] == w.values[j];
                           }
                           if (match) return c.treat;
                         }
                         throw ValidationError("oracle rule: covariates off the dgp support");
                       }};
}

DgpSpec DgpSpec::from_config(const KeyValueConfig& cfg) {
  DgpSpec spec;
  spec.seed = cfg.get_seed("seed", 1);
  spec.propensity = cfg.get_double("propensity", 0.5);
  spec.n_reference = static_cast<std::size_t>(cfg.get_int("n_reference", 0));
  spec.n_target_ex_ante = static_cast<std::size_t>(cfg.get_int("n_target_ex_ante", 0));
  spec.n_target_ex_post = static_cast<std::size_t>(cfg.get_int("n_target_ex_post", 0));
  spec.binary_outcome = cfg.get_int("binary_outcome", 1) != 0;
  spec.noise_sd = cfg.get_double("noise_sd", 0.1);
  if (cfg.has("extra_names")) spec.extra_names = cfg.get_list("extra_names");

  // cell = age male prob baseline cate [p|. [extras...]]
  for (const auto& line : cfg.get_all("cell")) {
    auto tok = split_ws(line);
    const std::size_t want = spec.extra_names.empty() ? 5 : 6 + spec.extra_names.size();
    if (tok.size() != 5 && tok.size() != 6 && tok.size() != want) {
      throw ValidationError("dgp cell '" + line + "': expected age male prob baseline cate"
                            " [p|. [extras...]]");
    }
    DgpCell cell;
    cell.age = static_cast<int>(csv::parse_int(tok[0], "cell age"));
    cell.male = csv::parse_int(tok[1], "cell male") != 0;
    cell.prob = csv::parse_double(tok[2], "cell prob");
    cell.baseline = csv::parse_double(tok[3], "cell baseline");
    cell.cate = csv::parse_double(tok[4], "cell cate");
    if (tok.size() >= 6 && tok[5] != ".") {
      cell.propensity = csv::parse_double(tok[5], "cell propensity");
    }
    for (std::size_t j = 6; j < tok.size(); ++j) {
      cell.extra.push_back(csv::parse_double(tok[j], "cell extra"));
    }
    if (cell.extra.size() != spec.extra_names.size()) {
      throw ValidationError("dgp cell '" + line + "': expected " +
                            std::to_string(spec.extra_names.size()) + " extra covariates");
    }
    spec.cells.push_back(std::move(cell));
  }
  spec.validate();
  return spec;
}

KeyValueConfig DgpSpec::to_config() const {
  KeyValueConfig cfg;
  cfg.set("seed", std::to_string(seed));
  cfg.set("propensity", csv::format_double(propensity));
  cfg.set("n_reference", std::to_string(n_reference));
  cfg.set("n_target_ex_ante", std::to_string(n_target_ex_ante));
  cfg.set("n_target_ex_post", std::to_string(n_target_ex_post));
  cfg.set("binary_outcome", binary_outcome ? "1" : "0");
  cfg.set("noise_sd", csv::format_double(noise_sd));
  if (!extra_names.empty()) {
    std::string joined;
    for (std::size_t j = 0; j < extra_names.size(); ++j) {
      if (j) joined += ",";
      joined += extra_names[j];
    }
    cfg.set("extra_names", joined);
  }
  for (const auto& c : cells) {
    std::string line = std::to_string(c.age) + " " + (c.male ? "1" : "0") + " " +
                       csv::format_double(c.prob) + " " + csv::format_double(c.baseline) + " " +
                       csv::format_double(c.cate) + " " +
                       (c.propensity ? csv::format_double(*c.propensity) : std::string("."));
    for (double x : c.extra) line += " " + csv::format_double(x);
    cfg.set("cell", line);
  }
  return cfg;
}

DgpSpec DgpSpec::cct_fixture() {
  // Shaped on the reference experiment's age-sex profile: near-universal
  // enrollment among young children, steep decline and larger gains for teens.
  DgpSpec spec;
  spec.propensity = 0.5;
  spec.seed = 20240601;
  spec.n_reference = 20000;
  spec.n_target_ex_ante = 8000;
  spec.n_target_ex_post = 20000;
  const double boys_base[] = {0.91, 0.96, 0.96, 0.96, 0.96, 0.93, 0.86, 0.76, 0.60, 0.46, 0.32};
  const double boys_cate[] = {0.02, 0.00, 0.01, 0.02, 0.01, 0.03, 0.05, 0.07, 0.14, 0.07, 0.03};
  const double girls_base[] = {0.89, 0.95, 0.96, 0.95, 0.96, 0.92, 0.79, 0.68, 0.52, 0.35, 0.25};
  const double girls_cate[] = {0.01, 0.00, 0.00, 0.01, 0.00, 0.03, 0.09, 0.05, 0.13, 0.06, 0.07};
  const double share = 1.0 / 22.0;
  for (int j = 0; j < 11; ++j) {
    spec.cells.push_back({6 + j, true, {}, share, boys_base[j], boys_cate[j], std::nullopt});
    spec.cells.push_back({6 + j, false, {}, share, girls_base[j], girls_cate[j], std::nullopt});
  }
  return spec;
}

}  // namespace polieval
