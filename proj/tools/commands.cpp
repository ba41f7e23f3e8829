#include "commands.hpp"

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>

#include "polieval/csv.hpp"
#include "polieval/dps.hpp"
#include "polieval/forest.hpp"
#include "polieval/mcs.hpp"
#include "polieval/model.hpp"
#include "polieval/rng.hpp"
#include "polieval/sps.hpp"
#include "polieval/stratified.hpp"
#include "polieval/synth.hpp"

namespace polieval::cli {

namespace fs = std::filesystem;

namespace {

void ensure_out_dir(const std::string& out) {
  if (out.empty()) throw ValidationError("--out directory is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory '" + out + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

CostSchedule schedule_or_flat(const std::string& schedule_path, double kappa,
                              const KeyValueConfig* cfg) {
  if (!schedule_path.empty()) return load_cost_schedule(schedule_path, kappa);
  if (cfg && cfg->has("schedule")) {
    return load_cost_schedule(cfg->get_string("schedule"), cfg->get_double("kappa", kappa));
  }
  return CostSchedule::flat(0.0, kappa);
}

std::vector<double> parse_double_list(const KeyValueConfig& cfg, const std::string& key,
                                      std::vector<double> fallback) {
  if (!cfg.has(key)) return fallback;
  std::vector<double> out;
  for (const auto& field : cfg.get_list(key)) {
    out.push_back(csv::parse_double(field, "config key '" + key + "'"));
  }
  return out;
}

struct MethodOutput {
  std::string label;
  std::vector<int> assignments;          // aligned with census rows
  std::vector<double> cates;             // empty for constant baselines
};

SpsSettings sps_settings_from(const KeyValueConfig& cfg) {
  SpsSettings s;
  s.lambda_grid = parse_double_list(cfg, "sps.lambda_grid", s.lambda_grid);
  s.folds = static_cast<std::size_t>(cfg.get_int("sps.folds", 5));
  s.surface_cv_folds = static_cast<std::size_t>(cfg.get_int("sps.surface_cv_folds", 0));
  s.household_col = cfg.get_string("sps.household_col", s.household_col);
  s.industry_col = cfg.get_string("sps.industry_col", s.industry_col);
  s.locality_col = cfg.get_string("sps.locality_col", s.locality_col);
  s.province_col = cfg.get_string("sps.province_col", s.province_col);
  s.child_age_max = static_cast<int>(cfg.get_int("sps.child_age_max", 17));
  return s;
}

DpsSettings dps_settings_from(const KeyValueConfig& cfg) {
  DpsSettings s;
  s.ed_col = cfg.get_string("dps.ed_col", s.ed_col);
  s.father_ed_col = cfg.get_string("dps.father_ed_col", s.father_ed_col);
  s.distance_col = cfg.get_string("dps.distance_col", s.distance_col);
  s.grid.min_age = static_cast<int>(cfg.get_int("dps.min_age", 6));
  s.grid.max_age = static_cast<int>(cfg.get_int("dps.max_age", 17));
  s.grid.terminal_age = s.grid.max_age + 1;
  s.grid.ed_max = static_cast<int>(cfg.get_int("dps.ed_max", 12));
  s.grid.primary_grades = static_cast<int>(cfg.get_int("dps.primary_grades", 6));
  s.grid.sec = static_cast<int>(cfg.get_int("dps.sec", 12));
  s.grid.behind_offset = static_cast<int>(cfg.get_int("dps.behind_offset", 6));
  s.fit.restarts = static_cast<std::size_t>(cfg.get_int("dps.restarts", 3));
  s.fit.max_iter = static_cast<std::size_t>(cfg.get_int("dps.max_iter", 2000));
  s.fit.polish_iter = static_cast<std::size_t>(cfg.get_int("dps.polish_iter", 200));
  return s;
}

ForestConfig forest_config_from(const KeyValueConfig& cfg, std::uint64_t seed) {
  ForestConfig f;
  f.n_trees = static_cast<std::size_t>(cfg.get_int("forest.n_trees", 2000));
  f.min_leaf = static_cast<std::size_t>(cfg.get_int("forest.min_leaf", 2));
  f.subsample_fraction = cfg.get_double("forest.subsample", 0.5);
  f.candidate_features_per_split = static_cast<std::size_t>(cfg.get_int("forest.mtry", 0));
  f.n_threads = static_cast<std::size_t>(cfg.get_int("forest.threads", 0));
  f.seed = seed;
  return f;
}

void write_importance(const ForestCateModel& model, const std::string& path) {
  ImportanceResult imp1 = variable_importance(model.treated);
  ImportanceResult imp0 = variable_importance(model.control);
  csv::Writer w(path);
  w.row({"feature", "importance_y1", "importance_y0"});
  for (std::size_t j = 0; j < model.treated.feature_names.size(); ++j) {
    w.row({model.treated.feature_names[j], csv::num(imp1.weights[j]), csv::num(imp0.weights[j])});
  }
}

void write_dps_reports(const DpsModel& model, const Dataset& predictor_half,
                       const std::string& out_dir) {
  {
    csv::Writer w(join(out_dir, "dps_params.csv"));
    w.row({"name", "value", "std_flag"});
    for (const auto& row : dps_param_report(model.params)) {
      w.row({row[0], row[1], row[2]});
    }
  }
  {
    csv::Writer w(join(out_dir, "dps_fit.csv"));
    w.row({"restart", "iter", "loglik"});
    for (const auto& row : model.fit.trace) {
      w.row({csv::num(row.restart), csv::num(row.iter), csv::num(row.loglik)});
    }
  }
  // Observed vs model-implied status-quo enrollment rates.
  struct Acc {
    double observed = 0.0;
    double predicted = 0.0;
    std::size_t n = 0;
  };
  std::map<int, Acc> by_age;
  std::map<int, Acc> by_ed;
  const std::vector<double> no_grant = zero_grant(model.settings.grid);
  for (const auto& u : predictor_half.units) {
    DpsObservation obs =
        dps_observation(predictor_half.covariates_of(u), u.outcome, model.settings, model.wages);
    DpsCell cell{obs.male, obs.father_ed, obs.distance, obs.wage_by_age};
    CellValues values = solve_dp(model.params, model.settings.grid, model.pass, cell, no_grant);
    const std::vector<double> weights =
        type_posterior(model.params, obs.age, obs.ed, obs.male, obs.father_ed);
    double p = 0.0;
    for (std::size_t k = 0; k < model.params.n_types(); ++k) {
      p += weights[k] * enroll_prob(values, model.settings.grid, k, obs.age, obs.ed);
    }
    for (auto* acc : {&by_age[obs.age], &by_ed[obs.ed]}) {
      acc->observed += u.outcome;
      acc->predicted += p;
      acc->n += 1;
    }
  }
  auto write_rates = [&](const std::map<int, Acc>& rates, const std::string& key,
                         const std::string& name) {
    csv::Writer w(join(out_dir, name));
    w.row({key, "observed_rate", "predicted_rate", "n"});
    for (const auto& [level, acc] : rates) {
      const double dn = static_cast<double>(acc.n);
      w.row({csv::num(level), csv::num(acc.observed / dn), csv::num(acc.predicted / dn),
             csv::num(acc.n)});
    }
  };
  write_rates(by_age, "age", "dps_fit_by_age.csv");
  write_rates(by_ed, "ed", "dps_fit_by_ed.csv");
}

}  // namespace

int cmd_simulate(const std::string& spec_path, const std::string& schedule_path, double kappa,
                 const CommonFlags& flags) {
  ensure_out_dir(flags.out_dir);
  KeyValueConfig cfg = KeyValueConfig::from_file(spec_path);
  DgpSpec spec = DgpSpec::from_config(cfg);
  if (flags.seed) spec.seed = *flags.seed;
  const CostSchedule sched = schedule_or_flat(schedule_path, kappa, &cfg);

  SynthData data = generate(spec);
  save_units(data.reference, join(flags.out_dir, "reference.csv"));
  save_units(data.target_ex_ante, join(flags.out_dir, "target_ex_ante.csv"));
  save_units(data.target_ex_post, join(flags.out_dir, "target_ex_post.csv"));

  CovariateTable census;
  census.covariate_names = spec.extra_names;
  for (const Dataset* d : {&data.target_ex_ante, &data.target_ex_post}) {
    for (const auto& u : d->units) {
      census.rows.push_back({u.unit_id, u.context_id, u.age, u.male, u.covariates, u.missing});
    }
  }
  save_covariate_table(census, join(flags.out_dir, "target_census.csv"));

  {
    csv::Writer w(join(flags.out_dir, "truth.csv"));
    std::vector<std::string> header = {"age", "male"};
    header.insert(header.end(), spec.extra_names.begin(), spec.extra_names.end());
    for (const char* c : {"prob", "baseline", "cate", "cate_adj"}) header.push_back(c);
    w.row(header);
    for (const auto& cell : spec.cells) {
      std::vector<std::string> row = {csv::num(cell.age), cell.male ? "1" : "0"};
      for (double x : cell.extra) row.push_back(csv::num(x));
      row.push_back(csv::num(cell.prob));
      row.push_back(csv::num(cell.baseline));
      row.push_back(csv::num(cell.cate));
      row.push_back(csv::num(true_adjusted_cate(spec, cell, sched)));
      w.row(row);
    }
  }
  std::cout << "simulate: wrote " << data.reference.units.size() << " reference, "
            << data.target_ex_ante.units.size() << " ex-ante and "
            << data.target_ex_post.units.size() << " ex-post units to " << flags.out_dir
            << "\n";
  return 0;
}

int cmd_recommend(const std::string& config_path, const CommonFlags& flags) {
  KeyValueConfig cfg = KeyValueConfig::from_file(config_path);
  const std::string out = !flags.out_dir.empty() ? flags.out_dir : cfg.get_string("out", "");
  ensure_out_dir(out);
  const std::uint64_t seed = flags.seed ? *flags.seed : cfg.get_seed("seed", 1);
  const double kappa = cfg.get_double("kappa", 1000.0);
  const CostSchedule sched = schedule_or_flat("", kappa, &cfg);

  Dataset reference = load_units(cfg.get_string("units_reference"), DatasetRole::reference);
  Dataset ex_ante_pool =
      load_units(cfg.get_string("units_target_ex_ante"), DatasetRole::target_ex_ante);
  CovariateTable census = load_covariate_table(cfg.get_string("target_census"));

  const double threshold = cfg.get_double("split_threshold", 0.5);
  auto [predictor_half, holdout_half] = split_control(ex_ante_pool, threshold);
  (void)holdout_half;  // the recommendation stage never touches the holdout

  std::vector<WorkerRecord> workers;
  if (cfg.has("workers")) workers = load_workers(cfg.get_string("workers"));
  GrantSpec grants;
  if (cfg.has("grants")) grants = load_grants(cfg.get_string("grants"));
  PassProbTable pass = cfg.has("pass_table")
                           ? PassProbTable::from_csv(cfg.get_string("pass_table"))
                           : PassProbTable::all_pass();

  const std::vector<std::string> methods = cfg.get_list("methods");
  if (methods.empty()) throw ValidationError("config must list at least one method");
  {
    std::set<std::string> seen;
    for (const auto& m : methods) {
      if (!seen.insert(m).second) throw ValidationError("duplicate method label '" + m + "'");
    }
  }

  // Every model method yields a per-unit effect predictor; the plug-in rule
  // treats exactly the units with a non-negative predicted adjusted effect.
  using CateFn = std::function<double(const CovariateTable::Row&)>;
  std::vector<MethodOutput> outputs;
  for (const auto& method : methods) {
    MethodOutput mo;
    mo.label = method;
    try {
      CateFn cate_fn;
      int constant_assign = -1;
      if (method == "strata") {
        auto table = std::make_shared<StrataTable>(fit_strata(reference, sched));
        table->save_csv(join(out, "strata_table.csv"));
        cate_fn = [table](const CovariateTable::Row& r) {
          return predict(*table, r.age, r.male);
        };
      } else if (method == "forest") {
        auto model = std::make_shared<ForestCateModel>(
            fit_forest_cate(reference, sched, forest_config_from(cfg, seed)));
        write_importance(*model, join(out, "forest_importance.csv"));
        if (census.covariate_names != model->covariate_names) {
          throw ValidationError("census covariates do not match the reference schema");
        }
        cate_fn = [model, &census](const CovariateTable::Row& r) {
          return predict_cate(model->treated, model->control,
                              build_feature_row(census.view(r)));
        };
      } else if (method == "sps") {
        if (workers.empty()) throw ValidationError("sps needs a workers file");
        auto model = std::make_shared<SpsModel>(
            fit_sps(predictor_half, workers, grants, sps_settings_from(cfg), seed));
        auto shared_workers = std::make_shared<std::vector<WorkerRecord>>(workers);
        cate_fn = [model, shared_workers, &census](const CovariateTable::Row& r) {
          return sps_predict_cate(*model, census.view(r), *shared_workers, r.unit_id);
        };
      } else if (method == "dps") {
        if (workers.empty()) throw ValidationError("dps needs a workers file");
        DpsSettings settings = dps_settings_from(cfg);
        const SpsSettings sps_settings = sps_settings_from(cfg);
        WageModel wage_model = fit_wage_model(workers, sps_settings.lambda_grid,
                                              sps_settings.folds, seed,
                                              sps_settings.child_age_max);
        WageProfileFn wages = wage_profile_from_model(wage_model, sps_settings, settings.grid);
        const std::size_t k_types = static_cast<std::size_t>(cfg.get_int("dps.types", 3));
        auto model = std::make_shared<DpsModel>(fit_dps(
            predictor_half, DpsParams::neutral(k_types), settings, pass, grants, wages, seed));
        write_dps_reports(*model, predictor_half, out);
        cate_fn = [model, &census](const CovariateTable::Row& r) {
          return dps_predict_cate(*model, census.view(r));
        };
      } else if (method == "treat_all") {
        constant_assign = 1;
      } else if (method == "treat_none") {
        constant_assign = 0;
      } else {
        throw ValidationError("unknown method '" + method + "'");
      }

      mo.assignments.reserve(census.rows.size());
      if (cate_fn) {
        mo.cates.reserve(census.rows.size());
        for (const auto& row : census.rows) {
          const double cate = cate_fn(row);
          if (std::isnan(cate)) throw NumericError("NaN effect prediction for " + row.unit_id);
          mo.cates.push_back(cate);
          mo.assignments.push_back(cate >= 0.0 ? 1 : 0);
        }
      } else {
        mo.assignments.assign(census.rows.size(), constant_assign);
      }
    } catch (const std::exception& e) {
      throw ValidationError("method '" + method + "' failed: " + e.what());
    }
    outputs.push_back(std::move(mo));
  }

  {
    csv::Writer w(join(out, "assignments.csv"));
    w.row({"unit_id", "method", "assign"});
    for (const auto& mo : outputs) {
      for (std::size_t i = 0; i < census.rows.size(); ++i) {
        w.row({census.rows[i].unit_id, mo.label, csv::num(mo.assignments[i])});
      }
    }
  }
  {
    csv::Writer w(join(out, "predictions.csv"));
    w.row({"unit_id", "method", "cate_hat"});
    for (const auto& mo : outputs) {
      if (mo.cates.empty()) continue;
      for (std::size_t i = 0; i < census.rows.size(); ++i) {
        w.row({census.rows[i].unit_id, mo.label, csv::num(mo.cates[i])});
      }
    }
  }
  std::cout << "recommend: wrote assignments for " << census.rows.size() << " units and "
            << outputs.size() << " methods to " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& config_path, const CommonFlags& flags) {
  KeyValueConfig cfg = KeyValueConfig::from_file(config_path);
  const std::string out = !flags.out_dir.empty() ? flags.out_dir : cfg.get_string("out", "");
  ensure_out_dir(out);
  const std::uint64_t seed = flags.seed ? *flags.seed : cfg.get_seed("seed", 1);
  const double alpha = flags.alpha ? *flags.alpha : cfg.get_double("alpha", 0.05);
  const std::size_t reps = static_cast<std::size_t>(
      flags.reps ? *flags.reps : cfg.get_int("bootstrap_reps", 1000));
  const double kappa = cfg.get_double("kappa", 1000.0);
  const CostSchedule sched = schedule_or_flat("", kappa, &cfg);

  Dataset expost = load_units(cfg.get_string("units_target_ex_post"), DatasetRole::target_ex_post);
  const std::string assignments_path =
      cfg.get_string("assignments", join(out, "assignments.csv"));
  csv::Table t = csv::read_file(assignments_path);
  const std::size_t c_id = t.column("unit_id");
  const std::size_t c_method = t.column("method");
  const std::size_t c_assign = t.column("assign");

  std::vector<std::string> labels;
  std::map<std::string, std::map<std::string, int>> by_method;
  for (const auto& row : t.rows) {
    auto [it, inserted] = by_method.try_emplace(row[c_method]);
    if (inserted) labels.push_back(row[c_method]);
    it->second[row[c_id]] = static_cast<int>(csv::parse_int(row[c_assign], assignments_path));
  }
  if (labels.size() < 2) throw ValidationError("evaluation needs at least 2 methods");

  std::vector<std::vector<int>> assignments;
  for (const auto& label : labels) {
    const auto& lookup = by_method[label];
    std::vector<int> a;
    a.reserve(expost.units.size());
    for (const auto& u : expost.units) {
      auto it = lookup.find(u.unit_id);
      if (it == lookup.end()) {
        throw ValidationError("method '" + label + "' has no rule for unit " + u.unit_id);
      }
      a.push_back(it->second);
    }
    assignments.push_back(std::move(a));
  }

  auto matrix = pairwise_matrix_assigned(expost, assignments, labels, sched);
  {
    csv::Writer w(join(out, "contrasts.csv"));
    w.row({"l", "m", "delta_hat", "delta1", "delta0", "var_hat", "n", "z", "p_value"});
    for (std::size_t l = 0; l < labels.size(); ++l) {
      for (std::size_t m = 0; m < labels.size(); ++m) {
        if (l == m) continue;
        const ContrastEstimate& e = matrix[l][m];
        w.row({e.label_l, e.label_m, csv::num(e.delta_hat), csv::num(e.delta1),
               csv::num(e.delta0), csv::num(e.var_hat), csv::num(e.n), csv::num(e.z),
               csv::num(e.p_value)});
      }
    }
  }

  McsResult mcs = model_confidence_set_assigned(expost, assignments, labels, sched, alpha, reps,
                                                seed);
  {
    csv::Writer w(join(out, "mcs.csv"));
    w.row({"label", "eliminated_at", "p_value", "retained"});
    std::map<std::string, std::pair<std::size_t, double>> eliminated;
    for (std::size_t j = 0; j < mcs.elimination_order.size(); ++j) {
      eliminated[mcs.elimination_order[j].first] = {j + 1, mcs.elimination_order[j].second};
    }
    const double final_p = mcs.stage_p.empty() ? 1.0 : mcs.stage_p.back();
    for (const auto& label : labels) {
      auto it = eliminated.find(label);
      if (it == eliminated.end()) {
        w.row({label, "", csv::num(final_p), "1"});
      } else {
        w.row({label, csv::num(it->second.first), csv::num(it->second.second), "0"});
      }
    }
  }

  // Console summary: treatment shares per method, then pairwise contrasts.
  std::cout << "method            share_treated  in_mcs\n";
  for (std::size_t l = 0; l < labels.size(); ++l) {
    double share = 0.0;
    for (int a : assignments[l]) share += a;
    share /= static_cast<double>(assignments[l].size());
    std::cout << std::left << std::setw(18) << labels[l] << std::setw(15) << std::setprecision(4)
              << share << (mcs.is_retained(labels[l]) ? "yes" : "no") << "\n";
  }
  std::cout << "\npair (l vs m)                      delta        SE         z        p\n";
  for (std::size_t l = 0; l < labels.size(); ++l) {
    for (std::size_t m = l + 1; m < labels.size(); ++m) {
      const ContrastEstimate& e = matrix[l][m];
      const double se = std::sqrt(e.var_hat / static_cast<double>(e.n));
      std::cout << std::left << std::setw(34) << (e.label_l + " vs " + e.label_m) << std::right
                << std::setw(9) << std::setprecision(4) << e.delta_hat << std::setw(10) << se
                << std::setw(10) << e.z << std::setw(9) << e.p_value << "\n";
    }
  }
  return 0;
}

int cmd_montecarlo(const std::string& spec_path, long long reps, long long n,
                   const std::string& schedule_path, double kappa, const std::string& rule_l,
                   const std::string& rule_m, const CommonFlags& flags) {
  if (reps < 100) throw ValidationError("montecarlo needs at least 100 reps");
  if (n < 4) throw ValidationError("montecarlo needs n >= 4");
  ensure_out_dir(flags.out_dir);
  KeyValueConfig cfg = KeyValueConfig::from_file(spec_path);
  DgpSpec spec = DgpSpec::from_config(cfg);
  const CostSchedule sched = schedule_or_flat(schedule_path, kappa, &cfg);
  const std::uint64_t base_seed = flags.seed ? *flags.seed : spec.seed;

  auto named_rule = [&](const std::string& name) -> TreatmentRule {
    if (name == "oracle") return oracle_rule(spec, sched);
    if (name == "treat_all") return treat_all_rule();
    if (name == "treat_none") return treat_none_rule();
    throw ValidationError("unknown rule '" + name + "' (oracle, treat_all, treat_none)");
  };
  const TreatmentRule rl = named_rule(rule_l);
  const TreatmentRule rm = named_rule(rule_m);
  const double truth = true_contrast(spec, rl, rm, sched);
  constexpr double z975 = 1.959963984540054;

  csv::Writer w(join(flags.out_dir, "mc_reps.csv"));
  w.row({"rep", "delta_hat", "se", "covers"});
  std::size_t n_covered = 0;
  std::size_t n_degenerate = 0;
  std::vector<double> ses;
  double sum_delta = 0.0;
  DgpSpec rep_spec = spec;
  rep_spec.n_reference = 0;
  rep_spec.n_target_ex_ante = 0;
  rep_spec.n_target_ex_post = static_cast<std::size_t>(n);
  for (long long r = 0; r < reps; ++r) {
    rep_spec.seed = mix_seed(base_seed, static_cast<std::uint64_t>(r));
    SynthData data = generate(rep_spec);
    ContrastEstimate est = estimate_contrast(data.target_ex_post, rl, rm, sched);
    sum_delta += est.delta_hat;
    if (est.var_hat > 0.0) {
      const double se = std::sqrt(est.var_hat / static_cast<double>(est.n));
      const bool covers = std::abs(est.delta_hat - truth) <= z975 * se;
      n_covered += covers ? 1 : 0;
      ses.push_back(se);
      w.row({csv::num(r), csv::num(est.delta_hat), csv::num(se), covers ? "1" : "0"});
    } else {
      ++n_degenerate;
      w.row({csv::num(r), csv::num(est.delta_hat), csv::num(0.0), "NA"});
    }
  }

  const std::size_t informative = static_cast<std::size_t>(reps) - n_degenerate;
  double median_se = 0.0;
  if (!ses.empty()) {
    std::sort(ses.begin(), ses.end());
    median_se = ses[ses.size() / 2];
  }
  {
    csv::Writer s(join(flags.out_dir, "mc_summary.csv"));
    s.row({"reps", "n", "truth", "coverage", "n_degenerate", "median_se", "mean_delta"});
    s.row({csv::num(reps), csv::num(n), csv::num(truth),
           informative > 0 ? csv::num(static_cast<double>(n_covered) /
                                      static_cast<double>(informative))
                           : std::string("NA"),
           csv::num(static_cast<long long>(n_degenerate)), csv::num(median_se),
           csv::num(sum_delta / static_cast<double>(reps))});
  }
  std::cout << "montecarlo: truth=" << truth << " coverage="
            << (informative > 0
                    ? std::to_string(static_cast<double>(n_covered) /
                                     static_cast<double>(informative))
                    : "NA (degenerate)")
            << " median_se=" << median_se << "\n";
  if (n_degenerate > 0) {
    std::cout << "montecarlo: " << n_degenerate
              << " replications had zero variance (identical rules?); coverage flagged\n";
  }
  return 0;
}

}  // namespace polieval::cli
