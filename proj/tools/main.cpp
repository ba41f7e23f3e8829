#include <CLI11.hpp>
#include <cstdint>
#include <iostream>

#include "commands.hpp"
#include "polieval/errors.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cost-adjusted treatment rules from counterfactual predictions,"
               " evaluated ex post against experimental data"};
  app.require_subcommand(1);

  polieval::cli::CommonFlags flags;
  long long seed_flag = -1;
  double alpha_flag = -1.0;
  long long reps_flag = -1;

  std::string spec_path, config_path, schedule_path;
  double kappa = 1000.0;
  long long mc_reps = 1000;
  long long mc_n = 2000;
  std::string rule_l = "oracle";
  std::string rule_m = "treat_all";

  auto add_common = [&](CLI::App* cmd, bool out_required) {
    auto* out = cmd->add_option("--out", flags.out_dir, "output directory");
    if (out_required) out->required();
    cmd->add_option("--seed", seed_flag, "seed override");
    return cmd;
  };

  auto* simulate = add_common(app.add_subcommand("simulate", "draw synthetic datasets"), true);
  simulate->add_option("--spec", spec_path, "dgp spec config")->required();
  simulate->add_option("--schedule", schedule_path, "cost schedule CSV");
  simulate->add_option("--kappa", kappa, "cost-effectiveness benchmark");

  auto* recommend =
      add_common(app.add_subcommand("recommend", "fit methods and emit treatment rules"), false);
  recommend->add_option("--config", config_path, "run config")->required();

  auto* evaluate =
      add_common(app.add_subcommand("evaluate", "ex-post welfare contrasts and the MCS"), false);
  evaluate->add_option("--config", config_path, "run config")->required();
  evaluate->add_option("--alpha", alpha_flag, "MCS level");
  evaluate->add_option("--reps", reps_flag, "bootstrap replications");

  auto* montecarlo =
      add_common(app.add_subcommand("montecarlo", "coverage check of the contrast CI"), true);
  montecarlo->add_option("--spec", spec_path, "dgp spec config")->required();
  montecarlo->add_option("--reps", mc_reps, "replications");
  montecarlo->add_option("--n", mc_n, "ex-post sample size per replication");
  montecarlo->add_option("--schedule", schedule_path, "cost schedule CSV");
  montecarlo->add_option("--kappa", kappa, "cost-effectiveness benchmark");
  montecarlo->add_option("--rule-l", rule_l, "first rule (oracle|treat_all|treat_none)");
  montecarlo->add_option("--rule-m", rule_m, "second rule");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  if (seed_flag >= 0) flags.seed = static_cast<std::uint64_t>(seed_flag);
  if (alpha_flag > 0.0) flags.alpha = alpha_flag;
  if (reps_flag > 0) flags.reps = reps_flag;

  try {
    if (simulate->parsed()) {
      return polieval::cli::cmd_simulate(spec_path, schedule_path, kappa, flags);
    }
    if (recommend->parsed()) {
      return polieval::cli::cmd_recommend(config_path, flags);
    }
    if (evaluate->parsed()) {
      return polieval::cli::cmd_evaluate(config_path, flags);
    }
    if (montecarlo->parsed()) {
      return polieval::cli::cmd_montecarlo(spec_path, mc_reps, mc_n, schedule_path, kappa,
                                           rule_l, rule_m, flags);
    }
  } catch (const polieval::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const polieval::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const polieval::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
