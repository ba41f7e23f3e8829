#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace polieval::cli {

struct CommonFlags {
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<long long> reps;
};

int cmd_simulate(const std::string& spec_path, const std::string& schedule_path, double kappa,
                 const CommonFlags& flags);

int cmd_recommend(const std::string& config_path, const CommonFlags& flags);

int cmd_evaluate(const std::string& config_path, const CommonFlags& flags);

int cmd_montecarlo(const std::string& spec_path, long long reps, long long n,
                   const std::string& schedule_path, double kappa, const std::string& rule_l,
                   const std::string& rule_m, const CommonFlags& flags);

}  // namespace polieval::cli
