#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "polieval/contrast.hpp"
#include "polieval/types.hpp"

namespace polieval {

/// Row-major feature matrix with named columns.
struct FeatureMatrix {
  std::vector<std::string> names;
  std::size_t n_rows = 0;
  std::vector<double> data;

  std::size_t n_cols() const { return names.size(); }
  double at(std::size_t i, std::size_t j) const { return data[i * names.size() + j]; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * names.size(), names.size()};
  }
  void push_row(std::span<const double> row);
};

struct ForestConfig {
  std::size_t n_trees = 2000;
  std::size_t min_leaf = 2;
  double subsample_fraction = 0.5;
  std::size_t candidate_features_per_split = 0;  // 0 => ceil(sqrt(n_features))
  std::uint64_t seed = 0;
  std::size_t n_threads = 0;  // 0 => hardware concurrency
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t parent = -1;
  std::int32_t depth = 0;
  double value = 0.0;  // honest leaf estimate
};

struct Tree {
  std::vector<TreeNode> nodes;
  std::vector<std::uint32_t> split_half;     // indices used for structure
  std::vector<std::uint32_t> estimate_half;  // indices used for leaf values

  std::size_t leaf_for(std::span<const double> row) const;
  double predict(std::span<const double> row) const;
};

/// Honest subsampled regression forest: tree structure grown by greedy
/// variance-reduction splits on one half of each subsample, leaf means taken
/// from the held-out half.
struct Forest {
  std::vector<std::string> feature_names;
  std::vector<Tree> trees;

  double predict(std::span<const double> row) const;
};

Forest fit_forest(const FeatureMatrix& x, std::span<const double> y, const ForestConfig& cfg);

/// f1(x) - f0(x); both forests must share one feature schema.
double predict_cate(const Forest& forest_treated, const Forest& forest_control,
                    std::span<const double> row);

struct ImportanceResult {
  std::vector<double> weights;  // aligned with feature_names; sums to 1
  bool degenerate = false;      // no splits anywhere
};

/// Depth-discounted split counts: each split at depth d contributes
/// 1/(d+1) to its feature, normalized over the forest.
ImportanceResult variable_importance(const Forest& forest);

namespace detail {
// Deterministic single-tree growth; exposed so honesty is directly testable.
Tree grow_tree(const FeatureMatrix& x, std::span<const double> y,
               std::vector<std::uint32_t> split_idx, std::vector<std::uint32_t> estimate_idx,
               std::size_t min_leaf, std::size_t mtry, std::uint64_t seed);
}  // namespace detail

/// Feature schema used by the forest method on study data:
/// age, male, covariates, then one missing indicator per covariate.
std::vector<std::string> feature_schema(const std::vector<std::string>& covariate_names);
FeatureMatrix build_feature_matrix(const Dataset& data);
std::vector<double> build_feature_row(const CovariateView& w);

struct ForestCateModel {
  Forest treated;
  Forest control;
  std::vector<std::string> covariate_names;  // schema the rule expects
};

/// Separate forests for treated (cost-adjusted) and control outcomes on the
/// reference experiment.
ForestCateModel fit_forest_cate(const Dataset& reference, const CostSchedule& sched,
                                ForestConfig cfg);

TreatmentRule forest_rule(const ForestCateModel& model, std::string label = "forest");

}  // namespace polieval
