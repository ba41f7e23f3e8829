#include "polieval/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <numeric>
#include <thread>

#include "polieval/model.hpp"
#include "polieval/rng.hpp"

namespace polieval {

void FeatureMatrix::push_row(std::span<const double> row) {
  if (row.size() != names.size()) throw ValidationError("feature row arity mismatch");
  data.insert(data.end(), row.begin(), row.end());
  ++n_rows;
}

std::size_t Tree::leaf_for(std::span<const double> row) const {
  std::size_t node = 0;
  while (nodes[node].feature >= 0) {
    const TreeNode& nd = nodes[node];
    node = row[static_cast<std::size_t>(nd.feature)] < nd.threshold
               ? static_cast<std::size_t>(nd.left)
               : static_cast<std::size_t>(nd.right);
  }
  return node;
}

double Tree::predict(std::span<const double> row) const { return nodes[leaf_for(row)].value; }

double Forest::predict(std::span<const double> row) const {
  if (trees.empty()) throw ValidationError("forest has no trees");
  if (row.size() != feature_names.size()) throw ValidationError("feature row arity mismatch");
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(row);
  return sum / static_cast<double>(trees.size());
}

namespace detail {

namespace {

struct BestSplit {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double score = -std::numeric_limits<double>::infinity();
};

// Maximizes sum_L^2/n_L + sum_R^2/n_R, which is equivalent to minimizing the
// post-split sum of squared errors.
BestSplit best_split_for_feature(const FeatureMatrix& x, std::span<const double> y,
                                 std::span<const std::uint32_t> idx, std::size_t feature,
                                 std::size_t min_leaf,
                                 std::vector<std::pair<double, double>>& scratch) {
  scratch.clear();
  for (std::uint32_t i : idx) scratch.emplace_back(x.at(i, feature), y[i]);
  std::sort(scratch.begin(), scratch.end());

  BestSplit best;
  const std::size_t n = scratch.size();
  double total = 0.0;
  for (const auto& [v, yy] : scratch) total += yy;

  double left_sum = 0.0;
  for (std::size_t j = 1; j < n; ++j) {
    left_sum += scratch[j - 1].second;
    if (scratch[j - 1].first == scratch[j].first) continue;
    const std::size_t n_left = j;
    const std::size_t n_right = n - j;
    if (n_left < min_leaf || n_right < min_leaf) continue;
    const double right_sum = total - left_sum;
    const double score = left_sum * left_sum / static_cast<double>(n_left) +
                         right_sum * right_sum / static_cast<double>(n_right);
    if (score > best.score) {
      best.found = true;
      best.feature = feature;
      best.score = score;
      best.threshold = 0.5 * (scratch[j - 1].first + scratch[j].first);
    }
  }
  return best;
}

}  // namespace

Tree grow_tree(const FeatureMatrix& x, std::span<const double> y,
               std::vector<std::uint32_t> split_idx, std::vector<std::uint32_t> estimate_idx,
               std::size_t min_leaf, std::size_t mtry, std::uint64_t seed) {
  const std::size_t n_features = x.n_cols();
  mtry = std::min(std::max<std::size_t>(mtry, 1), n_features);
  auto rng = make_rng(seed, 0x74726565 /* "tree" */);

  Tree tree;
  tree.split_half = split_idx;
  tree.estimate_half = estimate_idx;
  tree.nodes.push_back(TreeNode{});

  std::vector<std::uint32_t> feature_pool(n_features);
  std::iota(feature_pool.begin(), feature_pool.end(), 0);
  std::vector<std::uint32_t> candidates;
  std::vector<std::pair<double, double>> scratch;

  struct WorkItem {
    std::size_t node;
    std::vector<std::uint32_t> idx;
  };
  std::vector<WorkItem> stack;
  stack.push_back({0, std::move(split_idx)});

  while (!stack.empty()) {
    WorkItem item = std::move(stack.back());
    stack.pop_back();
    TreeNode& node = tree.nodes[item.node];

    bool make_leaf = item.idx.size() < 2 * min_leaf;
    if (!make_leaf) {
      const double first = y[item.idx.front()];
      bool constant = true;
      for (std::uint32_t i : item.idx) {
        if (y[i] != first) {
          constant = false;
          break;
        }
      }
      make_leaf = constant;
    }

    BestSplit best;
    if (!make_leaf) {
      // Partial Fisher-Yates draw of candidate features, then a canonical
      // ascending order so tie-breaking is stable.
      candidates.clear();
      for (std::size_t j = 0; j < mtry; ++j) {
        const std::size_t pick = j + uniform_below(rng, n_features - j);
        std::swap(feature_pool[j], feature_pool[pick]);
        candidates.push_back(feature_pool[j]);
      }
      std::sort(candidates.begin(), candidates.end());
      for (std::uint32_t f : candidates) {
        BestSplit s = best_split_for_feature(x, y, item.idx, f, min_leaf, scratch);
        if (s.found && s.score > best.score) best = s;
      }
      make_leaf = !best.found;
    }

    if (make_leaf) continue;  // node stays a leaf; value filled later

    const std::int32_t left = static_cast<std::int32_t>(tree.nodes.size());
    const std::int32_t right = left + 1;
    node.feature = static_cast<std::int32_t>(best.feature);
    node.threshold = best.threshold;
    node.left = left;
    node.right = right;
    const std::int32_t depth = node.depth;
    const std::int32_t parent = static_cast<std::int32_t>(item.node);

    TreeNode child;
    child.depth = depth + 1;
    child.parent = parent;
    tree.nodes.push_back(child);
    tree.nodes.push_back(child);

    std::vector<std::uint32_t> left_idx, right_idx;
    for (std::uint32_t i : item.idx) {
      (x.at(i, best.feature) < best.threshold ? left_idx : right_idx).push_back(i);
    }
    stack.push_back({static_cast<std::size_t>(right), std::move(right_idx)});
    stack.push_back({static_cast<std::size_t>(left), std::move(left_idx)});
  }

  // Honest leaf values: means of the estimate half routed down the frozen
  // structure; an empty leaf inherits the nearest ancestor with mass.
  std::vector<double> sums(tree.nodes.size(), 0.0);
  std::vector<std::size_t> counts(tree.nodes.size(), 0);
  for (std::uint32_t i : tree.estimate_half) {
    std::size_t node = 0;
    while (true) {
      sums[node] += y[i];
      counts[node] += 1;
      if (tree.nodes[node].feature < 0) break;
      const TreeNode& nd = tree.nodes[node];
      node = x.at(i, static_cast<std::size_t>(nd.feature)) < nd.threshold
                 ? static_cast<std::size_t>(nd.left)
                 : static_cast<std::size_t>(nd.right);
    }
  }
  double root_fallback = 0.0;
  if (counts[0] == 0) {
    // No estimate units at all: fall back to the structural half's mean.
    double s = 0.0;
    for (std::uint32_t i : tree.split_half) s += y[i];
    root_fallback = tree.split_half.empty() ? 0.0 : s / static_cast<double>(tree.split_half.size());
  }
  for (std::size_t v = 0; v < tree.nodes.size(); ++v) {
    if (tree.nodes[v].feature >= 0) continue;
    std::size_t node = v;
    while (counts[node] == 0 && tree.nodes[node].parent >= 0) {
      node = static_cast<std::size_t>(tree.nodes[node].parent);
    }
    tree.nodes[v].value =
        counts[node] > 0 ? sums[node] / static_cast<double>(counts[node]) : root_fallback;
  }
  return tree;
}

}  // namespace detail

Forest fit_forest(const FeatureMatrix& x, std::span<const double> y, const ForestConfig& cfg) {
  const std::size_t n = x.n_rows;
  if (n != y.size()) throw ValidationError("feature matrix and outcome length mismatch");
  if (cfg.min_leaf < 1) throw ValidationError("min_leaf must be >= 1");
  if (!(cfg.subsample_fraction > 0.0 && cfg.subsample_fraction <= 1.0)) {
    throw ValidationError("subsample_fraction must lie in (0,1]");
  }
  if (cfg.n_trees < 1) throw ValidationError("n_trees must be >= 1");
  if (n < 2 * cfg.min_leaf) {
    throw ValidationError("forest growth needs at least 2*min_leaf rows (" +
                          std::to_string(2 * cfg.min_leaf) + "), got " + std::to_string(n));
  }
  if (x.n_cols() == 0) throw ValidationError("feature matrix has no columns");
  for (double v : x.data) {
    if (!std::isfinite(v)) throw NumericError("non-finite feature value");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw NumericError("non-finite outcome value");
  }

  const std::size_t subsample =
      std::max<std::size_t>(1, static_cast<std::size_t>(cfg.subsample_fraction *
                                                        static_cast<double>(n)));
  const std::size_t mtry = cfg.candidate_features_per_split > 0
                               ? cfg.candidate_features_per_split
                               : static_cast<std::size_t>(
                                     std::ceil(std::sqrt(static_cast<double>(x.n_cols()))));

  Forest forest;
  forest.feature_names = x.names;
  forest.trees.resize(cfg.n_trees);

  auto grow_one = [&](std::size_t t) {
    auto rng = make_rng(cfg.seed, t + 1);
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t j = 0; j < subsample; ++j) {
      const std::size_t pick = j + uniform_below(rng, n - j);
      std::swap(perm[j], perm[pick]);
    }
    const std::size_t n_estimate = (subsample + 1) / 2;
    std::vector<std::uint32_t> estimate_idx(perm.begin(), perm.begin() + n_estimate);
    std::vector<std::uint32_t> split_idx(perm.begin() + n_estimate, perm.begin() + subsample);
    forest.trees[t] = detail::grow_tree(x, y, std::move(split_idx), std::move(estimate_idx),
                                        cfg.min_leaf, mtry, mix_seed(cfg.seed, t + 1));
  };

  std::size_t n_threads = cfg.n_threads > 0 ? cfg.n_threads : std::thread::hardware_concurrency();
  n_threads = std::max<std::size_t>(1, std::min(n_threads, cfg.n_trees));
  if (n_threads == 1) {
    for (std::size_t t = 0; t < cfg.n_trees; ++t) grow_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < n_threads; ++w) {
      workers.emplace_back([&]() {
        while (true) {
          const std::size_t t = next.fetch_add(1);
          if (t >= cfg.n_trees) return;
          grow_one(t);
        }
      });
    }
    for (auto& w : workers) w.join();
  }
  return forest;
}

double predict_cate(const Forest& forest_treated, const Forest& forest_control,
                    std::span<const double> row) {
  if (forest_treated.feature_names != forest_control.feature_names) {
    throw ValidationError("forests disagree on the feature schema");
  }
  return forest_treated.predict(row) - forest_control.predict(row);
}

ImportanceResult variable_importance(const Forest& forest) {
  ImportanceResult result;
  result.weights.assign(forest.feature_names.size(), 0.0);
  double total = 0.0;
  for (const auto& tree : forest.trees) {
    for (const auto& node : tree.nodes) {
      if (node.feature < 0) continue;
      const double w = 1.0 / static_cast<double>(node.depth + 1);
      result.weights[static_cast<std::size_t>(node.feature)] += w;
      total += w;
    }
  }
  if (total == 0.0) {
    result.degenerate = true;
    return result;
  }
  for (double& w : result.weights) w /= total;
  return result;
}

std::vector<std::string> feature_schema(const std::vector<std::string>& covariate_names) {
  std::vector<std::string> names = {"age", "male"};
  for (const auto& name : covariate_names) names.push_back(name);
  for (const auto& name : covariate_names) names.push_back(name + "_mi");
  return names;
}

FeatureMatrix build_feature_matrix(const Dataset& data) {
  FeatureMatrix x;
  x.names = feature_schema(data.covariate_names);
  for (const auto& u : data.units) {
    std::vector<double> row = build_feature_row(data.covariates_of(u));
    x.push_row(row);
  }
  return x;
}

std::vector<double> build_feature_row(const CovariateView& w) {
  std::vector<double> row;
  row.reserve(2 + 2 * w.values.size());
  row.push_back(static_cast<double>(w.age));
  row.push_back(w.male ? 1.0 : 0.0);
  for (double v : w.values) row.push_back(v);
  for (std::size_t j = 0; j < w.values.size(); ++j) {
    row.push_back(j < w.missing.size() && w.missing[j] ? 1.0 : 0.0);
  }
  return row;
}

ForestCateModel fit_forest_cate(const Dataset& reference, const CostSchedule& sched,
                                ForestConfig cfg) {
  if (reference.role != DatasetRole::reference) {
    throw ValidationError("fit_forest_cate expects reference data");
  }
  FeatureMatrix x1, x0;
  x1.names = x0.names = feature_schema(reference.covariate_names);
  std::vector<double> y1, y0;
  for (const auto& u : reference.units) {
    std::vector<double> row = build_feature_row(reference.covariates_of(u));
    if (u.treatment == 1) {
      x1.push_row(row);
      y1.push_back(adjusted_outcome(u.outcome, 1, u.age, sched));
    } else {
      x0.push_row(row);
      y0.push_back(u.outcome);
    }
  }
  ForestCateModel model;
  model.covariate_names = reference.covariate_names;
  ForestConfig cfg1 = cfg;
  ForestConfig cfg0 = cfg;
  cfg0.seed = mix_seed(cfg.seed, 0x59300);  // independent stream for the control forest
  model.treated = fit_forest(x1, y1, cfg1);
  model.control = fit_forest(x0, y0, cfg0);
  return model;
}

TreatmentRule forest_rule(const ForestCateModel& model, std::string label) {
  auto shared = std::make_shared<ForestCateModel>(model);
  return make_plugin_rule(std::move(label), [shared](const CovariateView& w) {
    if (!w.names || *w.names != shared->covariate_names) {
      throw ValidationError("forest rule: covariate schema mismatch");
    }
    std::vector<double> row = build_feature_row(w);
    return predict_cate(shared->treated, shared->control, row);
  });
}

}  // namespace polieval
