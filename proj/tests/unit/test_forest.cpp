#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "polieval/forest.hpp"
#include "polieval/rng.hpp"
#include "polieval/synth.hpp"
#include "support/fixtures.hpp"

using namespace polieval;

namespace {

FeatureMatrix matrix_1d(const std::vector<double>& x) {
  FeatureMatrix m;
  m.names = {"x"};
  for (double v : x) m.push_row(std::vector<double>{v});
  return m;
}

struct StepData {
  FeatureMatrix x;
  std::vector<double> y;
};

StepData step_dgp(std::size_t n, std::uint64_t seed) {
  auto rng = make_rng(seed);
  StepData data;
  data.x.names = {"x"};
  for (std::size_t i = 0; i < n; ++i) {
    const double xv = 2.0 * uniform01(rng) - 1.0;
    const double u1 = 1.0 - uniform01(rng);
    const double u2 = uniform01(rng);
    const double noise = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    data.x.push_row(std::vector<double>{xv});
    data.y.push_back((xv > 0.0 ? 1.0 : 0.0) + 0.1 * noise);
  }
  return data;
}

}  // namespace

TEST_CASE("constant outcomes give constant predictions") {
  auto rng = make_rng(1);
  std::vector<double> xs;
  for (int i = 0; i < 50; ++i) xs.push_back(uniform01(rng));
  FeatureMatrix x = matrix_1d(xs);
  std::vector<double> y(50, 0.625);
  ForestConfig cfg;
  cfg.n_trees = 20;
  cfg.seed = 3;
  Forest forest = fit_forest(x, y, cfg);
  for (double probe : {-1.0, 0.0, 0.3, 2.0}) {
    CHECK(forest.predict(std::vector<double>{probe}) == 0.625);
  }
}

TEST_CASE("min_leaf at the subsample size yields the honest-half mean") {
  auto rng = make_rng(2);
  std::vector<double> xs, ys;
  for (int i = 0; i < 20; ++i) {
    xs.push_back(uniform01(rng));
    ys.push_back(uniform01(rng));
  }
  FeatureMatrix x = matrix_1d(xs);
  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.min_leaf = 10;  // equals the subsample size; no split is feasible
  cfg.subsample_fraction = 0.5;
  cfg.seed = 9;
  Forest forest = fit_forest(x, ys, cfg);
  REQUIRE(forest.trees.size() == 1);
  const Tree& tree = forest.trees[0];
  CHECK(tree.nodes.size() == 1);
  double mean = 0.0;
  for (auto i : tree.estimate_half) mean += ys[i];
  mean /= static_cast<double>(tree.estimate_half.size());
  CHECK(forest.predict(std::vector<double>{0.5}) == mean);
  CHECK(forest.predict(std::vector<double>{-3.0}) == mean);
}

TEST_CASE("step function is learned to test MSE <= 0.02") {
  StepData train = step_dgp(2000, 11);
  ForestConfig cfg;
  cfg.n_trees = 300;
  cfg.seed = 4;
  Forest forest = fit_forest(train.x, train.y, cfg);
  double mse = 0.0;
  int n_test = 0;
  for (double xv = -0.995; xv < 1.0; xv += 0.01) {
    const double truth = xv > 0.0 ? 1.0 : 0.0;
    const double pred = forest.predict(std::vector<double>{xv});
    mse += (pred - truth) * (pred - truth);
    ++n_test;
  }
  mse /= n_test;
  CHECK(mse <= 0.02);
}

TEST_CASE("honesty: the estimate half moves leaf values, never the structure") {
  auto rng = make_rng(5);
  std::vector<double> xs, ys;
  for (int i = 0; i < 200; ++i) {
    xs.push_back(uniform01(rng));
    ys.push_back(xs.back() > 0.5 ? 1.0 : 0.0);
  }
  FeatureMatrix x = matrix_1d(xs);
  std::vector<std::uint32_t> split_idx, est_idx;
  for (std::uint32_t i = 0; i < 100; ++i) split_idx.push_back(i);
  for (std::uint32_t i = 100; i < 200; ++i) est_idx.push_back(i);

  Tree base = detail::grow_tree(x, ys, split_idx, est_idx, 2, 1, 42);

  // Perturb estimate-half outcomes only.
  std::vector<double> ys2 = ys;
  for (std::uint32_t i = 100; i < 200; ++i) ys2[i] = uniform01(rng);
  Tree moved = detail::grow_tree(x, ys2, split_idx, est_idx, 2, 1, 42);

  // Delete one estimate-half unit.
  std::vector<std::uint32_t> est_minus(est_idx.begin(), est_idx.end() - 1);
  Tree dropped = detail::grow_tree(x, ys, split_idx, est_minus, 2, 1, 42);

  REQUIRE(moved.nodes.size() == base.nodes.size());
  REQUIRE(dropped.nodes.size() == base.nodes.size());
  for (std::size_t v = 0; v < base.nodes.size(); ++v) {
    CHECK(moved.nodes[v].feature == base.nodes[v].feature);
    CHECK(moved.nodes[v].threshold == base.nodes[v].threshold);
    CHECK(dropped.nodes[v].feature == base.nodes[v].feature);
    CHECK(dropped.nodes[v].threshold == base.nodes[v].threshold);
  }
  // And leaf values do come from the estimate half.
  bool some_leaf_changed = false;
  for (std::size_t v = 0; v < base.nodes.size(); ++v) {
    if (base.nodes[v].feature < 0 && moved.nodes[v].value != base.nodes[v].value) {
      some_leaf_changed = true;
    }
  }
  CHECK(some_leaf_changed);
}

TEST_CASE("identical seeds give bitwise-identical forests across thread counts") {
  StepData train = step_dgp(400, 21);
  ForestConfig cfg;
  cfg.n_trees = 40;
  cfg.seed = 1234;
  cfg.n_threads = 1;
  Forest serial = fit_forest(train.x, train.y, cfg);
  cfg.n_threads = 4;
  Forest threaded = fit_forest(train.x, train.y, cfg);
  for (double xv = -1.0; xv <= 1.0; xv += 0.05) {
    CHECK(serial.predict(std::vector<double>{xv}) == threaded.predict(std::vector<double>{xv}));
  }
}

TEST_CASE("predictions stay within the estimate-half outcome range") {
  auto rng = make_rng(31);
  std::vector<double> xs, ys;
  for (int i = 0; i < 300; ++i) {
    xs.push_back(uniform01(rng));
    ys.push_back(4.0 * uniform01(rng) - 2.0);
  }
  FeatureMatrix x = matrix_1d(xs);
  ForestConfig cfg;
  cfg.n_trees = 50;
  cfg.seed = 8;
  Forest forest = fit_forest(x, ys, cfg);
  double lo = *std::min_element(ys.begin(), ys.end());
  double hi = *std::max_element(ys.begin(), ys.end());
  for (double probe = -0.2; probe <= 1.2; probe += 0.01) {
    const double p = forest.predict(std::vector<double>{probe});
    CHECK(p >= lo);
    CHECK(p <= hi);
  }
}

TEST_CASE("cate from two constant forests is the difference of constants") {
  auto rng = make_rng(41);
  std::vector<double> xs;
  for (int i = 0; i < 30; ++i) xs.push_back(uniform01(rng));
  FeatureMatrix x = matrix_1d(xs);
  ForestConfig cfg;
  cfg.n_trees = 5;
  cfg.seed = 2;
  Forest f1 = fit_forest(x, std::vector<double>(30, 0.8), cfg);
  Forest f0 = fit_forest(x, std::vector<double>(30, 0.3), cfg);
  CHECK(predict_cate(f1, f0, std::vector<double>{0.4}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(predict_cate(f1, f1, std::vector<double>{0.4}) == 0.0);

  Forest other = f0;
  other.feature_names = {"different"};
  CHECK_THROWS_AS(predict_cate(f1, other, std::vector<double>{0.4}), ValidationError);
}

TEST_CASE("step-cate sign recovery on the two-forest pipeline") {
  // CATE is +0.2 for teens and -0.1 below; both forests see ~5000 units/arm.
  DgpSpec spec;
  spec.propensity = 0.5;
  spec.seed = 2024;
  spec.n_reference = 20000;
  const double share = 1.0 / 22.0;
  for (int j = 0; j < 11; ++j) {
    const int age = 6 + j;
    const double cate = age >= 13 ? 0.2 : -0.1;
    const double base = age >= 13 ? 0.5 : 0.8;
    spec.cells.push_back({age, true, {}, share, base, cate, std::nullopt});
    spec.cells.push_back({age, false, {}, share, base, cate, std::nullopt});
  }
  SynthData data = generate(spec);

  ForestConfig cfg;
  cfg.n_trees = 200;
  cfg.seed = 7;
  ForestCateModel model = fit_forest_cate(data.reference, CostSchedule::flat(0.0), cfg);

  int correct = 0, total = 0;
  for (const auto& cell : spec.cells) {
    CovariateView w = cell_view(spec, cell);
    const double pred = predict_cate(model.treated, model.control, build_feature_row(w));
    const double truth = cell.cate;
    correct += (pred >= 0.0) == (truth >= 0.0) ? 1 : 0;
    ++total;
  }
  CHECK(static_cast<double>(correct) / total >= 0.9);
}

TEST_CASE("variable importance is normalized and finds the driver") {
  auto rng = make_rng(77);
  FeatureMatrix x;
  x.names = {"noise", "driver", "constant"};
  std::vector<double> y;
  for (int i = 0; i < 2000; ++i) {
    const double a = uniform01(rng);
    const double b = uniform01(rng);
    x.push_row(std::vector<double>{a, b, 1.0});
    y.push_back(b > 0.5 ? 1.0 : 0.0);
  }
  ForestConfig cfg;
  cfg.n_trees = 100;
  cfg.seed = 13;
  cfg.candidate_features_per_split = 3;
  Forest forest = fit_forest(x, y, cfg);
  ImportanceResult imp = variable_importance(forest);
  CHECK_FALSE(imp.degenerate);
  CHECK(std::accumulate(imp.weights.begin(), imp.weights.end(), 0.0) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(imp.weights[1] > imp.weights[0]);
  CHECK(imp.weights[1] > imp.weights[2]);

  // A single informative feature next to a constant one takes all the weight.
  FeatureMatrix x2;
  x2.names = {"only", "flat"};
  std::vector<double> y2;
  for (int i = 0; i < 400; ++i) {
    const double a = uniform01(rng);
    x2.push_row(std::vector<double>{a, 2.0});
    y2.push_back(a);
  }
  cfg.candidate_features_per_split = 2;
  Forest f2 = fit_forest(x2, y2, cfg);
  ImportanceResult imp2 = variable_importance(f2);
  CHECK(imp2.weights[0] == doctest::Approx(1.0));
  CHECK(imp2.weights[1] == 0.0);
}

TEST_CASE("degenerate importance is flagged when nothing splits") {
  auto rng = make_rng(99);
  std::vector<double> xs(20, 1.0);  // constant feature: no split possible
  std::vector<double> ys;
  for (int i = 0; i < 20; ++i) ys.push_back(uniform01(rng));
  ForestConfig cfg;
  cfg.n_trees = 10;
  cfg.seed = 1;
  Forest forest = fit_forest(matrix_1d(xs), ys, cfg);
  ImportanceResult imp = variable_importance(forest);
  CHECK(imp.degenerate);
  CHECK(imp.weights[0] == 0.0);
}

TEST_CASE("growth preconditions") {
  auto rng = make_rng(6);
  std::vector<double> xs, ys;
  for (int i = 0; i < 10; ++i) {
    xs.push_back(uniform01(rng));
    ys.push_back(uniform01(rng));
  }
  FeatureMatrix x = matrix_1d(xs);
  ForestConfig cfg;
  cfg.min_leaf = 6;  // needs 12 rows
  CHECK_THROWS_AS(fit_forest(x, ys, cfg), ValidationError);

  cfg.min_leaf = 2;
  std::vector<double> bad = ys;
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_forest(x, bad, cfg), NumericError);

  cfg.subsample_fraction = 0.0;
  CHECK_THROWS_AS(fit_forest(x, ys, cfg), ValidationError);
}

TEST_CASE("feature schema carries missing indicators") {
  Dataset d;
  d.role = DatasetRole::reference;
  d.contexts = {{"ref", false, {}, {0, 1}}};
  d.covariate_names = {"yrs_educ"};
  UnitRecord u;
  u.unit_id = "u1";
  u.context_id = "ref";
  u.age = 12;
  u.male = true;
  u.covariates = {0.0};
  u.missing = {1};
  d.units.push_back(u);
  FeatureMatrix x = build_feature_matrix(d);
  CHECK(x.names == std::vector<std::string>{"age", "male", "yrs_educ", "yrs_educ_mi"});
  CHECK(x.at(0, 0) == 12.0);
  CHECK(x.at(0, 3) == 1.0);
}
