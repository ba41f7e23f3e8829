#include "polieval/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "polieval/errors.hpp"
#include "polieval/rng.hpp"

namespace polieval {

namespace {

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

}  // namespace

Eigen::VectorXd lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const std::vector<std::uint8_t>& penalized, double lambda,
                          double tol, std::size_t max_sweeps) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = x.cols();
  if (y.size() != n) throw ValidationError("lasso: x and y row counts differ");
  if (static_cast<Eigen::Index>(penalized.size()) != k) {
    throw ValidationError("lasso: penalization mask arity mismatch");
  }
  if (lambda < 0.0) throw ValidationError("lasso: negative penalty");
  if (n == 0) throw ValidationError("lasso: empty design");

  const double dn = static_cast<double>(n);
  Eigen::VectorXd col_ss(k);
  for (Eigen::Index j = 0; j < k; ++j) col_ss(j) = x.col(j).squaredNorm() / dn;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd residual = y;

  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (col_ss(j) == 0.0) continue;  // constant-zero column stays at 0
      const double old = beta(j);
      const double rho = x.col(j).dot(residual) / dn + col_ss(j) * old;
      const double updated = penalized[j] ? soft_threshold(rho, lambda) / col_ss(j)
                                          : rho / col_ss(j);
      if (updated != old) {
        beta(j) = updated;
        residual -= (updated - old) * x.col(j);
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    if (max_change < tol) break;
  }
  return beta;
}

double lasso_kkt_gap(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     const std::vector<std::uint8_t>& penalized, const Eigen::VectorXd& beta,
                     double lambda) {
  const double dn = static_cast<double>(x.rows());
  Eigen::VectorXd residual = y - x * beta;
  double gap = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (x.col(j).squaredNorm() == 0.0) continue;
    const double g = x.col(j).dot(residual) / dn;
    if (!penalized[j]) {
      gap = std::max(gap, std::abs(g));
    } else if (beta(j) == 0.0) {
      gap = std::max(gap, std::abs(g) - lambda);
    } else {
      gap = std::max(gap, std::abs(g - lambda * (beta(j) > 0 ? 1.0 : -1.0)));
    }
  }
  return gap;
}

LassoCvResult lasso_cv(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const std::vector<std::uint8_t>& penalized,
                       const std::vector<double>& lambda_grid, std::size_t folds,
                       std::uint64_t seed) {
  if (lambda_grid.empty()) throw ValidationError("lasso: empty penalty grid");
  if (folds < 2) throw ValidationError("lasso: need at least 2 folds");
  const std::size_t n = static_cast<std::size_t>(x.rows());
  if (n < 2 * folds) throw ValidationError("lasso: need at least 2 observations per fold");
  for (double lam : lambda_grid) {
    if (lam < 0.0) throw ValidationError("lasso: negative penalty in grid");
  }

  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  auto rng = make_rng(seed, 0x6c6173 /* "las" */);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const std::size_t pick = j + uniform_below(rng, n - j);
    std::swap(perm[j], perm[pick]);
  }

  LassoCvResult result;
  result.lambda_grid = lambda_grid;
  result.folds = folds;
  result.cv_mse.assign(lambda_grid.size(), 0.0);

  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * n / folds;
    const std::size_t hi = (f + 1) * n / folds;
    const std::size_t n_val = hi - lo;
    const std::size_t n_train = n - n_val;
    Eigen::MatrixXd x_train(n_train, x.cols());
    Eigen::VectorXd y_train(n_train);
    Eigen::MatrixXd x_val(n_val, x.cols());
    Eigen::VectorXd y_val(n_val);
    std::size_t it = 0, iv = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t row = perm[i];
      if (i >= lo && i < hi) {
        x_val.row(iv) = x.row(row);
        y_val(iv++) = y(row);
      } else {
        x_train.row(it) = x.row(row);
        y_train(it++) = y(row);
      }
    }
    for (std::size_t g = 0; g < lambda_grid.size(); ++g) {
      Eigen::VectorXd beta = lasso_fit(x_train, y_train, penalized, lambda_grid[g]);
      const double mse = (y_val - x_val * beta).squaredNorm() / static_cast<double>(n_val);
      result.cv_mse[g] += mse / static_cast<double>(folds);
    }
  }

  std::size_t best = 0;
  for (std::size_t g = 1; g < lambda_grid.size(); ++g) {
    const bool strictly_better = result.cv_mse[g] < result.cv_mse[best];
    const bool tie_prefers_larger =
        result.cv_mse[g] == result.cv_mse[best] && lambda_grid[g] > lambda_grid[best];
    if (strictly_better || tie_prefers_larger) best = g;
  }
  result.lambda = lambda_grid[best];
  result.beta = lasso_fit(x, y, penalized, result.lambda);
  return result;
}

}  // namespace polieval
