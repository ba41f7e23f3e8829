#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace polieval {

/// Coordinate-descent solution of
///   (1/2n) ||y - X b||^2 + lambda * sum_{j penalized} |b_j|.
/// Unpenalized coordinates take plain least-squares updates.
Eigen::VectorXd lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const std::vector<std::uint8_t>& penalized, double lambda,
                          double tol = 1e-10, std::size_t max_sweeps = 100000);

struct LassoCvResult {
  Eigen::VectorXd beta;
  double lambda = 0.0;
  std::vector<double> lambda_grid;
  std::vector<double> cv_mse;  // mean validation MSE per grid point
  std::size_t folds = 0;
};

/// K-fold cross-validation over the supplied grid; ties prefer the larger
/// penalty. Fold assignment is a seeded shuffle.
LassoCvResult lasso_cv(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const std::vector<std::uint8_t>& penalized,
                       const std::vector<double>& lambda_grid, std::size_t folds,
                       std::uint64_t seed);

/// Max KKT violation of a solution: for penalized coordinates the subgradient
/// condition |x_j'r/n| <= lambda (zero coefs) and x_j'r/n = lambda*sign(b_j)
/// (active coefs); for unpenalized coordinates x_j'r/n = 0.
double lasso_kkt_gap(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     const std::vector<std::uint8_t>& penalized, const Eigen::VectorXd& beta,
                     double lambda);

}  // namespace polieval
