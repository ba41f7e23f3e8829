#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>

namespace polieval {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  std::size_t evaluations = 0;
  bool converged = false;
};

/// Nelder-Mead simplex minimization. The best-so-far value is monotone
/// non-increasing in the iteration count.
OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& start, double step,
                        std::size_t max_iter, double tol);

/// Central finite differences with per-coordinate steps eps*(1+|x_j|).
Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x,
                                 double eps = 1e-5);

/// BFGS with backtracking Armijo line search and numeric gradients.
OptimResult bfgs_polish(const Objective& f, const Eigen::VectorXd& start, std::size_t max_iter,
                        double grad_tol);

}  // namespace polieval
