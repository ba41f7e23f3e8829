#include "polieval/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace polieval {

OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& start, double step,
                        std::size_t max_iter, double tol) {
  const Eigen::Index d = start.size();
  OptimResult result;

  std::vector<Eigen::VectorXd> simplex;
  std::vector<double> value;
  simplex.reserve(d + 1);
  simplex.push_back(start);
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::VectorXd v = start;
    v(j) += step * (1.0 + std::abs(start(j)));
    simplex.push_back(v);
  }
  auto eval = [&](const Eigen::VectorXd& x) {
    ++result.evaluations;
    const double fx = f(x);
    return std::isnan(fx) ? std::numeric_limits<double>::infinity() : fx;
  };
  for (const auto& v : simplex) value.push_back(eval(v));

  std::vector<std::size_t> order(simplex.size());
  auto sort_order = [&]() {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return value[a] < value[b]; });
  };

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    sort_order();
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second_worst = order[order.size() - 2];

    if (std::abs(value[worst] - value[best]) <=
        tol * (1.0 + std::abs(value[best]))) {
      result.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t k = 0; k < simplex.size(); ++k) {
      if (k == worst) continue;
      centroid += simplex[k];
    }
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
    const double f_reflected = eval(reflected);

    if (f_reflected < value[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double f_expanded = eval(expanded);
      if (f_expanded < f_reflected) {
        simplex[worst] = expanded;
        value[worst] = f_expanded;
      } else {
        simplex[worst] = reflected;
        value[worst] = f_reflected;
      }
    } else if (f_reflected < value[second_worst]) {
      simplex[worst] = reflected;
      value[worst] = f_reflected;
    } else {
      const Eigen::VectorXd contracted = centroid + 0.5 * (simplex[worst] - centroid);
      const double f_contracted = eval(contracted);
      if (f_contracted < value[worst]) {
        simplex[worst] = contracted;
        value[worst] = f_contracted;
      } else {
        // Shrink toward the best vertex; the incumbent optimum is retained.
        for (std::size_t k = 0; k < simplex.size(); ++k) {
          if (k == best) continue;
          simplex[k] = simplex[best] + 0.5 * (simplex[k] - simplex[best]);
          value[k] = eval(simplex[k]);
        }
      }
    }
  }

  sort_order();
  result.x = simplex[order.front()];
  result.value = value[order.front()];
  return result;
}

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double eps) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = eps * (1.0 + std::abs(x(j)));
    probe(j) = x(j) + h;
    const double up = f(probe);
    probe(j) = x(j) - h;
    const double down = f(probe);
    probe(j) = x(j);
    grad(j) = (up - down) / (2.0 * h);
  }
  return grad;
}

OptimResult bfgs_polish(const Objective& f, const Eigen::VectorXd& start, std::size_t max_iter,
                        double grad_tol) {
  const Eigen::Index d = start.size();
  OptimResult result;
  Eigen::VectorXd x = start;
  double fx = f(x);
  ++result.evaluations;
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd grad = numeric_gradient(f, x);
  result.evaluations += 2 * static_cast<std::size_t>(d);

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    if (grad.norm() <= grad_tol * (1.0 + std::abs(fx))) {
      result.converged = true;
      break;
    }
    Eigen::VectorXd direction = -h_inv * grad;
    double slope = grad.dot(direction);
    if (slope >= 0.0) {  // stale curvature; restart from steepest descent
      h_inv.setIdentity();
      direction = -grad;
      slope = grad.dot(direction);
    }
    double t = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + t * direction;
      f_new = f(x_new);
      ++result.evaluations;
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;

    Eigen::VectorXd grad_new = numeric_gradient(f, x_new);
    result.evaluations += 2 * static_cast<std::size_t>(d);
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd delta = grad_new - grad;
    const double sy = s.dot(delta);
    if (sy > 1e-12) {
      const Eigen::VectorXd hy = h_inv * delta;
      const double yhy = delta.dot(hy);
      h_inv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
               (hy * s.transpose() + s * hy.transpose()) / sy;
    }
    x = x_new;
    fx = f_new;
    grad = grad_new;
  }
  result.x = x;
  result.value = fx;
  return result;
}

}  // namespace polieval
