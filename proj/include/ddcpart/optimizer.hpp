#pragma once

#include <functional>

#include <Eigen/Dense>

namespace ddcpart {

// Value and (optionally) gradient at x. Leave `grad` untouched when null.
using ObjectiveFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct BfgsOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;  // Euclidean norm
  int max_line_search = 60;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

// Quasi-Newton minimization with Armijo backtracking. Non-finite trial
// values are treated as failed steps.
BfgsResult bfgs_minimize(const ObjectiveFn& f, const Eigen::VectorXd& x0,
                         const BfgsOptions& options = {});

// Central finite differences of a scalar function.
Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double step = 1e-5);

}  // namespace ddcpart
