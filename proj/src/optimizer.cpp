#include "ddcpart/optimizer.hpp"

#include <cmath>

namespace ddcpart {

BfgsResult bfgs_minimize(const ObjectiveFn& f, const Eigen::VectorXd& x0,
                         const BfgsOptions& options) {
  const Eigen::Index n = x0.size();
  BfgsResult res;
  res.x = x0;
  res.gradient = Eigen::VectorXd::Zero(n);
  res.value = f(res.x, &res.gradient);
  res.evaluations = 1;
  if (!std::isfinite(res.value)) return res;

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);  // inverse Hessian estimate
  bool fresh = true;
  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    if (res.gradient.norm() < options.gradient_tolerance) {
      res.converged = true;
      return res;
    }
    Eigen::VectorXd dir = -H * res.gradient;
    double slope = res.gradient.dot(dir);
    if (!(slope < 0.0)) {
      H.setIdentity();
      dir = -res.gradient;
      slope = -res.gradient.squaredNorm();
      fresh = true;
    }
    // The first step along a steepest-descent direction has an arbitrary
    // scale; cap its length.
    double step = 1.0;
    if (fresh) step = std::min(1.0, 1.0 / std::max(dir.norm(), 1e-300));

    Eigen::VectorXd x_new(n), g_new(n);
    double v_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < options.max_line_search; ++ls) {
      x_new = res.x + step * dir;
      g_new.setZero();
      v_new = f(x_new, &g_new);
      ++res.evaluations;
      if (std::isfinite(v_new) && v_new <= res.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (fresh) return res;  // no descent even along the gradient
      H.setIdentity();
      fresh = true;
      continue;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - res.gradient;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) H *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * y;
      H += rho * ((1.0 + rho * y.dot(Hy)) * s * s.transpose() - Hy * s.transpose() -
                  s * Hy.transpose());
      fresh = false;
    }
    res.x = x_new;
    res.value = v_new;
    res.gradient = g_new;
  }
  res.converged = res.gradient.norm() < options.gradient_tolerance;
  return res;
}

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    const double up = f(xp);
    xp[i] = x[i] - h;
    const double down = f(xp);
    xp[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace ddcpart
