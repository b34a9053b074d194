#pragma once

// Shared helpers for the test suites: independent reference implementations
// kept deliberately separate from the library code paths they check.

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "iwiv/dataset.hpp"
#include "iwiv/rng.hpp"

namespace testutil {

inline double corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double ma = a.mean(), mb = b.mean();
  const Eigen::ArrayXd da = a.array() - ma, db = b.array() - mb;
  return (da * db).sum() / std::sqrt((da * da).sum() * (db * db).sum());
}

// Naive double-loop moment objective (1/n) sum_j ((1/n) sum_i e_i R_ij)^2.
inline double naive_iwmm(const Eigen::VectorXd& e, const Eigen::MatrixXd& R) {
  const Eigen::Index n = e.size();
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    double m = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) m += e(i) * R(i, j);
    m /= static_cast<double>(n);
    total += m * m;
  }
  return total / static_cast<double>(n);
}

// Conjugate gradients on a quadratic objective given only its gradient
// oracle; Hessian-vector products come from gradient differences, which are
// exact for quadratics. Independent iterative route for closed-form solvers.
inline Eigen::VectorXd cg_minimize_quadratic(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
    Eigen::VectorXd theta, int max_iters = 2000) {
  Eigen::VectorXd g = grad(theta);
  Eigen::VectorXd d = -g;
  const int dim = static_cast<int>(theta.size());
  int since_restart = 0;
  for (int it = 0; it < max_iters && g.norm() > 1e-13; ++it) {
    const Eigen::VectorXd hd = grad(theta + d) - g;
    const double dhd = d.dot(hd);
    if (dhd <= 0.0) break;
    const double alpha = g.squaredNorm() / dhd;
    theta += alpha * d;
    const Eigen::VectorXd g_new = grad(theta);  // exact refresh, no drift
    const double beta = g_new.squaredNorm() / g.squaredNorm();
    g = g_new;
    if (++since_restart >= dim) {
      d = -g;
      since_restart = 0;
    } else {
      d = -g + beta * d;
    }
  }
  return theta;
}

// Gaussian elimination with partial pivoting; oracle for linear solves.
inline Eigen::VectorXd gauss_solve(Eigen::MatrixXd a, Eigen::VectorXd b) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index piv = k;
    for (Eigen::Index i = k + 1; i < n; ++i)
      if (std::fabs(a(i, k)) > std::fabs(a(piv, k))) piv = i;
    a.row(k).swap(a.row(piv));
    std::swap(b(k), b(piv));
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      a.row(i).tail(n - k) -= f * a.row(k).tail(n - k);
      b(i) -= f * b(k);
    }
  }
  Eigen::VectorXd x(n);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    double s = b(i);
    for (Eigen::Index j = i + 1; j < n; ++j) s -= a(i, j) * x(j);
    x(i) = s / a(i, i);
  }
  return x;
}

}  // namespace testutil
