#include "iwiv/optimize.hpp"

#include <cmath>

namespace iwiv {

void OptConfig::validate() const {
  if (max_epochs < 1 || steps_per_epoch < 1 || patience < 1)
    throw std::invalid_argument("OptConfig: counts must be positive");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("OptConfig: learning_rate must be positive");
  if (!(tolerance > 0.0 && tolerance < 1.0))
    throw std::invalid_argument("OptConfig: tolerance must lie in (0, 1)");
}

MinimizeResult minimize(const GradFn& grad_fn, const EvalFn& eval_fn,
                        const Eigen::VectorXd& init, const OptConfig& cfg) {
  cfg.validate();
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  MinimizeResult result;
  result.params = init;
  const double f0 = eval_fn(init);
  if (!std::isfinite(f0)) throw FitError("minimize: objective non-finite at init");
  result.trace.push_back(f0);
  result.best_objective = f0;
  result.best_epoch = 0;

  Eigen::VectorXd params = init;
  Eigen::VectorXd grad(init.size());
  Eigen::VectorXd m = Eigen::VectorXd::Zero(init.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(init.size());
  Rng rng(mix_seed(cfg.seed, 0x0511));

  long t = 0;
  int stall = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (int s = 0; s < cfg.steps_per_epoch; ++s) {
      grad.setZero();
      const double fb = grad_fn(params, grad, rng);
      if (!std::isfinite(fb) || !grad.allFinite())
        throw FitError("minimize: non-finite objective or gradient at epoch " +
                       std::to_string(epoch));
      ++t;
      const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(t));
      const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(t));
      m = beta1 * m + (1.0 - beta1) * grad;
      v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
      params -= (cfg.learning_rate / corr1) *
                m.cwiseQuotient(((v / corr2).cwiseSqrt().array() + adam_eps).matrix());
    }
    const double f = eval_fn(params);
    if (!std::isfinite(f))
      throw FitError("minimize: objective non-finite at epoch " + std::to_string(epoch));
    result.trace.push_back(f);
    const double improvement = result.best_objective - f;
    if (f < result.best_objective) {
      result.best_objective = f;
      result.best_epoch = epoch;
      result.params = params;
    }
    if (improvement > cfg.tolerance * (std::fabs(result.best_objective) + 1e-12))
      stall = 0;
    else if (++stall >= cfg.patience)
      break;
  }
  return result;
}

Eigen::VectorXd solve_ridge_normal_equations(const Eigen::MatrixXd& A,
                                             const Eigen::VectorXd& b,
                                             double ridge,
                                             const Eigen::VectorXd& mask) {
  if (A.rows() != b.size())
    throw std::invalid_argument("solve_ridge_normal_equations: A rows != b size");
  if (mask.size() != A.cols())
    throw std::invalid_argument("solve_ridge_normal_equations: mask size != A cols");
  if (ridge < 0.0)
    throw std::invalid_argument("solve_ridge_normal_equations: ridge must be >= 0");

  Eigen::MatrixXd lhs = A.transpose() * A;
  lhs.diagonal() += ridge * mask;
  const Eigen::VectorXd rhs = A.transpose() * b;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(lhs);
  // LDLT happily "solves" consistent singular systems, so check the pivots.
  const Eigen::VectorXd d = ldlt.vectorD();
  const double d_max = d.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || d.minCoeff() <= 0.0 ||
      d.minCoeff() < 1e-15 * d_max)
    throw FitError("solve_ridge_normal_equations: normal equations are not "
                   "positive definite; increase the ridge coefficient");
  const Eigen::VectorXd w = ldlt.solve(rhs);
  const double resid = (lhs * w - rhs).cwiseAbs().maxCoeff();
  if (!(resid < 1e-8 * (1.0 + rhs.cwiseAbs().maxCoeff())))
    throw FitError("solve_ridge_normal_equations: normal equations nearly "
                   "singular (residual " + std::to_string(resid) +
                   "); increase the ridge coefficient");
  return w;
}

Eigen::VectorXd solve_ridge_normal_equations(const Eigen::MatrixXd& A,
                                             const Eigen::VectorXd& b,
                                             double ridge) {
  return solve_ridge_normal_equations(A, b, ridge,
                                      Eigen::VectorXd::Ones(A.cols()));
}

std::vector<std::vector<int>> kfold_indices(int n, int k, std::uint64_t seed) {
  if (k < 2 || n < k) throw std::invalid_argument("kfold_indices: need 2 <= k <= n");
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(mix_seed(seed, 0xF01D));
  for (int i = n - 1; i > 0; --i) {
    const int j = rng.uniform_int(i + 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
  for (int i = 0; i < n; ++i)
    folds[static_cast<std::size_t>(i % k)].push_back(order[static_cast<std::size_t>(i)]);
  return folds;
}

}  // namespace iwiv
