#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "iwiv/dataset.hpp"
#include "iwiv/rng.hpp"

namespace iwiv {

/// Raised when an optimizer or solver cannot produce a usable result
/// (non-finite objective, singular system, ...).
class FitError : public std::runtime_error {
 public:
  explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

struct OptConfig {
  int max_epochs = 500;
  double learning_rate = 3e-3;
  int steps_per_epoch = 1;  // gradient steps between objective evaluations
  int batch = 0;            // minibatch size hint for stochastic objectives; 0 = full batch
  double tolerance = 1e-5;  // relative improvement counted as progress
  int patience = 40;        // epochs without progress before stopping
  std::uint64_t seed = 0;

  void validate() const;
};

struct MinimizeResult {
  Eigen::VectorXd params;        // best-seen parameters
  std::vector<double> trace;     // evaluation objective per epoch, trace[0] at init
  double best_objective = 0.0;
  int best_epoch = 0;
};

/// Gradient oracle: fills grad at the given params, returns the (possibly
/// stochastic) objective estimate used for the step. The Rng is the only
/// source of randomness so runs are reproducible.
using GradFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&, Rng&)>;

/// Evaluation objective used for the trace, early stopping, and best-seen
/// selection. For deterministic problems this is the same function the
/// gradient comes from.
using EvalFn = std::function<double(const Eigen::VectorXd&)>;

// Adam with constant learning rate. Returns the best parameters seen under
// eval (the initial point included), so the result is never worse than init.
// Throws FitError if the objective or gradient goes non-finite.
MinimizeResult minimize(const GradFn& grad_fn, const EvalFn& eval_fn,
                        const Eigen::VectorXd& init, const OptConfig& cfg);

// Solves (A^T A + ridge * diag(mask)) w = A^T b by LDLT and verifies the
// residual to 1e-8 * (1 + ||rhs||_inf). mask entries are 0/1; a zero keeps
// that coordinate out of the penalty (the intercept, typically).
Eigen::VectorXd solve_ridge_normal_equations(const Eigen::MatrixXd& A,
                                             const Eigen::VectorXd& b,
                                             double ridge,
                                             const Eigen::VectorXd& mask);

Eigen::VectorXd solve_ridge_normal_equations(const Eigen::MatrixXd& A,
                                             const Eigen::VectorXd& b,
                                             double ridge);

/// Deterministic shuffled partition of 0..n-1 into k disjoint folds.
std::vector<std::vector<int>> kfold_indices(int n, int k, std::uint64_t seed);

template <class Hyper>
struct CvChoice {
  Hyper best;
  int best_index = 0;
  std::vector<double> mean_scores;
};

// K-fold cross-validation over a hyperparameter grid. fit(train, hyper)
// returns a model; score(model, heldout) returns a loss (lower is better).
// Ties break toward the earliest grid point.
template <class Hyper, class FitFn, class ScoreFn>
CvChoice<Hyper> k_fold_cv(const Dataset& data, const std::vector<Hyper>& grid,
                          FitFn&& fit, ScoreFn&& score, int k,
                          std::uint64_t seed) {
  if (grid.empty()) throw std::invalid_argument("k_fold_cv: empty grid");
  if (k < 2) throw std::invalid_argument("k_fold_cv: k must be >= 2");
  if (data.n() < k) throw std::invalid_argument("k_fold_cv: n < k");
  const auto folds = kfold_indices(static_cast<int>(data.n()), k, seed);

  std::vector<Dataset> train(folds.size()), heldout(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<int> rest;
    rest.reserve(data.n() - folds[f].size());
    for (std::size_t g = 0; g < folds.size(); ++g)
      if (g != f) rest.insert(rest.end(), folds[g].begin(), folds[g].end());
    train[f] = data.select(rest);
    heldout[f] = data.select(folds[f]);
  }

  CvChoice<Hyper> choice;
  choice.mean_scores.resize(grid.size());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double total = 0.0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      auto model = fit(train[f], grid[g]);
      total += score(model, heldout[f]);
    }
    const double mean = total / static_cast<double>(folds.size());
    choice.mean_scores[g] = mean;
    if (mean < best) {
      best = mean;
      choice.best_index = static_cast<int>(g);
    }
  }
  choice.best = grid[static_cast<std::size_t>(choice.best_index)];
  return choice;
}

}  // namespace iwiv
