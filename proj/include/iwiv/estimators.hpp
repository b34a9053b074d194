#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iwiv/dataset.hpp"
#include "iwiv/density_ratio.hpp"
#include "iwiv/models.hpp"
#include "iwiv/optimize.hpp"

namespace iwiv {

enum class Method { IwMm, IwLs, IwKrnl, Ls, IvJust, TwoSls };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct EstimatorConfig {
  Method method = Method::IwMm;
  double eta = 1e-3;    // moment penalty weight in the penalized objective
  double zeta = 1e-6;   // kernel ridge coefficient
  double sigma2 = 1.0;  // kernel bandwidth
  bool cv = false;      // IwKrnl: pick (sigma2, zeta) by K-fold CV
  std::vector<double> sigma2_grid;  // CV grids; defaults derived when empty
  std::vector<double> zeta_grid;
  int cv_folds = 5;
  int sieve_degree = 1;
  int kernel_centers = -1;  // -1 = every training row, 0 = intercept only, m > 0 = first m rows
  std::vector<int> hidden = {128, 128};
  double leakiness = 0.2;
  OptConfig opt;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Row label used in reports: iw_mm, iw_ls, iw_krnl, ls, iv_just, 2sls_d<k>.
std::string method_label(const EstimatorConfig& cfg);

// Polynomial-sieve predictor theta . (1, x_1..x_d, x_1^2..x_d^2, ...); also
// covers the just-identified IV fit (degree 1).
struct SieveModel {
  int degree = 1;
  Eigen::VectorXd coef;

  double predict(const Eigen::VectorXd& x) const;
  Eigen::VectorXd predict_batch(const Eigen::MatrixXd& X) const;
};

/// [1, X, X^2, ..., X^degree] with powers taken per column.
Eigen::MatrixXd sieve_features(const Eigen::MatrixXd& X, int degree);

struct FitResult {
  std::optional<StructuralModel> model;
  std::optional<SieveModel> sieve;
  std::vector<double> objective_trace;
  std::map<std::string, double> diagnostics;

  double predict(const Eigen::VectorXd& x) const;
  Eigen::VectorXd predict_batch(const Eigen::MatrixXd& X) const;
};

// Empirical moment objective
//   (1/n) sum_j ( (1/n) sum_i (Y_i - f(X_i)) r(W_i|Z_j) )^2,
// all pairs included.
double iwmm_objective(const StructuralModel& f, const RatioModel& r, const Dataset& data);
double iwmm_objective_given(const Eigen::VectorXd& residuals, const Eigen::MatrixXd& R);

// Penalized least-squares objective
//   (1/n) sum_i (Y_i - f(X_i))^2 + eta * sum_j ( (1/n) sum_i (Y_i - f(X_i)) r(W_i|Z_j) )^2.
// The penalty sum over j is not averaged.
double iwls_objective(const StructuralModel& f, const RatioModel& r, const Dataset& data, double eta);
double iwls_objective_given(const Eigen::VectorXd& residuals, const Eigen::MatrixXd& R, double eta);

// Sample projected MSE
//   (1/n) sum_j ( (1/n) sum_i (f_true_i - f(X_i)) r(W_i|Z_j) )^2.
// Requires data.f_true.
double projected_mse_empirical(const StructuralModel& f, const RatioModel& r, const Dataset& data);
double projected_mse_given(const Eigen::VectorXd& f_err, const Eigen::MatrixXd& R);

// Neural-network fits. Each precomputes the all-pairs ratio matrix unless one
// is supplied, then runs seeded full-batch Adam; the returned parameters are
// best-seen, so the final objective never exceeds the value at init.
FitResult fit_iwmm(const Dataset& data, const RatioModel& ratio,
                   const EstimatorConfig& cfg, const Eigen::MatrixXd* R = nullptr);
FitResult fit_iwls(const Dataset& data, const RatioModel& ratio,
                   const EstimatorConfig& cfg, const Eigen::MatrixXd* R = nullptr);

/// Plain least squares on (X, Y); MLP by default, closed-form ridge when
/// kernel_model is set.
FitResult fit_ls(const Dataset& data, const EstimatorConfig& cfg,
                 bool kernel_model = false);

// Closed-form minimizer of the moment objective over the Gaussian-kernel
// linear-in-parameter model, ridge zeta on the kernel weights (intercept
// unpenalized). With cfg.cv, (sigma2, zeta) come from K-fold CV scored by the
// held-out moment objective.
FitResult fit_iw_krnl(const Dataset& data, const RatioModel& ratio,
                      const EstimatorConfig& cfg, const Eigen::MatrixXd* R = nullptr);

/// Just-identified linear IV with intercept: solves (Z~^T X~) theta = Z~^T y
/// where X~, Z~ carry a leading constant column. Throws FitError when the
/// moment matrix is (near-)singular.
Eigen::VectorXd fit_iv_just(const Dataset& data);

/// Two-stage least squares on the degree-k polynomial sieve, instruments
/// expanded to matching powers of Z.
Eigen::VectorXd fit_2sls(const Dataset& data, int sieve_degree);

/// Bench-facing dispatch; ratio/R may be null for methods that ignore them.
FitResult fit_estimator(const Dataset& data, const EstimatorConfig& cfg,
                        const RatioModel* ratio = nullptr,
                        const Eigen::MatrixXd* R = nullptr);

}  // namespace iwiv
