#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "iwiv/datagen.hpp"
#include "iwiv/density_ratio.hpp"
#include "iwiv/estimators.hpp"

namespace iwiv {

struct ExperimentConfig {
  DgpConfig dgp;
  std::vector<EstimatorConfig> methods;
  int trials = 20;
  int eval_points = 10000;
  std::vector<int> sample_sizes;  // empty = just dgp.n
  std::uint64_t base_seed = 0;
  RatioFitConfig ratio;  // stage-1 config shared by all IW methods
  int workers = 1;

  void validate() const;
};

struct ReportRow {
  std::string method;
  int n = 0;
  std::uint64_t trial_seed = 0;
  std::optional<double> mse;  // empty = failed fit
  double fit_seconds = 0.0;
  std::map<std::string, double> diagnostics;

  std::optional<double> log10_mse() const;
};

struct SummaryRow {
  std::string method;
  int n = 0;
  int trials_ok = 0;
  int failures = 0;
  double mean_log10_mse = 0.0;
  double sd_log10_mse = 0.0;
};

struct Report {
  std::vector<ReportRow> rows;
  std::map<std::string, double> slopes;  // per-method, convergence studies only

  /// Per (method, n) mean and standard deviation of log10 MSE.
  std::vector<SummaryRow> summary() const;
  int failures() const;
};

/// Mean of (f(x) - f*(x))^2 over eval_points fresh draws of X from the DGP's
/// marginal, on a seed stream disjoint from training.
double mse_against_truth(const std::function<double(const Eigen::VectorXd&)>& predict,
                         const DgpConfig& dgp, int eval_points, std::uint64_t seed);
double mse_against_truth(const FitResult& fit, const DgpConfig& dgp,
                         int eval_points, std::uint64_t seed);

// One seeded Monte-Carlo sweep: for every (sample size, trial) regenerate the
// data with seed base_seed + trial, fit the stage-1 ratio once, fit every
// method, and score against f*. Trials run on `workers` threads; output order
// is canonical (method, n, trial_seed) regardless of scheduling. Failed fits
// become rows with missing mse.
Report run_experiment(const ExperimentConfig& cfg);

/// OLS slope of mean log10(MSE) on log10(n).
double power_law_slope(const std::vector<double>& ns,
                       const std::vector<double>& mean_log10_mse);

struct ConvergenceResult {
  double slope = 0.0;                    // first configured method
  std::map<std::string, double> slopes;  // every method
  Report report;
};

/// run_experiment across cfg.sample_sizes (>= 3 required) plus fitted
/// log-log slopes.
ConvergenceResult convergence_study(const ExperimentConfig& cfg);

// CSV columns: method,n,trial_seed,mse,log10_mse,fit_seconds. Failed fits
// leave mse/log10_mse empty. With timings=false the fit_seconds column is
// written as 0 so reruns are byte-identical.
void emit_report_csv(const Report& report, const std::string& path, bool timings = true);
void emit_report_json(const Report& report, const std::string& path, bool timings = true);
Report read_report_csv(const std::string& path);

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace iwiv
