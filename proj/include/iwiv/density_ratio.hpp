#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <vector>

#include "iwiv/dataset.hpp"
#include "iwiv/models.hpp"

namespace iwiv {

// Conditional density ratio model r(w | z) with w = (y, x). An MLP produces a
// raw score; the output link clamp(softplus(raw), floor, cap) keeps every
// evaluation inside [output_floor, output_cap].
struct RatioModel {
  MlpModel net;  // input dim 1 + d_x + d_z
  double output_floor = 1e-6;
  double output_cap = 20.0;

  double evaluate(const Eigen::VectorXd& w, const Eigen::VectorXd& z) const;

  nlohmann::json to_json() const;
  static RatioModel from_json(const nlohmann::json& doc);
};

void save_ratio(const RatioModel& model, const std::string& path);
RatioModel load_ratio(const std::string& path);

/// Row-paired evaluations r(W_i | Z_i); W and Z must have equal row counts.
Eigen::VectorXd evaluate_rows(const RatioModel& model, const Eigen::MatrixXd& W,
                              const Eigen::MatrixXd& Z);

/// All-pairs matrix R(i, j) = r(W_i | Z_j). The first layer is evaluated once
/// per side and summed per pair, so cost is dominated by the hidden layers.
Eigen::MatrixXd evaluate_pairwise(const RatioModel& model,
                                  const Eigen::MatrixXd& W,
                                  const Eigen::MatrixXd& Z);

/// R(i, j) = r(W_i | Z_j) on the dataset's own rows.
Eigen::MatrixXd ratio_matrix(const RatioModel& model, const Dataset& data);

// Empirical least-squares importance-fitting risk
//   -(1/n) sum_i r(W_i|Z_i) + (1/(2 n^2)) sum_j sum_i r^2(W_i|Z_j),
// diagonal pairs included. Streams over columns, nothing is materialized.
double lsif_empirical_risk(const RatioModel& model, const Dataset& data);

/// Same risk computed from a precomputed all-pairs matrix.
double lsif_risk_from_matrix(const Eigen::MatrixXd& R);

/// (1/n^2) sum_ij r(W_i|Z_j); near 1 for a well-fit model since E[r*] = 1.
double ratio_mass_check(const RatioModel& model, const Dataset& data);
double ratio_mass_from_matrix(const Eigen::MatrixXd& R);

struct RatioFitConfig {
  int epochs = 60;
  int batch_pairs = 256;
  double learning_rate = 2e-3;
  // L2 penalty on the net weights, the operational form of a bounded
  // hypothesis class. Negative = auto: 5e-2 when an instrument column
  // coincides with a regressor/outcome column (the conditional ratio is then
  // singular and class control is load-bearing), 1e-3 otherwise.
  double weight_decay = -1.0;
  std::uint64_t seed = 0;
  int cv_folds = 5;
  double cap = 20.0;
  double floor = 1e-6;
  std::vector<int> hidden = {128, 128};
  double leakiness = 0.2;
  int steps_per_epoch = 0;   // 0 = ceil(8 n / batch_pairs)
  int monitor_pairs = 16384;  // pair subsample for the per-epoch risk estimate
  double tolerance = 1e-4;
  int patience = 12;

  void validate() const;
};

struct RatioFitInfo {
  double final_risk = 0.0;  // exact empirical risk of the returned model
  double init_risk = -0.5;  // risk of the constant-1 initialization
  int epochs_run = 0;
  bool kept_init = false;   // true if training never beat the constant-1 start
};

// Minimizes the LSIF risk by Adam over uniformly sampled (i, j) pairs (the
// cross term's unbiased minibatch form); the full risk is evaluated once at
// the end. The returned model's exact empirical risk never exceeds the
// constant-1 model's risk of -1/2: the net is initialized at exactly r = 1
// and that candidate is kept if training fails to improve on it.
// If full_matrix is non-null it receives the returned model's all-pairs
// matrix, saving the caller a second O(n^2) pass.
RatioModel fit_ratio(const Dataset& data, const RatioFitConfig& cfg,
                     Eigen::MatrixXd* full_matrix = nullptr,
                     RatioFitInfo* info = nullptr);

}  // namespace iwiv
