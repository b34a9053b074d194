#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace iwiv {

// One sample of n observations: outcome y, regressors x (n x d_x),
// instruments z (n x d_z), plus the true structural values for synthetic
// data. Immutable by convention once built; safe to share across threads.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
  Eigen::MatrixXd z;
  std::optional<Eigen::VectorXd> f_true;
  std::uint64_t seed = 0;

  Eigen::Index n() const { return y.size(); }
  int dx() const { return static_cast<int>(x.cols()); }
  int dz() const { return static_cast<int>(z.cols()); }

  /// Joint (y, x) row used as the density-ratio argument W.
  Eigen::VectorXd w_row(Eigen::Index i) const;

  /// n x (1 + d_x) matrix with rows (y_i, x_i).
  Eigen::MatrixXd w_matrix() const;

  /// Row subset in the given order.
  Dataset select(const std::vector<int>& rows) const;

  /// Throws std::invalid_argument on shape mismatch, n < 2, or non-finite entries.
  void validate() const;
};

/// CSV with header y,x1..xd,z1..zd[,f_true].
void write_csv(const Dataset& data, const std::string& path);
Dataset read_csv(const std::string& path);

}  // namespace iwiv
