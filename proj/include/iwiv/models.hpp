#pragma once

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>
#include <variant>
#include <vector>

#include "iwiv/rng.hpp"

namespace iwiv {

/// Gaussian kernel features exp(-||x - center_u||^2 / (2 sigma2)), entries in (0, 1].
Eigen::VectorXd kernel_features(const Eigen::VectorXd& x,
                                const Eigen::MatrixXd& centers, double sigma2);

/// Row-wise kernel features for a batch: result(i, u) = K(X_i, center_u).
Eigen::MatrixXd kernel_feature_matrix(const Eigen::MatrixXd& X,
                                      const Eigen::MatrixXd& centers,
                                      double sigma2);

/// Median of pairwise squared distances, the usual bandwidth scale.
double median_sq_distance(const Eigen::MatrixXd& X, int max_points = 500);

// Linear-in-parameter model f(x) = beta . phi(x; sigma2) + beta0 with Gaussian
// kernel features anchored at training points.
struct GaussianKernelModel {
  Eigen::MatrixXd centers;  // m x d
  double sigma2 = 1.0;
  Eigen::VectorXd beta;     // m
  double beta0 = 0.0;

  int input_dim() const { return static_cast<int>(centers.cols()); }
  double forward(const Eigen::VectorXd& x) const;
  Eigen::VectorXd forward_batch(const Eigen::MatrixXd& X) const;
  /// d f / d (beta, beta0) = [phi(x), 1]; independent of the coefficients.
  Eigen::VectorXd grad_params(const Eigen::VectorXd& x) const;

  Eigen::VectorXd params() const;
  void set_params(const Eigen::VectorXd& p);
};

// Dense multilayer perceptron with leaky-ReLU hidden activations and a linear
// final layer.
class MlpModel {
 public:
  MlpModel() = default;
  /// dims = {input, hidden..., output}; zero-initialized parameters.
  explicit MlpModel(std::vector<int> dims, double leakiness = 0.2);
  /// He-style scaled-uniform weight init, zero biases, deterministic in seed.
  static MlpModel he_init(const std::vector<int>& dims, double leakiness,
                          std::uint64_t seed);

  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  const std::vector<int>& dims() const { return dims_; }
  double leakiness() const { return leakiness_; }
  int num_layers() const { return static_cast<int>(weights_.size()); }

  Eigen::MatrixXd& weight(int layer) { return weights_[static_cast<std::size_t>(layer)]; }
  const Eigen::MatrixXd& weight(int layer) const { return weights_[static_cast<std::size_t>(layer)]; }
  Eigen::VectorXd& bias(int layer) { return biases_[static_cast<std::size_t>(layer)]; }
  const Eigen::VectorXd& bias(int layer) const { return biases_[static_cast<std::size_t>(layer)]; }

  double forward(const Eigen::VectorXd& x) const;
  /// X is n x input_dim; returns the n scalar outputs (output_dim must be 1).
  Eigen::VectorXd forward_batch(const Eigen::MatrixXd& X) const;
  /// Raw pre-link outputs plus cached activations for backprop.
  Eigen::MatrixXd forward_layers(const Eigen::MatrixXd& X,
                                 std::vector<Eigen::MatrixXd>& pre) const;

  /// Gradient of sum_i u_i f(X_i) with respect to the flat parameter vector.
  Eigen::VectorXd weighted_param_grad(const Eigen::MatrixXd& X,
                                      const Eigen::VectorXd& u) const;
  Eigen::VectorXd grad_params(const Eigen::VectorXd& x) const;

  int param_count() const;
  Eigen::VectorXd params() const;
  void set_params(const Eigen::VectorXd& p);

 private:
  std::vector<int> dims_;
  double leakiness_ = 0.2;
  std::vector<Eigen::MatrixXd> weights_;  // layer l: dims[l+1] x dims[l]
  std::vector<Eigen::VectorXd> biases_;
};

// Per-column standardization whose effect can be folded back into an MLP's
// first layer, so fitted nets act on raw inputs. Constant columns are left
// untouched.
struct InputScaler {
  Eigen::RowVectorXd mu, sigma;

  explicit InputScaler(const Eigen::MatrixXd& X);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
  void absorb_into_first_layer(MlpModel& net) const;
};

using StructuralModel = std::variant<GaussianKernelModel, MlpModel>;

double forward(const StructuralModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd forward_batch(const StructuralModel& model, const Eigen::MatrixXd& X);
Eigen::VectorXd grad_params(const StructuralModel& model, const Eigen::VectorXd& x);
int param_count(const StructuralModel& model);
Eigen::VectorXd params(const StructuralModel& model);
void set_params(StructuralModel& model, const Eigen::VectorXd& p);

/// Self-describing JSON document (family tag, dims, flattened parameters).
nlohmann::json structural_to_json(const StructuralModel& model);
StructuralModel structural_from_json(const nlohmann::json& doc);

void save_structural(const StructuralModel& model, const std::string& path);
StructuralModel load_structural(const std::string& path);

}  // namespace iwiv
