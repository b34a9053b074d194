#include "iwiv/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace iwiv {

using nlohmann::json;

Eigen::VectorXd kernel_features(const Eigen::VectorXd& x,
                                const Eigen::MatrixXd& centers, double sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("kernel_features: sigma2 must be positive");
  if (centers.cols() != x.size())
    throw std::invalid_argument("kernel_features: dimension mismatch");
  const Eigen::VectorXd sq =
      (centers.rowwise() - x.transpose()).rowwise().squaredNorm();
  return (-sq / (2.0 * sigma2)).array().exp().matrix();
}

Eigen::MatrixXd kernel_feature_matrix(const Eigen::MatrixXd& X,
                                      const Eigen::MatrixXd& centers,
                                      double sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("kernel_feature_matrix: sigma2 must be positive");
  if (centers.cols() != X.cols())
    throw std::invalid_argument("kernel_feature_matrix: dimension mismatch");
  // ||x - c||^2 = ||x||^2 - 2 x.c + ||c||^2, one GEMM for the cross term.
  const Eigen::VectorXd xn = X.rowwise().squaredNorm();
  const Eigen::VectorXd cn = centers.rowwise().squaredNorm();
  Eigen::MatrixXd sq = -2.0 * (X * centers.transpose());
  sq.colwise() += xn;
  sq.rowwise() += cn.transpose();
  return (sq.array().max(0.0) * (-1.0 / (2.0 * sigma2))).exp().matrix();
}

double median_sq_distance(const Eigen::MatrixXd& X, int max_points) {
  const Eigen::Index n = std::min<Eigen::Index>(X.rows(), max_points);
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      d.push_back((X.row(i) - X.row(j)).squaredNorm());
  if (d.empty()) return 1.0;
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  const double med = *mid;
  return med > 0.0 ? med : 1.0;
}

double GaussianKernelModel::forward(const Eigen::VectorXd& x) const {
  if (centers.rows() == 0) return beta0;
  return beta.dot(kernel_features(x, centers, sigma2)) + beta0;
}

Eigen::VectorXd GaussianKernelModel::forward_batch(const Eigen::MatrixXd& X) const {
  if (centers.rows() == 0)
    return Eigen::VectorXd::Constant(X.rows(), beta0);
  return ((kernel_feature_matrix(X, centers, sigma2) * beta).array() + beta0).matrix();
}

Eigen::VectorXd GaussianKernelModel::grad_params(const Eigen::VectorXd& x) const {
  Eigen::VectorXd g(beta.size() + 1);
  if (centers.rows() > 0) g.head(beta.size()) = kernel_features(x, centers, sigma2);
  g(beta.size()) = 1.0;
  return g;
}

Eigen::VectorXd GaussianKernelModel::params() const {
  Eigen::VectorXd p(beta.size() + 1);
  p.head(beta.size()) = beta;
  p(beta.size()) = beta0;
  return p;
}

void GaussianKernelModel::set_params(const Eigen::VectorXd& p) {
  if (p.size() != beta.size() + 1)
    throw std::invalid_argument("GaussianKernelModel::set_params: size mismatch");
  beta = p.head(p.size() - 1);
  beta0 = p(p.size() - 1);
}

MlpModel::MlpModel(std::vector<int> dims, double leakiness)
    : dims_(std::move(dims)), leakiness_(leakiness) {
  if (dims_.size() < 2) throw std::invalid_argument("MlpModel: need >= 2 dims");
  for (int d : dims_)
    if (d < 1) throw std::invalid_argument("MlpModel: dims must be positive");
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    weights_.emplace_back(Eigen::MatrixXd::Zero(dims_[l + 1], dims_[l]));
    biases_.emplace_back(Eigen::VectorXd::Zero(dims_[l + 1]));
  }
}

MlpModel MlpModel::he_init(const std::vector<int>& dims, double leakiness,
                           std::uint64_t seed) {
  MlpModel net(dims, leakiness);
  Rng rng(mix_seed(seed, 0x4E17));
  for (int l = 0; l < net.num_layers(); ++l) {
    Eigen::MatrixXd& w = net.weight(l);
    const double limit = std::sqrt(6.0 / static_cast<double>(w.cols()));
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        w(r, c) = rng.uniform(-limit, limit);
  }
  return net;
}

namespace {

inline void leaky_inplace(Eigen::MatrixXd& a, double alpha) {
  a = (a.array().max(0.0) + alpha * a.array().min(0.0)).matrix();
}

}  // namespace

Eigen::MatrixXd MlpModel::forward_layers(const Eigen::MatrixXd& X,
                                         std::vector<Eigen::MatrixXd>& pre) const {
  if (X.cols() != dims_.front())
    throw std::invalid_argument("MlpModel: input dimension mismatch");
  pre.clear();
  pre.reserve(weights_.size());
  Eigen::MatrixXd a = X;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd z = a * weights_[l].transpose();
    z.rowwise() += biases_[l].transpose();
    pre.push_back(z);
    if (l + 1 < weights_.size()) {
      leaky_inplace(z, leakiness_);
      a = std::move(z);
    } else {
      a = std::move(z);
    }
  }
  return a;
}

Eigen::VectorXd MlpModel::forward_batch(const Eigen::MatrixXd& X) const {
  if (output_dim() != 1)
    throw std::invalid_argument("MlpModel::forward_batch: output_dim must be 1");
  std::vector<Eigen::MatrixXd> pre;
  return forward_layers(X, pre).col(0);
}

double MlpModel::forward(const Eigen::VectorXd& x) const {
  return forward_batch(x.transpose())(0);
}

Eigen::VectorXd MlpModel::weighted_param_grad(const Eigen::MatrixXd& X,
                                              const Eigen::VectorXd& u) const {
  if (X.rows() != u.size())
    throw std::invalid_argument("weighted_param_grad: row count mismatch");
  const std::size_t L = weights_.size();
  // Recompute activations (post-activation outputs per layer).
  std::vector<Eigen::MatrixXd> act(L);  // act[l] = input to layer l
  std::vector<Eigen::MatrixXd> pre(L);
  {
    Eigen::MatrixXd a = X;
    for (std::size_t l = 0; l < L; ++l) {
      act[l] = a;
      Eigen::MatrixXd z = a * weights_[l].transpose();
      z.rowwise() += biases_[l].transpose();
      pre[l] = z;
      if (l + 1 < L) {
        leaky_inplace(z, leakiness_);
        a = std::move(z);
      }
    }
  }

  std::vector<Eigen::MatrixXd> grad_w(L);
  std::vector<Eigen::VectorXd> grad_b(L);
  Eigen::MatrixXd delta = u;  // n x dims.back(), linear final layer
  for (std::size_t l = L; l-- > 0;) {
    grad_w[l].noalias() = delta.transpose() * act[l];
    grad_b[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd back = delta * weights_[l];
      const Eigen::ArrayXXd slope =
          (pre[l - 1].array() >= 0.0).cast<double>() +
          leakiness_ * (pre[l - 1].array() < 0.0).cast<double>();
      delta = (back.array() * slope).matrix();
    }
  }

  Eigen::VectorXd flat(param_count());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const Eigen::Index wn = grad_w[l].size();
    flat.segment(off, wn) = Eigen::Map<const Eigen::VectorXd>(grad_w[l].data(), wn);
    off += wn;
    flat.segment(off, grad_b[l].size()) = grad_b[l];
    off += grad_b[l].size();
  }
  return flat;
}

Eigen::VectorXd MlpModel::grad_params(const Eigen::VectorXd& x) const {
  return weighted_param_grad(x.transpose(), Eigen::VectorXd::Ones(1));
}

int MlpModel::param_count() const {
  int total = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l)
    total += static_cast<int>(weights_[l].size() + biases_[l].size());
  return total;
}

Eigen::VectorXd MlpModel::params() const {
  Eigen::VectorXd flat(param_count());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Eigen::Index wn = weights_[l].size();
    flat.segment(off, wn) = Eigen::Map<const Eigen::VectorXd>(weights_[l].data(), wn);
    off += wn;
    flat.segment(off, biases_[l].size()) = biases_[l];
    off += biases_[l].size();
  }
  return flat;
}

void MlpModel::set_params(const Eigen::VectorXd& p) {
  if (p.size() != param_count())
    throw std::invalid_argument("MlpModel::set_params: size mismatch");
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Eigen::Index wn = weights_[l].size();
    Eigen::Map<Eigen::VectorXd>(weights_[l].data(), wn) = p.segment(off, wn);
    off += wn;
    biases_[l] = p.segment(off, biases_[l].size());
    off += biases_[l].size();
  }
}

InputScaler::InputScaler(const Eigen::MatrixXd& X) {
  mu = X.colwise().mean();
  sigma = ((X.rowwise() - mu).array().square().colwise().mean()).sqrt();
  for (Eigen::Index j = 0; j < sigma.size(); ++j)
    if (!(sigma(j) > 1e-12)) sigma(j) = 1.0;
}

Eigen::MatrixXd InputScaler::apply(const Eigen::MatrixXd& X) const {
  return (X.rowwise() - mu).array().rowwise() / sigma.array();
}

void InputScaler::absorb_into_first_layer(MlpModel& net) const {
  Eigen::MatrixXd& w = net.weight(0);
  net.bias(0) -= w * (mu.array() / sigma.array()).matrix().transpose();
  w = w.array().rowwise() / sigma.array();
}

double forward(const StructuralModel& model, const Eigen::VectorXd& x) {
  return std::visit([&](const auto& m) { return m.forward(x); }, model);
}

Eigen::VectorXd forward_batch(const StructuralModel& model, const Eigen::MatrixXd& X) {
  return std::visit([&](const auto& m) { return m.forward_batch(X); }, model);
}

Eigen::VectorXd grad_params(const StructuralModel& model, const Eigen::VectorXd& x) {
  return std::visit([&](const auto& m) { return m.grad_params(x); }, model);
}

int param_count(const StructuralModel& model) {
  if (const auto* k = std::get_if<GaussianKernelModel>(&model))
    return static_cast<int>(k->beta.size()) + 1;
  return std::get<MlpModel>(model).param_count();
}

Eigen::VectorXd params(const StructuralModel& model) {
  return std::visit([](const auto& m) { return m.params(); }, model);
}

void set_params(StructuralModel& model, const Eigen::VectorXd& p) {
  std::visit([&](auto& m) { m.set_params(p); }, model);
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& doc, Eigen::Index cols_hint = -1) {
  const Eigen::Index rows = static_cast<Eigen::Index>(doc.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(doc[0].size()) : std::max<Eigen::Index>(cols_hint, 0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = doc[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
  return m;
}

}  // namespace

json structural_to_json(const StructuralModel& model) {
  json doc;
  if (const auto* k = std::get_if<GaussianKernelModel>(&model)) {
    doc["family"] = "gaussian_kernel";
    doc["sigma2"] = k->sigma2;
    doc["beta0"] = k->beta0;
    doc["beta"] = std::vector<double>(k->beta.data(), k->beta.data() + k->beta.size());
    doc["centers"] = matrix_to_json(k->centers);
    doc["input_dim"] = k->input_dim();
  } else {
    const auto& net = std::get<MlpModel>(model);
    doc["family"] = "mlp";
    doc["dims"] = net.dims();
    doc["leakiness"] = net.leakiness();
    const Eigen::VectorXd p = net.params();
    doc["params"] = std::vector<double>(p.data(), p.data() + p.size());
  }
  return doc;
}

StructuralModel structural_from_json(const json& doc) {
  const std::string family = doc.at("family").get<std::string>();
  if (family == "gaussian_kernel") {
    GaussianKernelModel k;
    k.sigma2 = doc.at("sigma2").get<double>();
    k.beta0 = doc.at("beta0").get<double>();
    const auto beta = doc.at("beta").get<std::vector<double>>();
    k.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    k.centers = matrix_from_json(doc.at("centers"), doc.value("input_dim", 0));
    return k;
  }
  if (family == "mlp") {
    MlpModel net(doc.at("dims").get<std::vector<int>>(), doc.at("leakiness").get<double>());
    const auto flat = doc.at("params").get<std::vector<double>>();
    net.set_params(Eigen::Map<const Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size())));
    return net;
  }
  throw std::runtime_error("structural_from_json: unknown family '" + family + "'");
}

void save_structural(const StructuralModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << structural_to_json(model).dump(2) << '\n';
}

StructuralModel load_structural(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  json doc = json::parse(in);
  return structural_from_json(doc);
}

}  // namespace iwiv
