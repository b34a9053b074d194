#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "iwiv/models.hpp"

using namespace iwiv;

namespace {

// Central finite differences of forward(model, x) in every parameter.
Eigen::VectorXd fd_grad(StructuralModel model, const Eigen::VectorXd& x,
                        double h = 1e-5) {
  const Eigen::VectorXd p0 = params(model);
  Eigen::VectorXd g(p0.size());
  for (Eigen::Index k = 0; k < p0.size(); ++k) {
    Eigen::VectorXd p = p0;
    p(k) = p0(k) + h;
    set_params(model, p);
    const double up = forward(model, x);
    p(k) = p0(k) - h;
    set_params(model, p);
    const double dn = forward(model, x);
    g(k) = (up - dn) / (2.0 * h);
  }
  return g;
}

double max_rel_err(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < got.size(); ++k) {
    const double scale = std::max(1.0, std::fabs(want(k)));
    worst = std::max(worst, std::fabs(got(k) - want(k)) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("kernel features hit their landmark values") {
  Eigen::MatrixXd centers(2, 2);
  centers << 0.0, 0.0, 1.0, 1.0;
  Eigen::VectorXd x(2);
  x << 0.0, 0.0;
  const double sigma2 = 0.7;
  const Eigen::VectorXd phi = kernel_features(x, centers, sigma2);
  CHECK(phi(0) == 1.0);  // x equals the first center

  // ||x - c||^2 = 2 sigma2 => entry exp(-1).
  Eigen::MatrixXd c2(1, 1);
  c2 << std::sqrt(2.0 * sigma2);
  Eigen::VectorXd x1(1);
  x1 << 0.0;
  CHECK(kernel_features(x1, c2, sigma2)(0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  // sigma2 -> large: all entries -> 1.
  const Eigen::VectorXd wide = kernel_features(x, centers, 1e12);
  CHECK(wide.minCoeff() > 0.999999);
  CHECK(wide.maxCoeff() <= 1.0);
}

TEST_CASE("kernel features stay in (0, 1] on fuzzed inputs") {
  // scales kept below the exp underflow cliff so positivity is observable
  Rng rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    const int d = 1 + rng.uniform_int(4);
    Eigen::MatrixXd centers(3, d);
    Eigen::VectorXd x(d);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < d; ++j) centers(i, j) = 1.5 * rng.normal();
    for (int j = 0; j < d; ++j) x(j) = 1.5 * rng.normal();
    const Eigen::VectorXd phi = kernel_features(x, centers, 1.0 + rng.uniform01());
    CHECK(phi.minCoeff() > 0.0);
    CHECK(phi.maxCoeff() <= 1.0);
  }
}

TEST_CASE("kernel model forward fixtures") {
  GaussianKernelModel k;
  k.centers = Eigen::MatrixXd::Zero(3, 2);
  k.sigma2 = 1.0;
  k.beta = Eigen::VectorXd::Zero(3);
  k.beta0 = 4.5;
  Eigen::VectorXd x(2);
  x << 0.3, -0.7;
  CHECK(k.forward(x) == 4.5);  // zero weights: constant beta0

  GaussianKernelModel single;
  single.centers = x.transpose();
  single.sigma2 = 2.0;
  single.beta = Eigen::VectorXd::Ones(1);
  single.beta0 = 0.0;
  CHECK(single.forward(x) == 1.0);  // phi at its own center is exp(0)

  // batch path agrees with the scalar path
  Eigen::MatrixXd X(4, 2);
  X << 0.0, 0.0, 1.0, -1.0, 0.3, -0.7, 2.0, 0.5;
  const Eigen::VectorXd batch = single.forward_batch(X);
  for (int i = 0; i < 4; ++i)
    CHECK(batch(i) == doctest::Approx(single.forward(X.row(i))).epsilon(1e-12));
}

TEST_CASE("kernel model gradient is [phi, 1]") {
  GaussianKernelModel k;
  k.centers = Eigen::MatrixXd::Random(4, 3);
  k.sigma2 = 0.8;
  k.beta = Eigen::VectorXd::Random(4);
  k.beta0 = -2.0;
  Eigen::VectorXd x = Eigen::VectorXd::Random(3);
  const Eigen::VectorXd g = k.grad_params(x);
  const Eigen::VectorXd phi = kernel_features(x, k.centers, k.sigma2);
  CHECK(g.head(4) == phi);
  CHECK(g(4) == 1.0);
}

TEST_CASE("mlp zero net maps everything to zero") {
  MlpModel net({3, 8, 8, 1});
  Eigen::VectorXd x(3);
  x << 1.0, -2.0, 0.5;
  CHECK(net.forward(x) == 0.0);
}

TEST_CASE("mlp batch forward equals per-row forward") {
  MlpModel net = MlpModel::he_init({2, 16, 16, 1}, 0.2, 9);
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(40, 2);
  const Eigen::VectorXd batch = net.forward_batch(X);
  for (int i = 0; i < 40; ++i)
    CHECK(batch(i) == doctest::Approx(net.forward(X.row(i))).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(2024);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int din = 1 + rng.uniform_int(3);
    StructuralModel model;
    if (rep % 2 == 0) {
      model = MlpModel::he_init({din, 6, 5, 1}, 0.2, rng.next_u64());
    } else {
      GaussianKernelModel k;
      const int m = 1 + rng.uniform_int(5);
      k.centers.resize(m, din);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < din; ++j) k.centers(i, j) = rng.normal();
      k.sigma2 = 0.5 + rng.uniform01();
      k.beta.resize(m);
      for (int i = 0; i < m; ++i) k.beta(i) = rng.normal();
      k.beta0 = rng.normal();
      model = k;
    }
    Eigen::VectorXd x(din);
    for (int j = 0; j < din; ++j) x(j) = rng.normal();
    const Eigen::VectorXd got = grad_params(model, x);
    const Eigen::VectorXd want = fd_grad(model, x);
    worst = std::max(worst, max_rel_err(got, want));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("weighted_param_grad is the u-weighted sum of per-row gradients") {
  MlpModel net = MlpModel::he_init({2, 5, 4, 1}, 0.2, 77);
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(6, 2);
  Eigen::VectorXd u(6);
  u << 0.5, -1.0, 2.0, 0.0, 1.5, -0.25;
  const Eigen::VectorXd got = net.weighted_param_grad(X, u);
  Eigen::VectorXd want = Eigen::VectorXd::Zero(net.param_count());
  for (int i = 0; i < 6; ++i) want += u(i) * net.grad_params(X.row(i));
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("parameter flatten/unflatten round-trips exactly") {
  MlpModel net = MlpModel::he_init({3, 7, 6, 1}, 0.2, 5);
  const Eigen::VectorXd p = net.params();
  MlpModel other({3, 7, 6, 1});
  other.set_params(p);
  CHECK(other.params() == p);
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(10, 3);
  CHECK(other.forward_batch(X) == net.forward_batch(X));

  GaussianKernelModel k;
  k.centers = Eigen::MatrixXd::Random(5, 2);
  k.sigma2 = 1.3;
  k.beta = Eigen::VectorXd::Random(5);
  k.beta0 = 0.77;
  GaussianKernelModel k2 = k;
  k2.set_params(k.params());
  CHECK(k2.params() == k.params());
}

TEST_CASE("dimension mismatches are rejected") {
  MlpModel net({3, 4, 1});
  Eigen::VectorXd x(2);
  x << 1.0, 2.0;
  CHECK_THROWS(net.forward(x));
  GaussianKernelModel k;
  k.centers = Eigen::MatrixXd::Zero(2, 3);
  k.sigma2 = 1.0;
  k.beta = Eigen::VectorXd::Zero(2);
  CHECK_THROWS(k.forward(x));
  CHECK_THROWS(kernel_features(x, k.centers, 1.0));
  CHECK_THROWS(kernel_features(x, Eigen::MatrixXd::Zero(2, 2), 0.0));
}

TEST_CASE("json serialization round-trips both families") {
  const std::string path = "test_models_roundtrip.json";

  MlpModel net = MlpModel::he_init({4, 9, 8, 1}, 0.2, 31);
  save_structural(StructuralModel(net), path);
  const StructuralModel back = load_structural(path);
  const auto& net2 = std::get<MlpModel>(back);
  CHECK(net2.dims() == net.dims());
  CHECK(net2.leakiness() == net.leakiness());
  CHECK(net2.params() == net.params());

  GaussianKernelModel k;
  k.centers = Eigen::MatrixXd::Random(6, 2);
  k.sigma2 = 0.9;
  k.beta = Eigen::VectorXd::Random(6);
  k.beta0 = -1.25;
  save_structural(StructuralModel(k), path);
  const StructuralModel kback = load_structural(path);
  const auto& k2 = std::get<GaussianKernelModel>(kback);
  CHECK(k2.centers == k.centers);
  CHECK(k2.sigma2 == k.sigma2);
  CHECK(k2.beta == k.beta);
  CHECK(k2.beta0 == k.beta0);
  std::remove(path.c_str());
}
