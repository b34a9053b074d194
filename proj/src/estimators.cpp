#include "iwiv/estimators.hpp"

#include <cmath>

namespace iwiv {

std::string to_string(Method method) {
  switch (method) {
    case Method::IwMm: return "iw_mm";
    case Method::IwLs: return "iw_ls";
    case Method::IwKrnl: return "iw_krnl";
    case Method::Ls: return "ls";
    case Method::IvJust: return "iv_just";
    case Method::TwoSls: return "2sls";
  }
  throw std::logic_error("unknown Method");
}

Method method_from_string(const std::string& name) {
  if (name == "iw_mm") return Method::IwMm;
  if (name == "iw_ls") return Method::IwLs;
  if (name == "iw_krnl") return Method::IwKrnl;
  if (name == "ls") return Method::Ls;
  if (name == "iv_just") return Method::IvJust;
  if (name == "2sls") return Method::TwoSls;
  throw std::invalid_argument("unknown method: " + name);
}

void EstimatorConfig::validate() const {
  if (eta < 0.0) throw std::invalid_argument("EstimatorConfig: eta must be >= 0");
  if (zeta < 0.0) throw std::invalid_argument("EstimatorConfig: zeta must be >= 0");
  if ((method == Method::IwKrnl) && !(sigma2 > 0.0) && !cv)
    throw std::invalid_argument("EstimatorConfig: sigma2 must be positive");
  if (method == Method::TwoSls && (sieve_degree < 1 || sieve_degree > 3))
    throw std::invalid_argument("EstimatorConfig: sieve_degree must be 1, 2, or 3");
}

std::string method_label(const EstimatorConfig& cfg) {
  if (cfg.method == Method::TwoSls)
    return "2sls_d" + std::to_string(cfg.sieve_degree);
  return to_string(cfg.method);
}

Eigen::MatrixXd sieve_features(const Eigen::MatrixXd& X, int degree) {
  if (degree < 1) throw std::invalid_argument("sieve_features: degree must be >= 1");
  const Eigen::Index n = X.rows(), d = X.cols();
  Eigen::MatrixXd out(n, 1 + d * degree);
  out.col(0).setOnes();
  out.middleCols(1, d) = X;
  for (int k = 2; k <= degree; ++k)
    out.middleCols(1 + (k - 1) * d, d) =
        out.middleCols(1 + (k - 2) * d, d).cwiseProduct(X);
  return out;
}

double SieveModel::predict(const Eigen::VectorXd& x) const {
  return predict_batch(x.transpose())(0);
}

Eigen::VectorXd SieveModel::predict_batch(const Eigen::MatrixXd& X) const {
  const Eigen::MatrixXd feats = sieve_features(X, degree);
  if (feats.cols() != coef.size())
    throw std::invalid_argument("SieveModel: coefficient/feature mismatch");
  return feats * coef;
}

double FitResult::predict(const Eigen::VectorXd& x) const {
  if (model) return forward(*model, x);
  if (sieve) return sieve->predict(x);
  throw std::logic_error("FitResult::predict: empty result");
}

Eigen::VectorXd FitResult::predict_batch(const Eigen::MatrixXd& X) const {
  if (model) return forward_batch(*model, X);
  if (sieve) return sieve->predict_batch(X);
  throw std::logic_error("FitResult::predict_batch: empty result");
}

double iwmm_objective_given(const Eigen::VectorXd& residuals, const Eigen::MatrixXd& R) {
  const double n = static_cast<double>(residuals.size());
  const Eigen::VectorXd m = R.transpose() * residuals / n;
  return m.squaredNorm() / n;
}

double iwmm_objective(const StructuralModel& f, const RatioModel& r, const Dataset& data) {
  const Eigen::VectorXd e = data.y - forward_batch(f, data.x);
  return iwmm_objective_given(e, ratio_matrix(r, data));
}

double iwls_objective_given(const Eigen::VectorXd& residuals, const Eigen::MatrixXd& R, double eta) {
  const double n = static_cast<double>(residuals.size());
  const Eigen::VectorXd m = R.transpose() * residuals / n;
  return residuals.squaredNorm() / n + eta * m.squaredNorm();
}

double iwls_objective(const StructuralModel& f, const RatioModel& r, const Dataset& data, double eta) {
  if (eta < 0.0) throw std::invalid_argument("iwls_objective: eta must be >= 0");
  const Eigen::VectorXd e = data.y - forward_batch(f, data.x);
  return iwls_objective_given(e, ratio_matrix(r, data), eta);
}

double projected_mse_given(const Eigen::VectorXd& f_err, const Eigen::MatrixXd& R) {
  const double n = static_cast<double>(f_err.size());
  const Eigen::VectorXd m = R.transpose() * f_err / n;
  return m.squaredNorm() / n;
}

double projected_mse_empirical(const StructuralModel& f, const RatioModel& r, const Dataset& data) {
  if (!data.f_true)
    throw std::invalid_argument("projected_mse_empirical: dataset has no f_true");
  const Eigen::VectorXd d = *data.f_true - forward_batch(f, data.x);
  return projected_mse_given(d, ratio_matrix(r, data));
}

namespace {

Eigen::MatrixXd pick_centers(const Dataset& data, int kernel_centers) {
  if (kernel_centers < 0 || kernel_centers >= data.n()) return data.x;
  return data.x.topRows(kernel_centers);
}

// Shared Adam driver for the three neural objectives. obj_fn maps the
// residual vector e = y - f(X) to (objective, d objective / d e); both are in
// the standardized-outcome scale inside the loop and rescaled by sd(y)^2 on
// the way out (the objectives are quadratic in e, so the map is exact).
template <class ObjFn>
FitResult fit_mlp(const Dataset& data, const EstimatorConfig& cfg, ObjFn&& obj_fn) {
  data.validate();
  std::vector<int> dims;
  dims.push_back(data.dx());
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(1);
  MlpModel net = MlpModel::he_init(dims, cfg.leakiness, cfg.seed);

  const InputScaler scaler(data.x);
  const Eigen::MatrixXd xs = scaler.apply(data.x);
  const double y_mu = data.y.mean();
  double y_sd = std::sqrt((data.y.array() - y_mu).square().mean());
  if (!(y_sd > 1e-12)) y_sd = 1.0;
  const Eigen::VectorXd ys = (data.y.array() - y_mu) / y_sd;

  MlpModel work = net;
  Eigen::VectorXd de;
  const auto eval_fn = [&](const Eigen::VectorXd& p) {
    work.set_params(p);
    const Eigen::VectorXd e = ys - work.forward_batch(xs);
    Eigen::VectorXd unused;
    return obj_fn(e, false, unused);
  };
  const auto grad_fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& grad, Rng&) {
    work.set_params(p);
    const Eigen::VectorXd e = ys - work.forward_batch(xs);
    const double obj = obj_fn(e, true, de);
    grad = work.weighted_param_grad(xs, -de);
    return obj;
  };

  MinimizeResult res = minimize(grad_fn, eval_fn, net.params(), cfg.opt);
  net.set_params(res.params);

  // fold the standardization into the weights: f(x) = y_sd * net(xs) + y_mu
  scaler.absorb_into_first_layer(net);
  const int last = net.num_layers() - 1;
  net.weight(last) *= y_sd;
  net.bias(last) = y_sd * net.bias(last) + Eigen::VectorXd::Constant(1, y_mu);

  FitResult out;
  out.model = StructuralModel(std::move(net));
  out.objective_trace = std::move(res.trace);
  for (double& v : out.objective_trace) v *= y_sd * y_sd;
  out.diagnostics["final_objective"] = res.best_objective * y_sd * y_sd;
  out.diagnostics["epochs"] = static_cast<double>(out.objective_trace.size() - 1);
  return out;
}

}  // namespace

FitResult fit_iwmm(const Dataset& data, const RatioModel& ratio,
                   const EstimatorConfig& cfg, const Eigen::MatrixXd* R) {
  cfg.validate();
  Eigen::MatrixXd local;
  if (R == nullptr) {
    local = ratio_matrix(ratio, data);
    R = &local;
  }
  const double n = static_cast<double>(data.n());
  FitResult out = fit_mlp(
      data, cfg,
      [&](const Eigen::VectorXd& e, bool want_grad, Eigen::VectorXd& de) {
        const Eigen::VectorXd m = R->transpose() * e / n;
        if (want_grad) de = (2.0 / (n * n)) * (*R * m);
        return m.squaredNorm() / n;
      });
  out.diagnostics["moment_norm"] =
      std::sqrt(out.diagnostics["final_objective"]);
  return out;
}

FitResult fit_iwls(const Dataset& data, const RatioModel& ratio,
                   const EstimatorConfig& cfg, const Eigen::MatrixXd* R) {
  cfg.validate();
  Eigen::MatrixXd local;
  if (R == nullptr) {
    local = ratio_matrix(ratio, data);
    R = &local;
  }
  const double n = static_cast<double>(data.n());
  const double eta = cfg.eta;
  return fit_mlp(
      data, cfg,
      [&](const Eigen::VectorXd& e, bool want_grad, Eigen::VectorXd& de) {
        const Eigen::VectorXd m = R->transpose() * e / n;
        if (want_grad) de = (2.0 / n) * e + (2.0 * eta / n) * (*R * m);
        return e.squaredNorm() / n + eta * m.squaredNorm();
      });
}

FitResult fit_ls(const Dataset& data, const EstimatorConfig& cfg, bool kernel_model) {
  cfg.validate();
  if (kernel_model) {
    data.validate();
    GaussianKernelModel k;
    k.centers = pick_centers(data, cfg.kernel_centers);
    k.sigma2 = cfg.sigma2;
    const Eigen::Index n = data.n(), m = k.centers.rows();
    Eigen::MatrixXd design(n, m + 1);
    if (m > 0) design.leftCols(m) = kernel_feature_matrix(data.x, k.centers, k.sigma2);
    design.col(m).setOnes();
    Eigen::VectorXd mask = Eigen::VectorXd::Ones(m + 1);
    mask(m) = 0.0;  // intercept unpenalized
    const Eigen::VectorXd theta = solve_ridge_normal_equations(
        design, data.y, static_cast<double>(n) * cfg.zeta, mask);
    k.beta = theta.head(m);
    k.beta0 = theta(m);
    FitResult out;
    const Eigen::VectorXd e = data.y - design * theta;
    out.diagnostics["final_objective"] = e.squaredNorm() / static_cast<double>(n);
    out.objective_trace = {out.diagnostics["final_objective"]};
    out.model = StructuralModel(std::move(k));
    return out;
  }
  const double n = static_cast<double>(data.n());
  return fit_mlp(data, cfg,
                 [&](const Eigen::VectorXd& e, bool want_grad, Eigen::VectorXd& de) {
                   if (want_grad) de = (2.0 / n) * e;
                   return e.squaredNorm() / n;
                 });
}

namespace {

struct KernelHyper {
  double sigma2;
  double zeta;
};

// Closed-form moment-objective minimizer for fixed hyperparameters: the
// objective is quadratic in theta = (beta, beta0), so solve
// (A^T A + n zeta M) theta = A^T b with A = R^T [Phi 1]/n, b = R^T y/n.
GaussianKernelModel solve_iw_krnl(const Dataset& data, const RatioModel& ratio,
                                  const Eigen::MatrixXd* R, double sigma2, double zeta,
                                  int kernel_centers) {
  Eigen::MatrixXd local;
  if (R == nullptr) {
    local = ratio_matrix(ratio, data);
    R = &local;
  }
  const Eigen::Index n = data.n();
  const double nn = static_cast<double>(n);
  GaussianKernelModel k;
  k.centers = pick_centers(data, kernel_centers);
  k.sigma2 = sigma2;
  const Eigen::Index m = k.centers.rows();
  Eigen::MatrixXd design(n, m + 1);
  if (m > 0) design.leftCols(m) = kernel_feature_matrix(data.x, k.centers, sigma2);
  design.col(m).setOnes();
  const Eigen::MatrixXd A = R->transpose() * design / nn;
  const Eigen::VectorXd b = R->transpose() * data.y / nn;
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(m + 1);
  mask(m) = 0.0;
  const Eigen::VectorXd theta =
      solve_ridge_normal_equations(A, b, nn * zeta, mask);
  k.beta = theta.head(m);
  k.beta0 = theta(m);
  return k;
}

}  // namespace

FitResult fit_iw_krnl(const Dataset& data, const RatioModel& ratio,
                      const EstimatorConfig& cfg, const Eigen::MatrixXd* R) {
  cfg.validate();
  data.validate();
  Eigen::MatrixXd local;
  if (R == nullptr) {
    local = ratio_matrix(ratio, data);
    R = &local;
  }
  double sigma2 = cfg.sigma2, zeta = cfg.zeta;
  if (cfg.cv) {
    std::vector<double> s_grid = cfg.sigma2_grid, z_grid = cfg.zeta_grid;
    if (s_grid.empty()) {
      const double med = median_sq_distance(data.x);
      s_grid = {0.25 * med, med, 4.0 * med};
    }
    if (z_grid.empty()) z_grid = {1e-8, 1e-6, 1e-4, 1e-2};
    std::vector<KernelHyper> grid;
    for (double s : s_grid)
      for (double z : z_grid) grid.push_back({s, z});
    // Held-out score: the moment objective itself, the only criterion
    // available without f*.
    const auto choice = k_fold_cv(
        data, grid,
        [&](const Dataset& train, const KernelHyper& h) {
          return solve_iw_krnl(train, ratio, nullptr, h.sigma2, h.zeta,
                                cfg.kernel_centers);
        },
        [&](const GaussianKernelModel& model, const Dataset& heldout) {
          return iwmm_objective(StructuralModel(model), ratio, heldout);
        },
        cfg.cv_folds, cfg.seed);
    sigma2 = choice.best.sigma2;
    zeta = choice.best.zeta;
  }
  GaussianKernelModel k = solve_iw_krnl(data, ratio, R, sigma2, zeta,
                                        cfg.kernel_centers);

  FitResult out;
  const Eigen::VectorXd e = data.y - k.forward_batch(data.x);
  out.diagnostics["final_objective"] = iwmm_objective_given(e, *R);
  out.diagnostics["sigma2"] = sigma2;
  out.diagnostics["zeta"] = zeta;
  out.objective_trace = {out.diagnostics["final_objective"]};
  out.model = StructuralModel(std::move(k));
  return out;
}

Eigen::VectorXd fit_iv_just(const Dataset& data) {
  data.validate();
  if (data.dx() != data.dz())
    throw std::invalid_argument("fit_iv_just: need d_x == d_z (just-identified)");
  const Eigen::Index n = data.n();
  const double nn = static_cast<double>(n);
  Eigen::MatrixXd xt(n, data.dx() + 1), zt(n, data.dz() + 1);
  xt.col(0).setOnes();
  xt.rightCols(data.dx()) = data.x;
  zt.col(0).setOnes();
  zt.rightCols(data.dz()) = data.z;
  const Eigen::MatrixXd zx = zt.transpose() * xt / nn;
  const Eigen::VectorXd zy = zt.transpose() * data.y / nn;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(zx);
  if (!lu.isInvertible() || lu.rcond() < 1e-10)
    throw FitError("fit_iv_just: instrument moment matrix is (near-)singular; "
                   "instruments too weak");
  return lu.solve(zy);
}

Eigen::VectorXd fit_2sls(const Dataset& data, int sieve_degree) {
  data.validate();
  if (sieve_degree < 1 || sieve_degree > 3)
    throw std::invalid_argument("fit_2sls: sieve_degree must be 1, 2, or 3");
  const Eigen::MatrixXd psi = sieve_features(data.x, sieve_degree);
  const Eigen::MatrixXd inst = sieve_features(data.z, sieve_degree);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> first(inst);
  if (first.rank() < inst.cols())
    throw FitError("fit_2sls: first-stage instrument features are rank-deficient");
  const Eigen::MatrixXd fitted = inst * first.solve(psi);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> second(fitted);
  if (second.rank() < fitted.cols())
    throw FitError("fit_2sls: second-stage design is rank-deficient "
                   "(weak instruments for some sieve terms)");
  return second.solve(data.y);
}

FitResult fit_estimator(const Dataset& data, const EstimatorConfig& cfg,
                        const RatioModel* ratio, const Eigen::MatrixXd* R) {
  cfg.validate();
  const bool needs_ratio = cfg.method == Method::IwMm ||
                           cfg.method == Method::IwLs ||
                           cfg.method == Method::IwKrnl;
  if (needs_ratio && ratio == nullptr)
    throw std::invalid_argument("fit_estimator: method requires a fitted ratio model");
  switch (cfg.method) {
    case Method::IwMm: return fit_iwmm(data, *ratio, cfg, R);
    case Method::IwLs: return fit_iwls(data, *ratio, cfg, R);
    case Method::IwKrnl: return fit_iw_krnl(data, *ratio, cfg, R);
    case Method::Ls: return fit_ls(data, cfg);
    case Method::IvJust: {
      FitResult out;
      out.sieve = SieveModel{1, fit_iv_just(data)};
      return out;
    }
    case Method::TwoSls: {
      FitResult out;
      out.sieve = SieveModel{cfg.sieve_degree, fit_2sls(data, cfg.sieve_degree)};
      return out;
    }
  }
  throw std::logic_error("unknown Method");
}

}  // namespace iwiv
