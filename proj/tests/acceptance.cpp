// Acceptance suite: one check per numbered criterion, each printed as a
// PASS/FAIL line with its runtime. Exit status is the number of failures.
//
// Usage: acceptance [id...]   (no arguments = run everything)

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "iwiv/bench.hpp"
#include "iwiv/datagen.hpp"
#include "iwiv/density_ratio.hpp"
#include "iwiv/estimators.hpp"
#include "test_util.hpp"

using namespace iwiv;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double softplus_inv(double c) { return std::log(std::expm1(c)); }

RatioModel constant_ratio(double c, int din) {
  MlpModel net({din, 4, 1});
  net.bias(1).setConstant(softplus_inv(c));
  return RatioModel{net, 0.0, 20.0};
}

Dataset discrete_data(int n, std::uint64_t seed) {
  Dataset d;
  d.y.resize(n);
  d.x.resize(n, 0);
  d.z.resize(n, 1);
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    d.y(i) = (u < 0.5) ? 0.0 : 1.0;
    d.z(i, 0) = (u < 0.4 || (u >= 0.5 && u < 0.6)) ? 0.0 : 1.0;
  }
  return d;
}

Dataset independent_data(int n, std::uint64_t seed) {
  Dataset d;
  d.y.resize(n);
  d.x.resize(n, 0);
  d.z.resize(n, 1);
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    d.y(i) = rng.normal();
    d.z(i, 0) = rng.normal();
  }
  return d;
}

Dataset gaussian_pair_data(int n, double rho, std::uint64_t seed) {
  Dataset d;
  d.y.resize(n);
  d.x.resize(n, 0);
  d.z.resize(n, 1);
  Rng rng(seed);
  const double c = std::sqrt(1.0 - rho * rho);
  for (int i = 0; i < n; ++i) {
    const double g1 = rng.normal();
    d.y(i) = g1;
    d.z(i, 0) = rho * g1 + c * rng.normal();
  }
  return d;
}

double gaussian_ratio(double w, double z, double rho) {
  const double s2 = 1.0 - rho * rho;
  return std::exp(0.5 * w * w - (w - rho * z) * (w - rho * z) / (2.0 * s2)) /
         std::sqrt(s2);
}

Dataset linear_iv_data(int n, double slope, double endo, std::uint64_t seed) {
  Dataset d;
  d.y.resize(n);
  d.x.resize(n, 1);
  d.z.resize(n, 1);
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const double g = rng.normal();
    const double u = endo * g + std::sqrt(1.0 - endo * endo) * rng.normal();
    const double z = rng.normal();
    d.x(i, 0) = z + u;
    d.z(i, 0) = z;
    d.y(i) = slope * d.x(i, 0) + g;
  }
  return d;
}

RatioFitConfig oracle_ratio_config(std::uint64_t seed) {
  RatioFitConfig cfg;
  cfg.seed = seed;
  cfg.hidden = {64, 64};
  cfg.epochs = 80;
  cfg.patience = 20;
  return cfg;
}

// --- criteria -------------------------------------------------------------

// 1. Fitted ratio matches the brute-force 2x2 table within 0.1, 3 seeds.
Outcome criterion_discrete_oracle() {
  const double analytic[2][2] = {{1.6, 0.4}, {0.4, 1.6}};
  double worst = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const Dataset data = discrete_data(4000, 1000 + seed);
    RatioFitConfig rcfg = oracle_ratio_config(seed);
    rcfg.epochs = 100;
    rcfg.batch_pairs = 512;
    rcfg.weight_decay = 3e-4;
    const RatioModel fit = fit_ratio(data, rcfg);
    for (int w = 0; w < 2; ++w)
      for (int z = 0; z < 2; ++z) {
        Eigen::VectorXd wv(1), zv(1);
        wv << static_cast<double>(w);
        zv << static_cast<double>(z);
        worst = std::max(worst, std::fabs(fit.evaluate(wv, zv) - analytic[w][z]));
      }
  }
  std::ostringstream msg;
  msg << "max |r_hat - r*| = " << worst << " (tolerance 0.1)";
  return {worst < 0.1, msg.str()};
}

// 2. Independent (W, Z): r_hat near 1 held out, unit mass.
Outcome criterion_independence() {
  const Dataset data = independent_data(2000, 77);
  Eigen::MatrixXd R;
  const RatioModel fit = fit_ratio(data, oracle_ratio_config(5), &R);
  const Dataset held = independent_data(500, 9999);
  const Eigen::MatrixXd H = evaluate_pairwise(fit, held.w_matrix(), held.z);
  const double msd = (H.array() - 1.0).square().mean();
  const double mass = ratio_mass_from_matrix(R);
  std::ostringstream msg;
  msg << "held-out msd from 1 = " << msd << " (< 0.05), mass = " << mass
      << " (in [0.9, 1.1])";
  return {msd < 0.05 && mass > 0.9 && mass < 1.1, msg.str()};
}

// 3. Gaussian ratio: held-out L2(PxQ) error shrinks from n=500 to n=8000.
Outcome criterion_gaussian_consistency() {
  const double rho = 0.5;
  Rng grid_rng(31337);
  const int m = 300;
  Eigen::MatrixXd W(m, 1), Z(m, 1), truth(m, m);
  for (int i = 0; i < m; ++i) {
    W(i, 0) = grid_rng.normal();
    Z(i, 0) = grid_rng.normal();
  }
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) truth(i, j) = gaussian_ratio(W(i, 0), Z(j, 0), rho);

  const auto heldout_err = [&](const RatioModel& model) {
    const Eigen::MatrixXd H = evaluate_pairwise(model, W, Z);
    return (H - truth).array().square().mean();
  };

  int ok = 0;
  std::ostringstream msg;
  for (std::uint64_t seed : {11, 12, 13}) {
    const RatioModel small =
        fit_ratio(gaussian_pair_data(500, rho, 100 + seed), oracle_ratio_config(seed));
    const RatioModel large =
        fit_ratio(gaussian_pair_data(8000, rho, 200 + seed), oracle_ratio_config(seed));
    const double e_small = heldout_err(small), e_large = heldout_err(large);
    if (e_large < e_small) ++ok;
    msg << "[seed " << seed << ": " << e_small << " -> " << e_large << "] ";
  }
  msg << ok << "/3 improved";
  return {ok == 3, msg.str()};
}

// 4. LSIF risk identities for constant models.
Outcome criterion_risk_identities() {
  const Dataset data = independent_data(64, 5);
  double worst = 0.0;
  for (double c : {0.25, 0.5, 1.0, 1.5, 2.0}) {
    const double got = lsif_empirical_risk(constant_ratio(c, 2), data);
    worst = std::max(worst, std::fabs(got - (-c + 0.5 * c * c)));
  }
  const double at_one = lsif_empirical_risk(constant_ratio(1.0, 2), data);
  const bool min_ok = std::fabs(at_one - (-0.5)) < 1e-12;
  std::ostringstream msg;
  msg << "max identity error " << worst << ", risk at c=1: " << at_one;
  return {worst < 1e-12 && min_ok, msg.str()};
}

// 5. Just-identified IV consistency and 2SLS = OLS when Z = X.
Outcome criterion_iv_correctness() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Dataset data = linear_iv_data(50000, 2.0, 0.6, seed);
    const Eigen::VectorXd theta = fit_iv_just(data);
    worst = std::max(worst, std::fabs(theta(1) - 2.0));
  }

  Dataset self = linear_iv_data(500, 1.5, 0.5, 99);
  self.z = self.x;
  const Eigen::VectorXd tsls = fit_2sls(self, 1);
  Eigen::MatrixXd X(self.n(), 2);
  X.col(0).setOnes();
  X.col(1) = self.x.col(0);
  const Eigen::VectorXd ols =
      testutil::gauss_solve(X.transpose() * X, X.transpose() * self.y);
  const double gap = (tsls - ols).cwiseAbs().maxCoeff();
  std::ostringstream msg;
  msg << "max |slope - 2| = " << worst << " over 5 seeds (tol 0.05); "
      << "|2sls - ols| = " << gap;
  return {worst < 0.05 && gap < 1e-10, msg.str()};
}

// 6. Monte-Carlo comparatives: IW-MM vs LS (Newey-Powell) and IW-LS vs LS
// (Ai-Chen, R = 0.9), 20 trials each.
Outcome criterion_monte_carlo() {
  const auto count_wins = [](const Report& report, const std::string& iw_label,
                             int trials, std::uint64_t base_seed) {
    int wins = 0;
    for (int t = 0; t < trials; ++t) {
      const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(t);
      double iw = 0.0, ls = 0.0;
      bool have_iw = false, have_ls = false;
      for (const auto& row : report.rows) {
        if (row.trial_seed != seed || !row.mse) continue;
        if (row.method == iw_label) {
          iw = *row.mse;
          have_iw = true;
        }
        if (row.method == "ls") {
          ls = *row.mse;
          have_ls = true;
        }
      }
      if (have_iw && have_ls && iw < ls) ++wins;
    }
    return wins;
  };

  ExperimentConfig np;
  np.dgp.family = DgpFamily::NeweyPowell;
  np.dgp.n = 1000;
  np.trials = 20;
  np.eval_points = 10000;
  np.base_seed = 500;
  np.workers = 2;
  EstimatorConfig iwmm;
  iwmm.method = Method::IwMm;
  iwmm.opt.max_epochs = 250;
  EstimatorConfig ls;
  ls.method = Method::Ls;
  ls.opt.max_epochs = 250;
  np.methods = {iwmm, ls};
  const int np_wins = count_wins(run_experiment(np), "iw_mm", np.trials, np.base_seed);

  ExperimentConfig ac;
  ac.dgp.family = DgpFamily::AiChen;
  ac.dgp.r_coef = 0.9;
  ac.dgp.n = 1000;
  ac.trials = 20;
  ac.eval_points = 10000;
  ac.base_seed = 700;
  ac.workers = 2;
  EstimatorConfig iwls;
  iwls.method = Method::IwLs;
  iwls.opt.max_epochs = 250;
  ac.methods = {iwls, ls};
  const int ac_wins = count_wins(run_experiment(ac), "iw_ls", ac.trials, ac.base_seed);

  std::ostringstream msg;
  msg << "newey-powell iw_mm wins " << np_wins << "/20, ai-chen iw_ls wins "
      << ac_wins << "/20 (>= 15 required)";
  return {np_wins >= 15 && ac_wins >= 15, msg.str()};
}

// 7. Convergence rate of IW-MM on Newey-Powell: log-log slope in [-0.75, -0.25].
Outcome criterion_convergence_rate() {
  ExperimentConfig cfg;
  cfg.dgp.family = DgpFamily::NeweyPowell;
  cfg.trials = 10;
  cfg.eval_points = 10000;
  cfg.base_seed = 900;
  cfg.workers = 2;
  cfg.sample_sizes = {500, 1000, 1500, 2000, 3500, 4000, 4500, 5000};
  EstimatorConfig iwmm;
  iwmm.method = Method::IwMm;
  iwmm.opt.max_epochs = 250;
  cfg.methods = {iwmm};
  const ConvergenceResult res = convergence_study(cfg);
  std::ostringstream msg;
  msg << "fitted slope " << res.slope << " (required in [-0.75, -0.25])";
  return {res.slope >= -0.75 && res.slope <= -0.25, msg.str()};
}

// 8. Polynomial sieve ordering on Newey-Powell at n = 5000.
Outcome criterion_sieve_ordering() {
  ExperimentConfig cfg;
  cfg.dgp.family = DgpFamily::NeweyPowell;
  cfg.dgp.n = 5000;
  cfg.trials = 10;
  cfg.eval_points = 10000;
  cfg.base_seed = 1200;
  cfg.workers = 2;
  EstimatorConfig d1, d3;
  d1.method = Method::TwoSls;
  d1.sieve_degree = 1;
  d3.method = Method::TwoSls;
  d3.sieve_degree = 3;
  cfg.methods = {d1, d3};
  const Report report = run_experiment(cfg);
  double m1 = 0.0, m3 = 0.0;
  int k1 = 0, k3 = 0;
  for (const auto& row : report.rows) {
    if (!row.mse) continue;
    if (row.method == "2sls_d1") {
      m1 += *row.mse;
      ++k1;
    } else if (row.method == "2sls_d3") {
      m3 += *row.mse;
      ++k3;
    }
  }
  m1 /= std::max(1, k1);
  m3 /= std::max(1, k3);
  std::ostringstream msg;
  msg << "mean MSE degree 3 = " << m3 << " vs degree 1 = " << m1;
  return {k1 == 10 && k3 == 10 && m3 <= m1, msg.str()};
}

// 9. Kernel closed form vs conjugate-gradient minimization of the same
// quadratic, 5 random fixtures.
Outcome criterion_kernel_closed_form() {
  double worst_gap = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    DgpConfig dgp;
    dgp.family = DgpFamily::NeweyPowell;
    dgp.n = 35;
    dgp.seed = 40 + seed;
    const Dataset data = generate(dgp);
    RatioModel ratio{MlpModel::he_init({3, 8, 1}, 0.2, seed), 1e-6, 20.0};
    const Eigen::MatrixXd R = ratio_matrix(ratio, data);

    EstimatorConfig cfg;
    cfg.method = Method::IwKrnl;
    cfg.sigma2 = 0.5 + 0.3 * static_cast<double>(seed);
    cfg.zeta = 1e-4;
    const FitResult fit = fit_iw_krnl(data, ratio, cfg, &R);
    const auto& k = std::get<GaussianKernelModel>(*fit.model);

    const Eigen::Index n = data.n();
    Eigen::MatrixXd design(n, n + 1);
    design.leftCols(n) = kernel_feature_matrix(data.x, data.x, cfg.sigma2);
    design.col(n).setOnes();
    const auto objective = [&](const Eigen::VectorXd& theta) {
      const Eigen::VectorXd e = data.y - design * theta;
      return iwmm_objective_given(e, R) + cfg.zeta * theta.head(n).squaredNorm();
    };
    const auto grad = [&](const Eigen::VectorXd& theta) {
      const Eigen::VectorXd e = data.y - design * theta;
      const Eigen::VectorXd m = R.transpose() * e / static_cast<double>(n);
      Eigen::VectorXd g = -2.0 / (static_cast<double>(n) * n) *
                          (design.transpose() * (R * m));
      g.head(n) += 2.0 * cfg.zeta * theta.head(n);
      return g;
    };
    Eigen::VectorXd closed(n + 1);
    closed.head(n) = k.beta;
    closed(n) = k.beta0;
    const Eigen::VectorXd iter =
        testutil::cg_minimize_quadratic(grad, Eigen::VectorXd::Zero(n + 1), 400);
    const double gap = std::fabs(objective(closed) - objective(iter)) /
                       std::max(1e-300, std::fabs(objective(closed)));
    worst_gap = std::max(worst_gap, gap);
  }
  std::ostringstream msg;
  msg << "worst relative objective gap " << worst_gap << " (< 1e-6)";
  return {worst_gap < 1e-6, msg.str()};
}

// 10. Analytic gradients of both IW objectives for both model families vs
// central finite differences, 100 random instances.
Outcome criterion_gradient_suite() {
  Rng rng(4242);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 12;
    const int dx = 1 + rng.uniform_int(2);
    Dataset data;
    data.y.resize(n);
    data.x.resize(n, dx);
    data.z.resize(n, 1);
    for (int i = 0; i < n; ++i) {
      data.y(i) = rng.normal();
      for (int j = 0; j < dx; ++j) data.x(i, j) = rng.normal();
      data.z(i, 0) = rng.normal();
    }
    Eigen::MatrixXd R(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) R(i, j) = rng.uniform(0.05, 2.0);

    StructuralModel model;
    if (rep % 2 == 0) {
      model = MlpModel::he_init({dx, 6, 5, 1}, 0.2, rng.next_u64());
    } else {
      GaussianKernelModel k;
      k.centers = data.x.topRows(4);
      k.sigma2 = 0.5 + rng.uniform01();
      k.beta = Eigen::VectorXd::Zero(4);
      for (int i = 0; i < 4; ++i) k.beta(i) = rng.normal();
      k.beta0 = rng.normal();
      model = k;
    }
    const bool use_iwls = (rep / 2) % 2 == 0;
    const double eta = 0.37;

    const auto objective = [&](const StructuralModel& f) {
      const Eigen::VectorXd e = data.y - forward_batch(f, data.x);
      return use_iwls ? iwls_objective_given(e, R, eta) : iwmm_objective_given(e, R);
    };
    // analytic gradient through the residual chain rule
    const Eigen::VectorXd e = data.y - forward_batch(model, data.x);
    const Eigen::VectorXd m = R.transpose() * e / static_cast<double>(n);
    Eigen::VectorXd de;
    if (use_iwls)
      de = (2.0 / n) * e + (2.0 * eta / n) * (R * m);
    else
      de = (2.0 / (static_cast<double>(n) * n)) * (R * m);
    Eigen::VectorXd analytic = Eigen::VectorXd::Zero(param_count(model));
    for (int i = 0; i < n; ++i)
      analytic -= de(i) * grad_params(model, data.x.row(i));

    // central finite differences through the public objective
    const Eigen::VectorXd p0 = params(model);
    Eigen::VectorXd fd(p0.size());
    const double h = 1e-5;
    StructuralModel probe = model;
    for (Eigen::Index kk = 0; kk < p0.size(); ++kk) {
      Eigen::VectorXd p = p0;
      p(kk) = p0(kk) + h;
      set_params(probe, p);
      const double up = objective(probe);
      p(kk) = p0(kk) - h;
      set_params(probe, p);
      const double dn = objective(probe);
      fd(kk) = (up - dn) / (2.0 * h);
    }
    for (Eigen::Index kk = 0; kk < p0.size(); ++kk) {
      const double scale = std::max(1.0, std::fabs(fd(kk)));
      worst = std::max(worst, std::fabs(analytic(kk) - fd(kk)) / scale);
    }
  }
  std::ostringstream msg;
  msg << "max relative gradient error " << worst << " (< 1e-4)";
  return {worst < 1e-4, msg.str()};
}

// 11. Byte-identical bench CSV across two runs of a fixed config.
Outcome criterion_determinism() {
  ExperimentConfig cfg;
  cfg.dgp.family = DgpFamily::NeweyPowell;
  cfg.dgp.n = 500;
  cfg.trials = 3;
  cfg.eval_points = 1000;
  cfg.base_seed = 2100;
  cfg.workers = 2;
  cfg.ratio.hidden = {32, 32};
  cfg.ratio.epochs = 10;
  EstimatorConfig iwmm;
  iwmm.method = Method::IwMm;
  iwmm.hidden = {32, 32};
  iwmm.opt.max_epochs = 60;
  EstimatorConfig tsls;
  tsls.method = Method::TwoSls;
  cfg.methods = {iwmm, tsls};

  const auto render = [&]() {
    emit_report_csv(run_experiment(cfg), "acceptance_det.csv", false);
    std::ifstream in("acceptance_det.csv", std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string first = render();
  const std::string second = render();
  std::remove("acceptance_det.csv");
  std::ostringstream msg;
  msg << first.size() << " bytes, reruns " << (first == second ? "identical" : "differ");
  return {!first.empty() && first == second, msg.str()};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "density-ratio discrete oracle", criterion_discrete_oracle},
      {2, "independence sanity", criterion_independence},
      {3, "gaussian ratio consistency", criterion_gaussian_consistency},
      {4, "lsif risk identities", criterion_risk_identities},
      {5, "iv/2sls correctness", criterion_iv_correctness},
      {6, "monte-carlo comparatives", criterion_monte_carlo},
      {7, "convergence rate", criterion_convergence_rate},
      {8, "sieve ordering", criterion_sieve_ordering},
      {9, "kernel closed form vs iterative", criterion_kernel_closed_form},
      {10, "gradient suite", criterion_gradient_suite},
      {11, "bench determinism", criterion_determinism},
  };

  std::vector<int> wanted;
  for (int a = 1; a < argc; ++a) wanted.push_back(std::atoi(argv[a]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() &&
        std::find(wanted.begin(), wanted.end(), c.id) == wanted.end())
      continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %2d %-34s %s (%.1fs)\n", out.pass ? "PASS" : "FAIL", c.id,
                c.name, out.detail.c_str(), secs);
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
  return failures > 0 ? 1 : 0;
}
