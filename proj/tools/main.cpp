// Command-line front end: generate synthetic datasets, fit the conditional
// density ratio, fit structural estimators, and run Monte-Carlo benchmarks.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "iwiv/bench.hpp"
#include "iwiv/datagen.hpp"
#include "iwiv/density_ratio.hpp"
#include "iwiv/estimators.hpp"

using namespace iwiv;
using nlohmann::json;

int main(int argc, char** argv) {
  CLI::App app{"Importance-weighted estimation for nonparametric IV regression"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset as CSV");
  std::string gen_family = "newey_powell", gen_out;
  int gen_n = 1000;
  std::uint64_t gen_seed = 0;
  double gen_r = 0.9, gen_gamma0 = 1.0, gen_rho = 0.0, gen_pns = 1.0, gen_es = 1.0;
  gen->add_option("--family", gen_family,
                  "newey_powell | newey_powell_ext | ai_chen | ai_chen_ext | demand")
      ->required();
  gen->add_option("--n", gen_n, "sample size")->required();
  gen->add_option("--seed", gen_seed, "generator seed")->required();
  gen->add_option("--r-coef", gen_r, "Ai-Chen endogeneity coefficient R");
  gen->add_option("--gamma0", gen_gamma0, "Ai-Chen linear coefficient");
  gen->add_option("--rho", gen_rho, "demand-design error correlation");
  gen->add_option("--price-noise-scale", gen_pns, "demand-design price noise scale");
  gen->add_option("--error-scale", gen_es, "demand-design error scale");
  gen->add_option("--out", gen_out, "output CSV path")->required();

  // fit-ratio
  auto* fr = app.add_subcommand("fit-ratio", "Fit the conditional density ratio");
  std::string fr_data, fr_save;
  int fr_epochs = 60, fr_batch = 256;
  double fr_lr = 2e-3, fr_cap = 20.0;
  std::uint64_t fr_seed = 0;
  fr->add_option("--data", fr_data, "training CSV")->required();
  fr->add_option("--epochs", fr_epochs, "training epochs");
  fr->add_option("--batch-pairs", fr_batch, "pair minibatch size");
  fr->add_option("--lr", fr_lr, "learning rate");
  fr->add_option("--cap", fr_cap, "output cap C");
  fr->add_option("--seed", fr_seed, "training seed");
  fr->add_option("--save", fr_save, "output model JSON")->required();

  // fit
  auto* ft = app.add_subcommand("fit", "Fit a structural-function estimator");
  std::string ft_method, ft_data, ft_ratio, ft_save, ft_report;
  double ft_eta = 1e-3, ft_zeta = 1e-6, ft_sigma2 = 0.0;
  int ft_degree = 1, ft_epochs = 500;
  double ft_lr = 3e-3;
  bool ft_cv = false;
  std::uint64_t ft_seed = 0;
  ft->add_option("--method", ft_method, "iw_mm | iw_ls | iw_krnl | ls | iv_just | 2sls")
      ->required();
  ft->add_option("--data", ft_data, "training CSV")->required();
  ft->add_option("--ratio", ft_ratio, "fitted ratio model JSON (IW methods)");
  ft->add_option("--eta", ft_eta, "moment penalty weight (iw_ls)");
  ft->add_option("--zeta", ft_zeta, "kernel ridge coefficient");
  ft->add_option("--sigma2", ft_sigma2, "kernel bandwidth (0 = median heuristic)");
  ft->add_flag("--cv", ft_cv, "select sigma2/zeta by 5-fold CV (iw_krnl)");
  ft->add_option("--degree", ft_degree, "2SLS sieve degree (1-3)");
  ft->add_option("--epochs", ft_epochs, "training epochs");
  ft->add_option("--lr", ft_lr, "learning rate");
  ft->add_option("--seed", ft_seed, "training seed");
  ft->add_option("--save", ft_save, "output model JSON");
  ft->add_option("--report", ft_report, "output fit-report JSON");

  // bench
  auto* bn = app.add_subcommand("bench", "Run a Monte-Carlo benchmark");
  std::string bn_config, bn_out, bn_format = "csv";
  int bn_workers = 0;
  bool bn_timings = false;
  bn->add_option("--config", bn_config, "experiment config JSON")->required();
  bn->add_option("--out", bn_out, "output report path")->required();
  bn->add_option("--format", bn_format, "csv | json");
  bn->add_option("--workers", bn_workers, "parallel trial workers (0 = config value)");
  bn->add_flag("--timings", bn_timings,
               "record wall-clock fit times (off by default so reruns are byte-identical)");

  // convergence
  auto* cv = app.add_subcommand("convergence", "Run a convergence-rate study");
  std::string cv_config, cv_out;
  int cv_workers = 0;
  cv->add_option("--config", cv_config, "experiment config JSON with sample_sizes")
      ->required();
  cv->add_option("--out", cv_out, "output report JSON")->required();
  cv->add_option("--workers", cv_workers, "parallel trial workers (0 = config value)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      DgpConfig cfg;
      cfg.family = dgp_family_from_string(gen_family);
      cfg.n = gen_n;
      cfg.seed = gen_seed;
      cfg.r_coef = gen_r;
      cfg.gamma0 = gen_gamma0;
      cfg.rho = gen_rho;
      cfg.price_noise_scale = gen_pns;
      cfg.error_scale = gen_es;
      write_csv(generate(cfg), gen_out);
      std::cout << "wrote " << gen_out << "\n";
    } else if (*fr) {
      const Dataset data = read_csv(fr_data);
      RatioFitConfig cfg;
      cfg.epochs = fr_epochs;
      cfg.batch_pairs = fr_batch;
      cfg.learning_rate = fr_lr;
      cfg.cap = fr_cap;
      cfg.seed = fr_seed;
      RatioFitInfo info;
      const RatioModel model = fit_ratio(data, cfg, nullptr, &info);
      save_ratio(model, fr_save);
      std::cout << "final empirical risk " << info.final_risk << " (constant-1 floor -0.5)\n"
                << "wrote " << fr_save << "\n";
    } else if (*ft) {
      const Dataset data = read_csv(ft_data);
      EstimatorConfig cfg;
      cfg.method = method_from_string(ft_method);
      cfg.eta = ft_eta;
      cfg.zeta = ft_zeta;
      cfg.sigma2 = ft_sigma2 > 0.0 ? ft_sigma2 : median_sq_distance(data.x);
      cfg.cv = ft_cv;
      cfg.sieve_degree = ft_degree;
      cfg.opt.max_epochs = ft_epochs;
      cfg.opt.learning_rate = ft_lr;
      cfg.seed = ft_seed;

      RatioModel ratio;
      const bool wants_ratio = cfg.method == Method::IwMm ||
                               cfg.method == Method::IwLs ||
                               cfg.method == Method::IwKrnl;
      if (wants_ratio) {
        if (ft_ratio.empty())
          throw std::runtime_error("--ratio is required for importance-weighted methods");
        ratio = load_ratio(ft_ratio);
      }
      const auto t0 = std::chrono::steady_clock::now();
      const FitResult fit = fit_estimator(data, cfg, wants_ratio ? &ratio : nullptr);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      if (!ft_save.empty()) {
        if (fit.model) {
          save_structural(*fit.model, ft_save);
        } else {
          json doc;
          doc["family"] = "sieve";
          doc["degree"] = fit.sieve->degree;
          doc["coef"] = std::vector<double>(fit.sieve->coef.data(),
                                            fit.sieve->coef.data() + fit.sieve->coef.size());
          std::ofstream out(ft_save);
          out << doc.dump(2) << '\n';
        }
        std::cout << "wrote " << ft_save << "\n";
      }
      if (!ft_report.empty()) {
        json rep;
        rep["method"] = method_label(cfg);
        rep["wall_seconds"] = secs;
        rep["diagnostics"] = fit.diagnostics;
        if (!fit.objective_trace.empty())
          rep["final_objective"] = fit.objective_trace.back();
        if (data.f_true && wants_ratio && fit.model)
          rep["projected_mse"] = projected_mse_empirical(*fit.model, ratio, data);
        std::ofstream out(ft_report);
        out << rep.dump(2) << '\n';
        std::cout << "wrote " << ft_report << "\n";
      }
      if (fit.sieve) {
        std::cout << "coefficients:";
        for (Eigen::Index i = 0; i < fit.sieve->coef.size(); ++i)
          std::cout << ' ' << fit.sieve->coef(i);
        std::cout << "\n";
      }
    } else if (*bn) {
      ExperimentConfig cfg = load_experiment_config(bn_config);
      if (bn_workers > 0) cfg.workers = bn_workers;
      const Report report = run_experiment(cfg);
      if (bn_format == "csv")
        emit_report_csv(report, bn_out, bn_timings);
      else if (bn_format == "json")
        emit_report_json(report, bn_out, bn_timings);
      else
        throw std::runtime_error("unknown format: " + bn_format);
      std::cout << "wrote " << bn_out << " (" << report.rows.size() << " rows, "
                << report.failures() << " failures)\n";
      return report.failures() == 0 ? 0 : 1;
    } else if (*cv) {
      ExperimentConfig cfg = load_experiment_config(cv_config);
      if (cv_workers > 0) cfg.workers = cv_workers;
      const ConvergenceResult res = convergence_study(cfg);
      emit_report_json(res.report, cv_out);
      std::cout << "slope " << res.slope << "\n";
      std::cout << "wrote " << cv_out << "\n";
      return res.report.failures() == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
