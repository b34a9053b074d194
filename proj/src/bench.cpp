#include "iwiv/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

namespace iwiv {

using nlohmann::json;

namespace {
constexpr std::uint64_t kRatioStream = 0x5A71;
constexpr std::uint64_t kEvalStream = 0xE7A1;
constexpr std::uint64_t kMethodStream = 0x3E70;
}  // namespace

void ExperimentConfig::validate() const {
  dgp.validate();
  if (methods.empty()) throw std::invalid_argument("ExperimentConfig: no methods");
  if (trials < 1) throw std::invalid_argument("ExperimentConfig: trials must be >= 1");
  if (eval_points < 100)
    throw std::invalid_argument("ExperimentConfig: eval_points must be >= 100");
  if (workers < 1) throw std::invalid_argument("ExperimentConfig: workers must be >= 1");
  for (const auto& m : methods) m.validate();
  for (int n : sample_sizes)
    if (n < 2) throw std::invalid_argument("ExperimentConfig: sample sizes must be >= 2");
}

std::optional<double> ReportRow::log10_mse() const {
  if (!mse) return std::nullopt;
  return std::log10(*mse);
}

std::vector<SummaryRow> Report::summary() const {
  std::map<std::pair<std::string, int>, std::vector<double>> groups;
  std::map<std::pair<std::string, int>, int> fails;
  for (const auto& row : rows) {
    const auto key = std::make_pair(row.method, row.n);
    if (auto l = row.log10_mse())
      groups[key].push_back(*l);
    else
      ++fails[key];
    groups.try_emplace(key);
    fails.try_emplace(key);
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, vals] : groups) {
    SummaryRow s;
    s.method = key.first;
    s.n = key.second;
    s.trials_ok = static_cast<int>(vals.size());
    s.failures = fails[key];
    if (!vals.empty()) {
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      s.mean_log10_mse = mean;
      s.sd_log10_mse = vals.size() > 1
                           ? std::sqrt(var / static_cast<double>(vals.size() - 1))
                           : 0.0;
    }
    out.push_back(std::move(s));
  }
  return out;
}

int Report::failures() const {
  int k = 0;
  for (const auto& row : rows)
    if (!row.mse) ++k;
  return k;
}

double mse_against_truth(const std::function<double(const Eigen::VectorXd&)>& predict,
                         const DgpConfig& dgp, int eval_points, std::uint64_t seed) {
  DgpConfig ecfg = dgp;
  ecfg.n = eval_points;
  ecfg.seed = seed;
  const Dataset eval = generate(ecfg);
  double total = 0.0;
  for (Eigen::Index i = 0; i < eval.n(); ++i) {
    const double diff = predict(eval.x.row(i)) - (*eval.f_true)(i);
    total += diff * diff;
  }
  return total / static_cast<double>(eval.n());
}

double mse_against_truth(const FitResult& fit, const DgpConfig& dgp,
                         int eval_points, std::uint64_t seed) {
  DgpConfig ecfg = dgp;
  ecfg.n = eval_points;
  ecfg.seed = seed;
  const Dataset eval = generate(ecfg);
  const Eigen::VectorXd pred = fit.predict_batch(eval.x);
  return (pred - *eval.f_true).squaredNorm() / static_cast<double>(eval.n());
}

namespace {

std::vector<ReportRow> run_trial(const ExperimentConfig& cfg, int n, int trial) {
  DgpConfig dcfg = cfg.dgp;
  dcfg.n = n;
  dcfg.seed = cfg.base_seed + static_cast<std::uint64_t>(trial);
  const Dataset data = generate(dcfg);
  const std::uint64_t eval_seed = mix_seed(dcfg.seed, kEvalStream);

  const bool needs_ratio = std::any_of(
      cfg.methods.begin(), cfg.methods.end(), [](const EstimatorConfig& m) {
        return m.method == Method::IwMm || m.method == Method::IwLs ||
               m.method == Method::IwKrnl;
      });

  RatioModel ratio;
  Eigen::MatrixXd R;
  RatioFitInfo rinfo;
  double ratio_seconds = 0.0;
  bool ratio_ok = true;
  std::string ratio_error;
  if (needs_ratio) {
    RatioFitConfig rcfg = cfg.ratio;
    rcfg.seed = mix_seed(dcfg.seed, kRatioStream);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ratio = fit_ratio(data, rcfg, &R, &rinfo);
    } catch (const std::exception& e) {
      ratio_ok = false;
      ratio_error = e.what();
    }
    ratio_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  std::vector<ReportRow> rows;
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    EstimatorConfig mcfg = cfg.methods[mi];
    // common random numbers: every method in a trial shares one fit seed, so
    // paired comparisons isolate the method effect from init noise
    mcfg.seed = mix_seed(dcfg.seed, kMethodStream);
    ReportRow row;
    row.method = method_label(mcfg);
    row.n = n;
    row.trial_seed = dcfg.seed;
    const bool wants_ratio = mcfg.method == Method::IwMm ||
                             mcfg.method == Method::IwLs ||
                             mcfg.method == Method::IwKrnl;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (wants_ratio && !ratio_ok)
        throw FitError("stage-1 ratio fit failed: " + ratio_error);
      const FitResult fit = fit_estimator(data, mcfg, wants_ratio ? &ratio : nullptr,
                                          wants_ratio ? &R : nullptr);
      row.mse = mse_against_truth(fit, dcfg, cfg.eval_points, eval_seed);
      for (const auto& [k, v] : fit.diagnostics) row.diagnostics[k] = v;
      if (wants_ratio) {
        row.diagnostics["ratio_risk"] = rinfo.final_risk;
        row.diagnostics["ratio_mass"] = ratio_mass_from_matrix(R);
      }
    } catch (const std::exception&) {
      row.mse = std::nullopt;
    }
    row.fit_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() +
        (wants_ratio ? ratio_seconds / static_cast<double>(cfg.methods.size()) : 0.0);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Report run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<int> sizes = cfg.sample_sizes;
  if (sizes.empty()) sizes.push_back(cfg.dgp.n);

  struct Task {
    int n;
    int trial;
  };
  std::vector<Task> tasks;
  for (int n : sizes)
    for (int t = 0; t < cfg.trials; ++t) tasks.push_back({n, t});

  std::vector<std::vector<ReportRow>> results(tasks.size());
  std::atomic<std::size_t> next{0};
  const int workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(tasks.size())));
  auto worker = [&]() {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= tasks.size()) break;
      results[k] = run_trial(cfg, tasks[k].n, tasks[k].trial);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  Report report;
  for (auto& rows : results)
    for (auto& row : rows) report.rows.push_back(std::move(row));
  std::sort(report.rows.begin(), report.rows.end(),
            [](const ReportRow& a, const ReportRow& b) {
              return std::tie(a.method, a.n, a.trial_seed) <
                     std::tie(b.method, b.n, b.trial_seed);
            });
  return report;
}

double power_law_slope(const std::vector<double>& ns,
                       const std::vector<double>& mean_log10_mse) {
  if (ns.size() != mean_log10_mse.size() || ns.size() < 2)
    throw std::invalid_argument("power_law_slope: need >= 2 matched points");
  const double k = static_cast<double>(ns.size());
  double mx = 0.0, my = 0.0;
  std::vector<double> xs(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) {
    xs[i] = std::log10(ns[i]);
    mx += xs[i];
    my += mean_log10_mse[i];
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (mean_log10_mse[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("power_law_slope: degenerate n values");
  return sxy / sxx;
}

ConvergenceResult convergence_study(const ExperimentConfig& cfg) {
  if (cfg.sample_sizes.size() < 3)
    throw std::invalid_argument("convergence_study: need >= 3 sample sizes");
  ConvergenceResult out;
  out.report = run_experiment(cfg);

  const auto summary = out.report.summary();
  for (const auto& mcfg : cfg.methods) {
    const std::string label = method_label(mcfg);
    std::vector<double> ns, means;
    for (const auto& s : summary) {
      if (s.method != label || s.trials_ok == 0) continue;
      ns.push_back(static_cast<double>(s.n));
      means.push_back(s.mean_log10_mse);
    }
    if (ns.size() >= 2) out.slopes[label] = power_law_slope(ns, means);
  }
  out.report.slopes = out.slopes;
  const std::string first = method_label(cfg.methods.front());
  if (out.slopes.count(first)) out.slope = out.slopes.at(first);
  return out;
}

namespace {

void append_double(std::string& line, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  line.append(buf, res.ptr);
}

}  // namespace

void emit_report_csv(const Report& report, const std::string& path, bool timings) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "method,n,trial_seed,mse,log10_mse,fit_seconds\n";
  std::string line;
  for (const auto& row : report.rows) {
    line.clear();
    line += row.method;
    line += ',';
    line += std::to_string(row.n);
    line += ',';
    line += std::to_string(row.trial_seed);
    line += ',';
    if (row.mse) {
      append_double(line, *row.mse);
      line += ',';
      append_double(line, *row.log10_mse());
    } else {
      line += ',';
    }
    line += ',';
    append_double(line, timings ? row.fit_seconds : 0.0);
    out << line << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void emit_report_json(const Report& report, const std::string& path, bool timings) {
  json doc;
  doc["rows"] = json::array();
  for (const auto& row : report.rows) {
    json r;
    r["method"] = row.method;
    r["n"] = row.n;
    r["trial_seed"] = row.trial_seed;
    if (row.mse) {
      r["mse"] = *row.mse;
      r["log10_mse"] = *row.log10_mse();
    } else {
      r["mse"] = nullptr;
      r["log10_mse"] = nullptr;
    }
    r["fit_seconds"] = timings ? row.fit_seconds : 0.0;
    if (!row.diagnostics.empty()) r["diagnostics"] = row.diagnostics;
    doc["rows"].push_back(std::move(r));
  }
  doc["summary"] = json::array();
  for (const auto& s : report.summary()) {
    json r;
    r["method"] = s.method;
    r["n"] = s.n;
    r["trials_ok"] = s.trials_ok;
    r["failures"] = s.failures;
    r["mean_log10_mse"] = s.mean_log10_mse;
    r["sd_log10_mse"] = s.sd_log10_mse;
    doc["summary"].push_back(std::move(r));
  }
  if (!report.slopes.empty()) doc["slopes"] = report.slopes;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << doc.dump(2) << '\n';
}

Report read_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "method,n,trial_seed,mse,log10_mse,fit_seconds")
    throw std::runtime_error("report CSV: unexpected header in " + path);
  Report report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = line.find(',', start);
      if (pos == std::string::npos) {
        f.push_back(line.substr(start));
        break;
      }
      f.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    if (f.size() != 6) throw std::runtime_error("report CSV: ragged row");
    ReportRow row;
    row.method = f[0];
    row.n = std::stoi(f[1]);
    row.trial_seed = std::stoull(f[2]);
    if (!f[3].empty()) {
      double v = 0.0;
      std::from_chars(f[3].data(), f[3].data() + f[3].size(), v);
      row.mse = v;
    }
    {
      double v = 0.0;
      std::from_chars(f[5].data(), f[5].data() + f[5].size(), v);
      row.fit_seconds = v;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

EstimatorConfig estimator_config_from_json(const json& doc) {
  EstimatorConfig cfg;
  cfg.method = method_from_string(doc.at("method").get<std::string>());
  if (doc.contains("eta")) cfg.eta = doc["eta"].get<double>();
  if (doc.contains("zeta")) cfg.zeta = doc["zeta"].get<double>();
  if (doc.contains("sigma2")) cfg.sigma2 = doc["sigma2"].get<double>();
  if (doc.contains("cv")) cfg.cv = doc["cv"].get<bool>();
  if (doc.contains("cv_folds")) cfg.cv_folds = doc["cv_folds"].get<int>();
  if (doc.contains("sigma2_grid")) cfg.sigma2_grid = doc["sigma2_grid"].get<std::vector<double>>();
  if (doc.contains("zeta_grid")) cfg.zeta_grid = doc["zeta_grid"].get<std::vector<double>>();
  if (doc.contains("sieve_degree")) cfg.sieve_degree = doc["sieve_degree"].get<int>();
  if (doc.contains("hidden")) cfg.hidden = doc["hidden"].get<std::vector<int>>();
  if (doc.contains("leakiness")) cfg.leakiness = doc["leakiness"].get<double>();
  if (doc.contains("epochs")) cfg.opt.max_epochs = doc["epochs"].get<int>();
  if (doc.contains("lr")) cfg.opt.learning_rate = doc["lr"].get<double>();
  if (doc.contains("patience")) cfg.opt.patience = doc["patience"].get<int>();
  if (doc.contains("tolerance")) cfg.opt.tolerance = doc["tolerance"].get<double>();
  return cfg;
}

RatioFitConfig ratio_config_from_json(const json& doc) {
  RatioFitConfig cfg;
  if (doc.contains("epochs")) cfg.epochs = doc["epochs"].get<int>();
  if (doc.contains("batch_pairs")) cfg.batch_pairs = doc["batch_pairs"].get<int>();
  if (doc.contains("lr")) cfg.learning_rate = doc["lr"].get<double>();
  if (doc.contains("weight_decay")) cfg.weight_decay = doc["weight_decay"].get<double>();
  if (doc.contains("cap")) cfg.cap = doc["cap"].get<double>();
  if (doc.contains("floor")) cfg.floor = doc["floor"].get<double>();
  if (doc.contains("hidden")) cfg.hidden = doc["hidden"].get<std::vector<int>>();
  if (doc.contains("steps_per_epoch")) cfg.steps_per_epoch = doc["steps_per_epoch"].get<int>();
  if (doc.contains("patience")) cfg.patience = doc["patience"].get<int>();
  if (doc.contains("cv_folds")) cfg.cv_folds = doc["cv_folds"].get<int>();
  return cfg;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& doc) {
  ExperimentConfig cfg;
  const json& d = doc.at("dgp");
  cfg.dgp.family = dgp_family_from_string(d.at("family").get<std::string>());
  if (d.contains("n")) cfg.dgp.n = d["n"].get<int>();
  if (d.contains("seed")) cfg.dgp.seed = d["seed"].get<std::uint64_t>();
  if (d.contains("r_coef")) cfg.dgp.r_coef = d["r_coef"].get<double>();
  if (d.contains("gamma0")) cfg.dgp.gamma0 = d["gamma0"].get<double>();
  if (d.contains("rho")) cfg.dgp.rho = d["rho"].get<double>();
  if (d.contains("price_noise_scale")) cfg.dgp.price_noise_scale = d["price_noise_scale"].get<double>();
  if (d.contains("error_scale")) cfg.dgp.error_scale = d["error_scale"].get<double>();
  for (const auto& m : doc.at("methods"))
    cfg.methods.push_back(estimator_config_from_json(m));
  if (doc.contains("trials")) cfg.trials = doc["trials"].get<int>();
  if (doc.contains("eval_points")) cfg.eval_points = doc["eval_points"].get<int>();
  if (doc.contains("sample_sizes")) cfg.sample_sizes = doc["sample_sizes"].get<std::vector<int>>();
  if (doc.contains("base_seed")) cfg.base_seed = doc["base_seed"].get<std::uint64_t>();
  if (doc.contains("ratio")) cfg.ratio = ratio_config_from_json(doc["ratio"]);
  if (doc.contains("workers")) cfg.workers = doc["workers"].get<int>();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return experiment_config_from_json(json::parse(in));
}

}  // namespace iwiv
