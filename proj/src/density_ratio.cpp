#include "iwiv/density_ratio.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "iwiv/optimize.hpp"

namespace iwiv {

using nlohmann::json;

namespace {

inline double softplus(double s) {
  if (s > 35.0) return s;
  if (s < -35.0) return std::exp(s);
  return std::log1p(std::exp(s));
}

inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

// softplus(x) = 1  <=>  x = ln(e - 1)
constexpr double kUnitRawScore = 0.54132485461292;

// Output link: exactly softplus up to 0.8 cap, then a C^1 exponential bend
// that approaches (but never reaches) the cap, so scores pushed toward the
// ceiling keep a live gradient. The hard clamp stays as the range guarantee.
inline double apply_link(double raw, double floor, double cap) {
  double v = softplus(raw);
  const double knee = 0.8 * cap;
  if (v > knee) v = cap - (cap - knee) * std::exp(-(v - knee) / (cap - knee));
  return v < floor ? floor : (v > cap ? cap : v);
}

/// d(link)/d(raw); zero only where the floor clamp is active.
inline double link_slope(double raw, double floor, double cap) {
  const double v = softplus(raw);
  const double knee = 0.8 * cap;
  double slope = sigmoid(raw);
  double out = v;
  if (v > knee) {
    const double bend = std::exp(-(v - knee) / (cap - knee));
    slope *= bend;
    out = cap - (cap - knee) * bend;
  }
  if (out <= floor) return 0.0;
  return slope;
}

void check_ratio_dims(const RatioModel& model, const Eigen::MatrixXd& W,
                      const Eigen::MatrixXd& Z) {
  if (W.cols() + Z.cols() != model.net.input_dim())
    throw std::invalid_argument("RatioModel: (w, z) dimension mismatch");
}

}  // namespace

double RatioModel::evaluate(const Eigen::VectorXd& w,
                            const Eigen::VectorXd& z) const {
  if (w.size() + z.size() != net.input_dim())
    throw std::invalid_argument("RatioModel::evaluate: dimension mismatch");
  Eigen::VectorXd in(w.size() + z.size());
  in << w, z;
  return apply_link(net.forward(in), output_floor, output_cap);
}

Eigen::VectorXd evaluate_rows(const RatioModel& model, const Eigen::MatrixXd& W,
                              const Eigen::MatrixXd& Z) {
  check_ratio_dims(model, W, Z);
  if (W.rows() != Z.rows())
    throw std::invalid_argument("evaluate_rows: row count mismatch");
  Eigen::MatrixXd in(W.rows(), W.cols() + Z.cols());
  in << W, Z;
  Eigen::VectorXd raw = model.net.forward_batch(in);
  for (Eigen::Index i = 0; i < raw.size(); ++i)
    raw(i) = apply_link(raw(i), model.output_floor, model.output_cap);
  return raw;
}

namespace {

// Shared driver for the pairwise sweeps: calls sink(j, values) for each
// instrument column j with values_i = r(W_i | Z_j).
template <class Sink>
void pairwise_sweep(const RatioModel& model, const Eigen::MatrixXd& W,
                    const Eigen::MatrixXd& Z, Sink&& sink) {
  check_ratio_dims(model, W, Z);
  const auto& net = model.net;
  const int L = net.num_layers();
  const Eigen::Index n = W.rows(), m = Z.rows();

  // First layer splits over the (w, z) halves of the input.
  const Eigen::MatrixXd& w1 = net.weight(0);
  const Eigen::MatrixXd w1w = w1.leftCols(W.cols());
  const Eigen::MatrixXd w1z = w1.rightCols(Z.cols());
  const Eigen::MatrixXd pw = W * w1w.transpose();  // n x h
  const Eigen::MatrixXd pz = Z * w1z.transpose();  // m x h
  const double alpha = net.leakiness();

  Eigen::MatrixXd a, t;
  Eigen::VectorXd vals(n);
  for (Eigen::Index j = 0; j < m; ++j) {
    a = pw;
    a.rowwise() += (pz.row(j) + net.bias(0).transpose());
    a = (a.array().max(0.0) + alpha * a.array().min(0.0)).matrix();
    for (int l = 1; l < L; ++l) {
      t.noalias() = a * net.weight(l).transpose();
      t.rowwise() += net.bias(l).transpose();
      if (l + 1 < L) t = (t.array().max(0.0) + alpha * t.array().min(0.0)).matrix();
      a = std::move(t);
    }
    for (Eigen::Index i = 0; i < n; ++i)
      vals(i) = apply_link(a(i, 0), model.output_floor, model.output_cap);
    sink(j, vals);
  }
}

}  // namespace

Eigen::MatrixXd evaluate_pairwise(const RatioModel& model,
                                  const Eigen::MatrixXd& W,
                                  const Eigen::MatrixXd& Z) {
  Eigen::MatrixXd R(W.rows(), Z.rows());
  pairwise_sweep(model, W, Z, [&](Eigen::Index j, const Eigen::VectorXd& vals) {
    R.col(j) = vals;
  });
  return R;
}

Eigen::MatrixXd ratio_matrix(const RatioModel& model, const Dataset& data) {
  return evaluate_pairwise(model, data.w_matrix(), data.z);
}

double lsif_empirical_risk(const RatioModel& model, const Dataset& data) {
  const Eigen::Index n = data.n();
  if (n < 2) throw std::invalid_argument("lsif_empirical_risk: n must be >= 2");
  const Eigen::MatrixXd W = data.w_matrix();
  double diag_sum = 0.0, sq_sum = 0.0;
  pairwise_sweep(model, W, data.z, [&](Eigen::Index j, const Eigen::VectorXd& vals) {
    diag_sum += vals(j);
    sq_sum += vals.squaredNorm();
  });
  const double nn = static_cast<double>(n);
  return -diag_sum / nn + 0.5 * sq_sum / (nn * nn);
}

double lsif_risk_from_matrix(const Eigen::MatrixXd& R) {
  const double n = static_cast<double>(R.rows());
  return -R.diagonal().mean() + 0.5 * R.squaredNorm() / (n * n);
}

double ratio_mass_check(const RatioModel& model, const Dataset& data) {
  const Eigen::Index n = data.n();
  if (n < 2) throw std::invalid_argument("ratio_mass_check: n must be >= 2");
  double total = 0.0;
  pairwise_sweep(model, data.w_matrix(), data.z,
                 [&](Eigen::Index, const Eigen::VectorXd& vals) { total += vals.sum(); });
  return total / (static_cast<double>(n) * static_cast<double>(n));
}

double ratio_mass_from_matrix(const Eigen::MatrixXd& R) {
  return R.mean();
}

void RatioFitConfig::validate() const {
  if (epochs < 1 || batch_pairs < 1 || cv_folds < 1 || patience < 1)
    throw std::invalid_argument("RatioFitConfig: counts must be positive");
  if (!(learning_rate > 0.0) || !(cap > 0.0) || floor < 0.0 || floor >= cap)
    throw std::invalid_argument("RatioFitConfig: need lr > 0 and 0 <= floor < cap");

}

namespace {

// An instrument column equal to the outcome or a regressor column makes the
// joint measure of (W, Z) singular along that direction; the empirical risk
// is then minimized by an unbounded spike there and weight decay is what
// keeps the fit informative.
bool has_shared_column(const Dataset& data) {
  for (int j = 0; j < data.dz(); ++j) {
    if (data.z.col(j) == data.y) return true;
    for (int k = 0; k < data.dx(); ++k)
      if (data.z.col(j) == data.x.col(k)) return true;
  }
  return false;
}

}  // namespace

RatioModel fit_ratio(const Dataset& data, const RatioFitConfig& cfg,
                     Eigen::MatrixXd* full_matrix, RatioFitInfo* info) {
  cfg.validate();
  data.validate();
  const Eigen::Index n = data.n();
  const int din = 1 + data.dx() + data.dz();
  const double weight_decay =
      cfg.weight_decay >= 0.0 ? cfg.weight_decay
                              : (has_shared_column(data) ? 5e-2 : 1e-3);

  std::vector<int> dims;
  dims.push_back(din);
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(1);

  // Hidden layers He-initialized; final layer zeroed with bias softplus^-1(1),
  // so the initial model is exactly the constant 1 with risk exactly -1/2.
  MlpModel net = MlpModel::he_init(dims, cfg.leakiness, mix_seed(cfg.seed, 0xA2));
  net.weight(net.num_layers() - 1).setZero();
  net.bias(net.num_layers() - 1).setConstant(kUnitRawScore);

  RatioModel model{net, cfg.floor, cfg.cap};
  const Eigen::VectorXd init_params = net.params();

  // Train on standardized (w, z) columns; the scaling is folded back into the
  // first layer before returning, so the model evaluates raw inputs.
  const int B = cfg.batch_pairs;
  const int din_total = din;
  Eigen::MatrixXd joint(data.n(), din_total);
  joint << data.w_matrix(), data.z;
  const InputScaler scaler(joint);
  const Eigen::MatrixXd joint_s = scaler.apply(joint);
  const Eigen::MatrixXd W = joint_s.leftCols(1 + data.dx());
  const Eigen::MatrixXd Zs = joint_s.rightCols(data.dz());

  // Fixed pair subsample for the per-epoch risk estimate. The linear term is
  // exact (all diagonal pairs); only the quadratic term is subsampled, and it
  // vanishes identically for the constant-1 start, so the estimate is exactly
  // -1/2 there too.
  const int n_monitor = static_cast<int>(
      std::min<long long>(cfg.monitor_pairs, static_cast<long long>(n) * n));
  Eigen::MatrixXd monitor_in(n_monitor, din_total);
  {
    Rng mrng(mix_seed(cfg.seed, 0xB3));
    for (int k = 0; k < n_monitor; ++k) {
      const int i = mrng.uniform_int(static_cast<int>(n));
      const int j = mrng.uniform_int(static_cast<int>(n));
      monitor_in.row(k) << W.row(i), Zs.row(j);
    }
  }
  Eigen::MatrixXd diag_in(n, din_total);
  diag_in << W, Zs;

  MlpModel work = net;
  // L2 decay applies to weight matrices only, never biases.
  Eigen::VectorXd decay_mask = Eigen::VectorXd::Zero(net.param_count());
  {
    Eigen::Index off = 0;
    for (int l = 0; l < net.num_layers(); ++l) {
      decay_mask.segment(off, net.weight(l).size()).setOnes();
      off += net.weight(l).size() + net.bias(l).size();
    }
  }

  const auto eval_fn = [&](const Eigen::VectorXd& p) {
    work.set_params(p);
    Eigen::VectorXd raw = work.forward_batch(diag_in);
    double lin = 0.0;
    for (Eigen::Index i = 0; i < raw.size(); ++i)
      lin += apply_link(raw(i), cfg.floor, cfg.cap);
    Eigen::VectorXd mraw = work.forward_batch(monitor_in);
    double quad = 0.0;
    for (Eigen::Index k = 0; k < mraw.size(); ++k) {
      const double v = apply_link(mraw(k), cfg.floor, cfg.cap);
      quad += v * v;
    }
    double penalty = 0.0;
    if (weight_decay > 0.0)
      penalty = weight_decay * decay_mask.cwiseProduct(p).dot(p);
    return -lin / static_cast<double>(n) + 0.5 * quad / n_monitor + penalty;
  };

  Eigen::MatrixXd batch_in(2 * B, din_total);
  const auto grad_fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& grad, Rng& rng) {
    work.set_params(p);
    for (int k = 0; k < B; ++k) {
      const int i = rng.uniform_int(static_cast<int>(n));
      batch_in.row(k) << W.row(i), Zs.row(i);
    }
    for (int k = 0; k < B; ++k) {
      const int i = rng.uniform_int(static_cast<int>(n));
      const int j = rng.uniform_int(static_cast<int>(n));
      batch_in.row(B + k) << W.row(i), Zs.row(j);
    }
    const Eigen::VectorXd raw = work.forward_batch(batch_in);
    Eigen::VectorXd dl(2 * B);
    double loss = 0.0;
    for (int k = 0; k < B; ++k) {
      const double v = apply_link(raw(k), cfg.floor, cfg.cap);
      loss -= v / B;
      dl(k) = -link_slope(raw(k), cfg.floor, cfg.cap) / B;
    }
    for (int k = B; k < 2 * B; ++k) {
      const double v = apply_link(raw(k), cfg.floor, cfg.cap);
      loss += 0.5 * v * v / B;
      dl(k) = v * link_slope(raw(k), cfg.floor, cfg.cap) / B;
    }
    grad = work.weighted_param_grad(batch_in, dl);
    if (weight_decay > 0.0) {
      grad += 2.0 * weight_decay * decay_mask.cwiseProduct(p);
      loss += weight_decay * decay_mask.cwiseProduct(p).dot(p);
    }
    return loss;
  };

  OptConfig opt;
  opt.max_epochs = cfg.epochs;
  opt.learning_rate = cfg.learning_rate;
  opt.steps_per_epoch = cfg.steps_per_epoch > 0
                            ? cfg.steps_per_epoch
                            : static_cast<int>((8 * n + B - 1) / B);
  opt.tolerance = cfg.tolerance;
  opt.patience = cfg.patience;
  opt.seed = mix_seed(cfg.seed, 0xC4);
  MinimizeResult fit = minimize(grad_fn, eval_fn, init_params, opt);

  model.net.set_params(fit.params);
  scaler.absorb_into_first_layer(model.net);

  // Exact risk of the trained candidate; fall back to the constant-1 start if
  // training never improved on it.
  double final_risk;
  bool kept_init = false;
  if (full_matrix != nullptr) {
    *full_matrix = ratio_matrix(model, data);
    final_risk = lsif_risk_from_matrix(*full_matrix);
  } else {
    final_risk = lsif_empirical_risk(model, data);
  }
  if (final_risk > -0.5) {
    model.net.set_params(init_params);
    scaler.absorb_into_first_layer(model.net);
    final_risk = -0.5;
    kept_init = true;
    if (full_matrix != nullptr) full_matrix->setOnes();
  }
  if (info != nullptr) {
    info->final_risk = final_risk;
    info->init_risk = -0.5;
    info->epochs_run = static_cast<int>(fit.trace.size()) - 1;
    info->kept_init = kept_init;
  }
  return model;
}

json RatioModel::to_json() const {
  json doc;
  doc["family"] = "ratio_mlp";
  doc["net"] = structural_to_json(StructuralModel(net));
  doc["output_floor"] = output_floor;
  doc["output_cap"] = output_cap;
  return doc;
}

RatioModel RatioModel::from_json(const json& doc) {
  if (doc.at("family").get<std::string>() != "ratio_mlp")
    throw std::runtime_error("RatioModel::from_json: unexpected family tag");
  RatioModel model;
  model.net = std::get<MlpModel>(structural_from_json(doc.at("net")));
  model.output_floor = doc.at("output_floor").get<double>();
  model.output_cap = doc.at("output_cap").get<double>();
  return model;
}

void save_ratio(const RatioModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << model.to_json().dump(2) << '\n';
}

RatioModel load_ratio(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return RatioModel::from_json(json::parse(in));
}

}  // namespace iwiv
