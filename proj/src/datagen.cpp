#include "iwiv/datagen.hpp"

#include <cmath>
#include <stdexcept>

#include "iwiv/rng.hpp"

namespace iwiv {

std::string to_string(DgpFamily family) {
  switch (family) {
    case DgpFamily::NeweyPowell: return "newey_powell";
    case DgpFamily::NeweyPowellExtended: return "newey_powell_ext";
    case DgpFamily::AiChen: return "ai_chen";
    case DgpFamily::AiChenExtended: return "ai_chen_ext";
    case DgpFamily::DemandDesign: return "demand";
  }
  throw std::logic_error("unknown DgpFamily");
}

DgpFamily dgp_family_from_string(const std::string& name) {
  if (name == "newey_powell") return DgpFamily::NeweyPowell;
  if (name == "newey_powell_ext") return DgpFamily::NeweyPowellExtended;
  if (name == "ai_chen") return DgpFamily::AiChen;
  if (name == "ai_chen_ext") return DgpFamily::AiChenExtended;
  if (name == "demand") return DgpFamily::DemandDesign;
  throw std::invalid_argument("unknown DGP family: " + name);
}

void DgpConfig::validate() const {
  if (n < 2) throw std::invalid_argument("DgpConfig: n must be >= 2");
  if (!(rho >= 0.0 && rho < 1.0))
    throw std::invalid_argument("DgpConfig: rho must lie in [0, 1)");
  if (!(price_noise_scale > 0.0))
    throw std::invalid_argument("DgpConfig: price_noise_scale must be positive");
  if (!(error_scale > 0.0))
    throw std::invalid_argument("DgpConfig: error_scale must be positive");
  if (!std::isfinite(r_coef) || !std::isfinite(gamma0))
    throw std::invalid_argument("DgpConfig: r_coef and gamma0 must be finite");
}

double f_star_newey(double x) {
  const double t = x - 1.0;
  const double s = (t > 0.0) - (t < 0.0);
  return std::log(std::fabs(t) + 1.0) * s;
}

double h_demand(double t) {
  const double u = t - 5.0;
  const double u2 = u * u;
  return 2.0 * (u2 * u2 / 600.0 + std::exp(-4.0 * u2) + t / 10.0 - 2.0);
}

double logistic(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

Dataset gen_newey_powell(const DgpConfig& cfg) {
  cfg.validate();
  if (cfg.family != DgpFamily::NeweyPowell &&
      cfg.family != DgpFamily::NeweyPowellExtended)
    throw std::invalid_argument("gen_newey_powell: wrong DGP family");
  const bool extended = cfg.family == DgpFamily::NeweyPowellExtended;
  const int dz = extended ? 4 : 1;
  const int n = cfg.n;

  Dataset data;
  data.seed = cfg.seed;
  data.y.resize(n);
  data.x.resize(n, 1);
  data.z.resize(n, dz);
  data.f_true = Eigen::VectorXd(n);

  // (eps, U, Z...) jointly normal, corr(eps, U) = 0.5, Z independent.
  // Draw order per row is fixed: eps, U, Z1..Zdz.
  const double c = std::sqrt(0.75);
  Rng rng(cfg.seed);
  for (int i = 0; i < n; ++i) {
    const double g_eps = rng.normal();
    const double eps = g_eps;
    const double u = 0.5 * g_eps + c * rng.normal();
    double zsum = 0.0;
    for (int d = 0; d < dz; ++d) {
      const double zd = rng.normal();
      data.z(i, d) = zd;
      zsum += zd;
    }
    const double x = zsum + u;
    data.x(i, 0) = x;
    (*data.f_true)(i) = f_star_newey(x);
    data.y(i) = (*data.f_true)(i) + eps;
  }
  data.validate();
  return data;
}

Dataset gen_ai_chen(const DgpConfig& cfg) {
  cfg.validate();
  if (cfg.family != DgpFamily::AiChen && cfg.family != DgpFamily::AiChenExtended)
    throw std::invalid_argument("gen_ai_chen: wrong DGP family");
  const bool extended = cfg.family == DgpFamily::AiChenExtended;
  const int n = cfg.n;
  const int dz = extended ? 5 : 2;

  Dataset data;
  data.seed = cfg.seed;
  data.y.resize(n);
  data.x.resize(n, 2);
  data.z.resize(n, dz);
  data.f_true = Eigen::VectorXd(n);

  // Cholesky factor of the 3x3 equicorrelated (0.3) matrix for (W1, W2, W3).
  const double l21 = 0.3, l22 = std::sqrt(1.0 - 0.09);
  const double l31 = 0.3, l32 = (0.3 - 0.09) / l22;
  const double l33 = std::sqrt(1.0 - l31 * l31 - l32 * l32);

  Rng rng(cfg.seed);
  for (int i = 0; i < n; ++i) {
    // Draw order: X1, V, (W1, W2, W3), eps, U.
    const double x1 = rng.uniform01();
    const double v = rng.uniform01();
    double w = 0.0, w1 = 0.0, w2 = 0.0, w3 = 0.0;
    if (extended) {
      const double g1 = rng.normal(), g2 = rng.normal(), g3 = rng.normal();
      w1 = g1;
      w2 = l21 * g1 + l22 * g2;
      w3 = l31 * g1 + l32 * g2 + l33 * g3;
      w = w1 + w2 + w3;
    }
    const double het = x1 * x1 + v * v;
    const double eps = std::sqrt(het) * rng.normal();
    const double u_var = extended ? het + std::fabs(w) : het;
    const double u = std::sqrt(u_var) * rng.normal();
    const double x2 = x1 + v + (extended ? w : 0.0) + cfg.r_coef * eps + u;

    data.x(i, 0) = x1;
    data.x(i, 1) = x2;
    data.z(i, 0) = x1;
    data.z(i, 1) = v;
    if (extended) {
      data.z(i, 2) = w1;
      data.z(i, 3) = w2;
      data.z(i, 4) = w3;
    }
    (*data.f_true)(i) = cfg.gamma0 * x1 + logistic(x2);
    data.y(i) = (*data.f_true)(i) + eps;
  }
  data.validate();
  return data;
}

Dataset gen_demand_design(const DgpConfig& cfg) {
  cfg.validate();
  if (cfg.family != DgpFamily::DemandDesign)
    throw std::invalid_argument("gen_demand_design: wrong DGP family");
  const int n = cfg.n;

  Dataset data;
  data.seed = cfg.seed;
  data.y.resize(n);
  data.x.resize(n, 3);  // (P, T, S)
  data.z.resize(n, 3);  // (C, T, S)
  data.f_true = Eigen::VectorXd(n);

  const double eps_sd = std::sqrt(1.0 - cfg.rho * cfg.rho);
  Rng rng(cfg.seed);
  for (int i = 0; i < n; ++i) {
    // Draw order: V, C, T, S, eps.
    const double v = rng.normal();
    const double c = rng.normal();
    const double t = rng.uniform(0.0, 10.0);
    const double s = 1.0 + rng.uniform_int(7);
    const double eps = cfg.rho * v + eps_sd * rng.normal();

    const double ht = h_demand(t);
    const double p = 25.0 + (c + 3.0) * ht + cfg.price_noise_scale * v;
    const double f = 100.0 + (10.0 + p) * s * ht - 2.0 * p;

    data.x(i, 0) = p;
    data.x(i, 1) = t;
    data.x(i, 2) = s;
    data.z(i, 0) = c;
    data.z(i, 1) = t;
    data.z(i, 2) = s;
    (*data.f_true)(i) = f;
    data.y(i) = f + cfg.error_scale * eps;
  }
  data.validate();
  return data;
}

Dataset generate(const DgpConfig& cfg) {
  switch (cfg.family) {
    case DgpFamily::NeweyPowell:
    case DgpFamily::NeweyPowellExtended:
      return gen_newey_powell(cfg);
    case DgpFamily::AiChen:
    case DgpFamily::AiChenExtended:
      return gen_ai_chen(cfg);
    case DgpFamily::DemandDesign:
      return gen_demand_design(cfg);
  }
  throw std::logic_error("unknown DgpFamily");
}

}  // namespace iwiv
