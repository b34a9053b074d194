#pragma once

#include <cstdint>
#include <string>

#include "iwiv/dataset.hpp"

namespace iwiv {

enum class DgpFamily {
  NeweyPowell,
  NeweyPowellExtended,
  AiChen,
  AiChenExtended,
  DemandDesign,
};

std::string to_string(DgpFamily family);
DgpFamily dgp_family_from_string(const std::string& name);

struct DgpConfig {
  DgpFamily family = DgpFamily::NeweyPowell;
  int n = 1000;
  std::uint64_t seed = 0;
  double r_coef = 0.9;             // endogeneity strength in the Ai-Chen design
  double gamma0 = 1.0;             // linear coefficient in the Ai-Chen outcome
  double rho = 0.0;                // error/price-noise correlation, demand design
  double price_noise_scale = 1.0;  // 10 in the amplified-endogeneity variant
  double error_scale = 1.0;        // 100 in the amplified-endogeneity variant

  void validate() const;
};

/// ln(|x-1|+1) * sgn(x-1), with sgn(0) = 0.
double f_star_newey(double x);

/// 2((t-5)^4/600 + exp(-4(t-5)^2) + t/10 - 2).
double h_demand(double t);

/// exp(u)/(1+exp(u)), the Ai-Chen nonlinearity h0.
double logistic(double u);

// Each generator is a pure function of its config: same (family, n, seed,
// params) reproduces bit-identical arrays. f_true is always filled.
Dataset gen_newey_powell(const DgpConfig& cfg);
Dataset gen_ai_chen(const DgpConfig& cfg);
Dataset gen_demand_design(const DgpConfig& cfg);

/// Dispatch on cfg.family.
Dataset generate(const DgpConfig& cfg);

}  // namespace iwiv
