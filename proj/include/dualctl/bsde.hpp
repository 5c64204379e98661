#pragma once

#include "dualctl/market.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace dualctl {

enum class AdjointMode { Analytic, Regression };

const char* to_string(AdjointMode mode);

struct StepDiagnostics {
  int degree_used = 0;
  int states_used = 0;
  double condition_number = 1.0;
  double residual_rms = 0.0;
  double fit_standard_error = 0.0;  // residual_rms * sqrt(columns / paths)
};

struct BsdeDiagnostics {
  std::vector<StepDiagnostics> steps;  // index i covers [t_i, t_{i+1}]
  double regression_tolerance = 0.0;   // 3 x the largest per-step fit standard error
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const BsdeDiagnostics& d);

// Discrete adjoint processes. p is paths x (steps + 1); q and each r_k are
// paths x steps and hold the integrands over [t_i, t_{i+1}].
struct AdjointTriple {
  Channel p;
  Eigen::MatrixXd q;
  std::vector<Eigen::MatrixXd> r;
  AdjointMode mode = AdjointMode::Regression;
  BsdeDiagnostics diagnostics;
};

// dt-term f = cp(t) p + cq(t) q + sum_k cr_k(t) r_k + c0(t) of dp = f dt + q dB + sum_k r_k dN~_k.
// Unset coefficients are zero.
struct DriverSpec {
  TimeFunction p_coef;
  TimeFunction q_coef;
  std::vector<TimeFunction> r_coef;
  TimeFunction constant;

  static DriverSpec zero() { return {}; }
  bool is_zero() const { return !p_coef && !q_coef && !constant && r_coef.empty(); }
};

// Polynomials of total degree <= degree in standardized state variables.
struct RegressionBasis {
  int degree = 2;
};

// Regressor channels, each paths x (steps + 1), e.g. ln S and ln X.
using StateChannels = std::vector<Channel>;

// p(t) = E[terminal | F_t] with (q, r) from the martingale increment regression.
AdjointTriple martingale_representation(const PathEnsemble& ensemble, const Eigen::VectorXd& terminal,
                                        const StateChannels& states, RegressionBasis basis = {});

// Backward least-squares Monte Carlo sweep for a BSDE with affine driver.
// Per step, p_{i+1} is regressed jointly on {phi, phi*dB, phi*dN~_k};
// the p-dependence of the driver is resolved implicitly.
AdjointTriple solve_linear_bsde(const PathEnsemble& ensemble, const DriverSpec& driver,
                                const Eigen::VectorXd& terminal, const StateChannels& states,
                                RegressionBasis basis = {});

struct ResidualStep {
  double mean_residual = 0.0;      // E[e_i | F_i]
  double brownian_residual = 0.0;  // E[e_i dB_i | F_i] / sqrt(dt)
  double jump_residual = 0.0;      // max_k E[e_i dN~_k | F_i] / sqrt(nu_k dt)
};

struct ResidualReport {
  std::vector<ResidualStep> steps;
  double max_residual = 0.0;
  double mean_residual = 0.0;
};

// Out-of-sample check of the one-step identity
//   e_i = p_{i+1} - p_i - f_i dt - q_i dB_i - sum_k r_k,i dN~_k,i.
// Conditional moments of e_i are fitted on one half of the paths and their RMS
// is evaluated on the other half.
ResidualReport bsde_residual_report(const AdjointTriple& triple, const PathEnsemble& ensemble,
                                    const DriverSpec& driver, const StateChannels& states,
                                    RegressionBasis basis = {}, std::uint64_t split_seed = 7);

}  // namespace dualctl
