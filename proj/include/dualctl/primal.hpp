#pragma once

#include "dualctl/bsde.hpp"
#include "dualctl/market.hpp"
#include "dualctl/preferences.hpp"
#include "dualctl/stats.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dualctl {

struct PrimalOptions {
  AdjointMode mode = AdjointMode::Regression;
  RegressionBasis basis;
  // Drift perturbation mu; the market seen by the investor has drift b + mu*sigma.
  std::optional<Perturbation> mu;
};

struct PrimalCandidate {
  double pi = 0.0;
  double value = 0.0;
  double se = 0.0;
  bool admissible = true;
  std::string reason;
};

struct PrimalSolution {
  Strategy strategy;
  double pi = 0.0;  // the constant fraction when the family is constant-pi
  double x = 1.0;
  double value = 0.0;  // E[U(X(T))]
  double se = 0.0;
  std::vector<PrimalCandidate> candidates;
  std::optional<Perturbation> mu;
  Channel price;   // S, or S_mu under a perturbation
  Channel wealth;  // X
  AdjointTriple adjoints;  // p1(T) = U'(X(T))
};

// Merton fraction b/sigma^2 for log utility. Rejects jump models and sigma = 0.
Strategy merton_log_closed_form(const MarketModel& model);

// Wealth, value and adjoints of one strategy.
PrimalSolution evaluate_primal(const MarketModel& model, const UtilityPair& utility, double x,
                               const Strategy& strategy, const PathEnsemble& ensemble,
                               const PrimalOptions& options = {});

// Argmax of the sample mean of U(X(T)) over constant fractions, with common random
// numbers; ties go to the smaller |pi|. Inadmissible candidates are reported and skipped.
PrimalSolution solve_primal_search(const MarketModel& model, const UtilityPair& utility, double x,
                                   std::span<const double> pi_grid, const PathEnsemble& ensemble,
                                   const PrimalOptions& options = {});

// Closed-form adjoints for log or power utility under a deterministic fraction:
// p1 = X^beta * exp(int_t^T kappa), beta = U''-exponent (-1 for log, alpha-1 for power).
AdjointTriple analytic_primal_adjoints(const MarketModel& model, const UtilityPair& utility,
                                       const PathEnsemble& ensemble, const Strategy& strategy,
                                       const Channel& wealth, const std::optional<Perturbation>& mu = {});

// (b + mu*sigma) p1 + sigma q1 + sum_k gamma_k r1_k nu_k.
FocResidual primal_foc_residual(const MarketModel& model, const PrimalSolution& solution);

struct HamiltonianCheck {
  double derivative = 0.0;
  double se = 0.0;
};

// Central difference of a -> E[U(X_{pi + a*beta}(T))] at a = 0 with common random numbers.
HamiltonianCheck hamiltonian_derivative_check(const MarketModel& model, const UtilityPair& utility,
                                              const PrimalSolution& solution, const TimeFunction& beta,
                                              const PathEnsemble& ensemble, double step = 1e-3);

// U(X) applied pathwise.
Eigen::VectorXd utility_values(const UtilityPair& utility, const Eigen::VectorXd& wealth);

// Mean fraction pi(t) of a strategy at each step (first path for deterministic fractions).
double fraction_at(const Strategy& strategy, int step, double t);

}  // namespace dualctl
