#pragma once

#include "dualctl/dual.hpp"
#include "dualctl/primal.hpp"

#include <vector>

namespace dualctl {

struct RobustClosedForm {
  Perturbation mu;   // -b / (2 sigma)
  Strategy fraction; // b / (2 sigma^2)
};

// Log utility, rho = x^2/2, no jumps. Anything else is rejected.
RobustClosedForm robust_log_closed_form(const MarketModel& model, const UtilityPair& utility, const Penalty& penalty);

// Unit counts b / (2 sigma^2 G S_mu) of the closed-form robust portfolio.
Eigen::MatrixXd robust_log_units(const MarketModel& model, const Channel& density, const Channel& perturbed_price);

struct RobustOptions {
  AdjointMode mode = AdjointMode::Regression;
  RegressionBasis basis;
};

struct RobustPrimalSolution {
  PrimalSolution primal;  // strategy, wealth under S_mu, adjoints; primal.mu is set
  double mu = 0.0;
  double pi = 0.0;
  double value = 0.0;  // I(phi, mu) = E[U(X(T))] + int rho(mu) dt
  double se = 0.0;
  Penalty penalty;
  std::vector<double> pi_grid, mu_grid;
  Eigen::MatrixXd payoff;     // rows: pi, columns: mu
  Eigen::MatrixXd payoff_se;
  bool pure_saddle = false;
  int row = 0, col = 0;                  // chosen cell
  int minimax_row = 0, minimax_col = 0;  // inf_mu sup_pi
  int maximin_row = 0, maximin_col = 0;  // sup_pi inf_mu
  double minimax = 0.0, maximin = 0.0, gap = 0.0;
};

// Full payoff matrix over constant pi x constant mu with common random numbers.
// Returns a pure saddle cell when one exists, otherwise the minimax cell; the gap is always reported.
RobustPrimalSolution solve_robust_saddle(const MarketModel& model, const UtilityPair& utility, const Penalty& penalty,
                                         double x, const std::vector<double>& pi_grid,
                                         const std::vector<double>& mu_grid, const PathEnsemble& ensemble,
                                         const RobustOptions& options = {});

// Solution object for a given (pi, mu) without searching.
RobustPrimalSolution evaluate_robust_primal(const MarketModel& model, const UtilityPair& utility,
                                            const Penalty& penalty, double x, const Strategy& strategy, double mu,
                                            const PathEnsemble& ensemble, const RobustOptions& options = {});

// [0]: portfolio condition (b + mu sigma) p1 + sigma q1 + sum gamma r1 nu,
// [1]: perturbation condition rho'(mu) + phi S_mu sigma p1.
std::vector<FocResidual> robust_primal_foc_residuals(const MarketModel& model, const RobustPrimalSolution& solution);

struct RobustDualSolution {
  DualSolution dual;  // control.mu is set
  double mu = 0.0;
  double value = 0.0;  // J = E[-V(G(T))] - int rho(mu) dt
  double se = 0.0;
  Penalty penalty;
  std::vector<DualCandidate> candidates;
};

RobustDualSolution evaluate_robust_dual(const MarketModel& model, const UtilityPair& utility, const Penalty& penalty,
                                        const ScenarioControl& control, const PathEnsemble& ensemble,
                                        const DualOptions& options = {});

// Argmax of J over a product grid of constant theta1 (per mark) and constant mu,
// theta0 solved from the perturbed constraint, optionally golden-section polished.
RobustDualSolution solve_robust_dual_search(const MarketModel& model, const UtilityPair& utility,
                                            const Penalty& penalty, double y,
                                            const std::vector<std::vector<double>>& theta1_grid,
                                            const std::vector<double>& mu_grid, const PathEnsemble& ensemble,
                                            const DualOptions& options = {});

// Jump conditions per mark followed by the perturbation condition rho'(mu) + G q2.
std::vector<FocResidual> robust_dual_foc_residuals(const MarketModel& model, const RobustDualSolution& solution);

// (rho')^{-1}(-G q2).
double mu_from_foc(const Penalty& penalty, double density, double q2);

}  // namespace dualctl
