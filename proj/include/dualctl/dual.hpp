#pragma once

#include "dualctl/bsde.hpp"
#include "dualctl/market.hpp"
#include "dualctl/preferences.hpp"
#include "dualctl/stats.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dualctl {

inline constexpr double kSigmaZero = 1e-14;  // |sigma| below this counts as degenerate

struct DualOptions {
  AdjointMode mode = AdjointMode::Regression;
  RegressionBasis basis;
  UpdateScheme scheme = UpdateScheme::Exact;
  bool refine = true;  // golden-section polish of the grid argmax (one mark at a time)
  int refine_iterations = 50;
};

struct DualCandidate {
  std::vector<double> theta1;
  double mu = 0.0;
  double value = 0.0;  // objective being maximized
  double se = 0.0;
  bool admissible = true;
  std::string reason;
};

struct DualSolution {
  ScenarioControl control;
  std::vector<double> theta1;  // constant per-mark parameters of the family
  double y = 1.0;
  double value = 0.0;  // E[-V(G(T))]
  double se = 0.0;
  std::vector<DualCandidate> candidates;
  Channel price;    // S, or S_mu when the control carries a perturbation
  Channel density;  // G
  AdjointTriple adjoints;  // p2(T) = -V'(G(T))
  DriverSpec driver;
};

// theta0 = -b/sigma. Rejects jump models and sigma = 0.
ScenarioControl unique_scenario_no_jumps(const MarketModel& model, double y);

// Control with constant theta1 per mark and theta0 solved from
//   b + mu*sigma + sigma*theta0 + sum_k gamma_k theta1_k nu_k = 0.
// Where sigma vanishes theta0 = 0 and theta1 receives the minimal-norm correction
// that satisfies the constraint. Throws InvalidInput when no correction exists.
ScenarioControl constrained_scenario(const MarketModel& model, const std::vector<double>& theta1, double y,
                                     std::optional<Perturbation> mu = {});

// dt-coefficients of the reduced dual adjoint equation: q2 (b + mu*sigma)/sigma, or
// where sigma vanishes the jump form (b + mu*sigma) * sum_k w_k r2_k / gamma_k with
// weights w_k proportional to gamma_k^2 nu_k.
DriverSpec dual_driver(const MarketModel& model, std::optional<Perturbation> mu = {});

// Closed form p2 = G^beta exp(int_t^T c) for log/power conjugates and deterministic theta.
AdjointTriple analytic_dual_adjoints(const MarketModel& model, const UtilityPair& utility,
                                     const PathEnsemble& ensemble, const ScenarioControl& control,
                                     const Channel& density);

DualSolution evaluate_dual(const MarketModel& model, const UtilityPair& utility, const ScenarioControl& control,
                           const PathEnsemble& ensemble, const DualOptions& options = {});

// Argmax of the sample mean of -V(G(T)) over a product grid of constant theta1 values
// (one list per mark). Jump-free models collapse to the unique scenario.
DualSolution solve_dual_search(const MarketModel& model, const UtilityPair& utility, double y,
                               const std::vector<std::vector<double>>& theta1_grid,
                               const PathEnsemble& ensemble, const DualOptions& options = {});

// Sample mean and standard error of -V(G(T)) for a deterministic control.
SampleStats dual_objective(const MarketModel& model, const UtilityPair& utility, const ScenarioControl& control,
                           const PathEnsemble& ensemble);

// -(q2/sigma) gamma_k + r2_k per mark; degenerate-sigma steps are excluded (set to 0).
std::vector<FocResidual> dual_foc_residual(const MarketModel& model, const DualSolution& solution);

struct ReplicatingPortfolio {
  Strategy strategy;         // unit counts phi
  Eigen::MatrixXd units;     // paths x steps
  double x = 0.0;            // p2(0)
  int sigma_steps = 0;       // steps using q2 / (sigma S)
  int jump_steps = 0;        // steps using the jump branch
  int idle_steps = 0;        // sigma = gamma = 0, phi = 0
};

// phi = q2/(sigma S) where sigma != 0, else the gamma^2 nu weighted r2_k/(gamma_k S),
// else 0. Throws SolverError when neither channel exists but the adjoints move.
ReplicatingPortfolio replicating_portfolio(const MarketModel& model, const DualSolution& solution);

struct ReplicationReport {
  double rmse = 0.0;
  double relative_rmse = 0.0;       // sqrt(mean(((X - F)/F)^2))
  double max_relative_error = 0.0;  // max |X - F| / |F|
  double mean_square_error = 0.0;
};

// Terminal wealth of (strategy, x) against a per-path claim.
ReplicationReport replication_check(const MarketModel& model, const Strategy& strategy, double x,
                                    const Eigen::VectorXd& target, const PathEnsemble& ensemble,
                                    UpdateScheme scheme = UpdateScheme::Euler,
                                    std::optional<Perturbation> mu = {});

}  // namespace dualctl
