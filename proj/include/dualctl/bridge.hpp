#pragma once

#include "dualctl/dual.hpp"
#include "dualctl/primal.hpp"
#include "dualctl/robust.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace dualctl {

enum class BridgeDirection { PrimalToDual, DualToPrimal, RobustPrimalToDual, RobustDualToPrimal };

const char* to_string(BridgeDirection d);

struct IdentityCheck {
  std::string name;
  std::string identity;
  double max_abs = 0.0;
  double max_rel = 0.0;
  bool relative = false;  // compare max_rel (true) or max_abs (false) with the tolerance
  double tolerance = 0.0;
  bool informational = false;
  bool passed = true;
};

struct BridgeTolerances {
  double analytic = 1e-12;   // absolute, analytic adjoints
  double regression = 0.05;  // relative, regression adjoints
};

struct BridgeReport {
  BridgeDirection direction = BridgeDirection::PrimalToDual;
  AdjointMode mode = AdjointMode::Analytic;
  std::vector<IdentityCheck> checks;
  bool passed() const;
  const IdentityCheck& check(const std::string& name) const;
};

nlohmann::json to_json(const BridgeReport& r);

struct PrimalToDual {
  ScenarioControl control;  // theta1 = r1/p1, theta0 from the constraint, y = p1(0)
  double y = 0.0;
  Channel density;
  Eigen::MatrixXd theta0_from_adjoints;  // q1/p1, kept for comparison
  BridgeReport report;
};

struct DualToPrimal {
  Strategy strategy;  // phi = q2/(sigma S_mu), jump branch where sigma vanishes
  double x = 0.0;     // p2(0)
  Channel wealth;
  Eigen::MatrixXd fraction;  // phi S / X
  BridgeReport report;
};

// Throws BridgeViolation when theta1 <= -1 + epsilon somewhere.
PrimalToDual primal_to_dual(const MarketModel& model, const UtilityPair& utility, const PrimalSolution& primal,
                            const PathEnsemble& ensemble, const BridgeTolerances& tol = {});

// Throws BridgeViolation when the constructed wealth leaves (0, inf).
DualToPrimal dual_to_primal(const MarketModel& model, const UtilityPair& utility, const DualSolution& dual,
                            const PathEnsemble& ensemble, const BridgeTolerances& tol = {});

PrimalToDual robust_primal_to_dual(const MarketModel& model, const UtilityPair& utility,
                                   const RobustPrimalSolution& primal, const PathEnsemble& ensemble,
                                   const BridgeTolerances& tol = {});

DualToPrimal robust_dual_to_primal(const MarketModel& model, const UtilityPair& utility,
                                   const RobustDualSolution& dual, const PathEnsemble& ensemble,
                                   const BridgeTolerances& tol = {});

struct ProductDeviation {
  double max_abs = 0.0;
  double rms = 0.0;
  double mean_square = 0.0;
};

// |X(t) G(t) - x y| over all paths and grid times.
ProductDeviation verify_product_identity(const Channel& wealth, const Channel& density, double x, double y);

}  // namespace dualctl
