#include "dualctl/bridge.hpp"

#include "dualctl/errors.hpp"

#include <cmath>

namespace dualctl {

const char* to_string(BridgeDirection d) {
  switch (d) {
    case BridgeDirection::PrimalToDual: return "primal_to_dual";
    case BridgeDirection::DualToPrimal: return "dual_to_primal";
    case BridgeDirection::RobustPrimalToDual: return "robust_primal_to_dual";
    default: return "robust_dual_to_primal";
  }
}

bool BridgeReport::passed() const {
  for (const auto& c : checks)
    if (!c.informational && !c.passed) return false;
  return true;
}

const IdentityCheck& BridgeReport::check(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw InvalidInput("bridge report: no check named " + name);
}

nlohmann::json to_json(const BridgeReport& r) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"name", c.name},
                      {"identity", c.identity},
                      {"max_abs", c.max_abs},
                      {"max_rel", c.max_rel},
                      {"metric", c.relative ? "relative" : "absolute"},
                      {"tolerance", c.tolerance},
                      {"informational", c.informational},
                      {"passed", c.passed}});
  }
  return {{"direction", to_string(r.direction)}, {"adjoint_mode", to_string(r.mode)}, {"checks", checks},
          {"passed", r.passed()}};
}

namespace {

IdentityCheck compare(std::string name, std::string identity, const Eigen::MatrixXd& lhs, const Eigen::MatrixXd& rhs,
                      AdjointMode mode, const BridgeTolerances& tol) {
  IdentityCheck c;
  c.name = std::move(name);
  c.identity = std::move(identity);
  const Eigen::ArrayXXd d = (lhs - rhs).array().abs();
  c.max_abs = d.maxCoeff();
  c.max_rel = (d / rhs.array().abs().max(1e-300)).maxCoeff();
  c.relative = mode == AdjointMode::Regression;
  c.tolerance = c.relative ? tol.regression : tol.analytic;
  c.passed = (c.relative ? c.max_rel : c.max_abs) < c.tolerance;
  return c;
}

IdentityCheck scalar_check(std::string name, std::string identity, double value, double tolerance) {
  IdentityCheck c;
  c.name = std::move(name);
  c.identity = std::move(identity);
  c.max_abs = std::abs(value);
  c.max_rel = c.max_abs;
  c.tolerance = tolerance;
  c.passed = c.max_abs <= tolerance;
  return c;
}

// Collapses a paths x steps matrix to one broadcast row when all rows agree.
AdaptedProcess as_process(const Eigen::MatrixXd& m) {
  const Eigen::RowVectorXd first = m.row(0);
  const double scale = std::max(1.0, first.cwiseAbs().maxCoeff());
  if (((m.rowwise() - first).cwiseAbs().maxCoeff()) <= 1e-12 * scale) return AdaptedProcess::on_paths(first);
  return AdaptedProcess::on_paths(m);
}

Eigen::MatrixXd marginal(const UtilityPair& u, const Channel& x) { return x.unaryExpr([&](double v) { return u.dU(v); }); }

PrimalToDual primal_to_dual_impl(const MarketModel& model, const UtilityPair& utility, const PrimalSolution& primal,
                                 const PathEnsemble& ensemble, const BridgeTolerances& tol, BridgeDirection dir) {
  const auto& a = primal.adjoints;
  const int n = ensemble.n_steps();
  const auto np = ensemble.n_paths();
  const std::size_t K = model.n_marks();
  if (a.p.rows() != np || a.p.cols() != n + 1) throw InvalidInput("bridge: adjoints do not match ensemble");
  const Eigen::MatrixXd p_left = a.p.leftCols(n);
  if ((p_left.array() <= 0.0).any()) throw BridgeViolation("bridge: p1 must be positive");

  std::vector<Eigen::MatrixXd> th1(K);
  for (std::size_t k = 0; k < K; ++k) {
    th1[k] = a.r[k].cwiseQuotient(p_left);
    if (model.marks[k].intensity > 0.0 && (th1[k].array() <= -1.0 + kThetaFloor).any())
      throw BridgeViolation("bridge: r1/p1 <= -1 + epsilon, the density would not stay positive");
  }
  Eigen::MatrixXd th0(np, n);
  for (int i = 0; i < n; ++i) {
    const double t = ensemble.grid().time(i);
    const double s = model.sigma(t);
    const double b = model.b(t) + (primal.mu ? (*primal.mu)(t) : 0.0) * s;
    if (std::abs(s) < kSigmaZero) {
      double energy = 0.0;
      for (std::size_t k = 0; k < K; ++k) energy += std::pow(model.gamma(t, k) * model.marks[k].intensity, 2);
      Eigen::VectorXd gap = Eigen::VectorXd::Constant(np, b);
      for (std::size_t k = 0; k < K; ++k) gap += model.gamma(t, k) * model.marks[k].intensity * th1[k].col(i);
      if (energy == 0.0) {
        if (gap.cwiseAbs().maxCoeff() > 0.0) throw BridgeViolation("bridge: no martingale measure where sigma = 0");
      } else {
        for (std::size_t k = 0; k < K; ++k)
          th1[k].col(i) -= (model.gamma(t, k) * model.marks[k].intensity / energy) * gap;
      }
      th0.col(i).setZero();
      continue;
    }
    Eigen::VectorXd acc = Eigen::VectorXd::Constant(np, b);
    for (std::size_t k = 0; k < K; ++k) acc += model.gamma(t, k) * model.marks[k].intensity * th1[k].col(i);
    th0.col(i) = -acc / s;
  }

  PrimalToDual out;
  out.theta0_from_adjoints = a.q.cwiseQuotient(p_left);
  out.y = a.p.col(0).mean();
  out.control.y = out.y;
  out.control.mu = primal.mu;
  out.control.theta0 = as_process(th0);
  for (std::size_t k = 0; k < K; ++k) out.control.theta1.push_back(as_process(th1[k]));
  out.density = density_paths(ensemble, out.control);

  auto& r = out.report;
  r.direction = dir;
  r.mode = a.mode;
  const Eigen::MatrixXd ux = marginal(utility, primal.wealth.col(n));
  r.checks.push_back(compare("terminal_link", "U'(X(T)) = G(T)", ux, out.density.col(n), a.mode, tol));
  r.checks.push_back(compare("process_link", "G(t) = p1(t)", out.density, a.p, a.mode, tol));
  r.checks.push_back(scalar_check("initial_value_link", "y = p1(0)", out.y - a.p(0, 0), tol.analytic));
  if (utility.family() == UtilityFamily::Log) {
    const Eigen::MatrixXd prod = primal.wealth.cwiseProduct(out.density);
    const Eigen::MatrixXd target = Eigen::MatrixXd::Constant(np, n + 1, primal.x * out.y);
    r.checks.push_back(compare("product_invariant", "X(t) G(t) = x y", prod, target, a.mode, tol));
  }
  r.checks.push_back(scalar_check("constraint", "b + mu sigma + sigma theta0 + sum gamma theta1 nu = 0",
                                  max_elmm_residual(model, ensemble.grid(), out.control, np), 1e-12));
  auto gap = compare("theta0_consistency", "theta0 = q1/p1", th0, out.theta0_from_adjoints, a.mode, tol);
  if (a.mode == AdjointMode::Analytic) {
    gap.tolerance = 1e-10;
    gap.passed = gap.max_abs < gap.tolerance;
  } else {
    gap.informational = true;
  }
  r.checks.push_back(gap);
  return out;
}

DualToPrimal dual_to_primal_impl(const MarketModel& model, const UtilityPair& utility, const DualSolution& dual,
                                 const PathEnsemble& ensemble, const BridgeTolerances& tol, BridgeDirection dir) {
  const auto& a = dual.adjoints;
  const int n = ensemble.n_steps();
  const auto np = ensemble.n_paths();
  const auto rp = replicating_portfolio(model, dual);
  DualToPrimal out;
  out.strategy = rp.strategy;
  out.x = rp.x;
  if (!(out.x > 0.0)) throw BridgeViolation("bridge: p2(0) must be positive");
  WealthOptions wo;
  wo.scheme = UpdateScheme::Exact;
  wo.perturbation = dual.control.mu;
  try {
    out.wealth = wealth_paths(model, ensemble, out.strategy, out.x, wo);
  } catch (const AdmissibilityError& e) {
    throw BridgeViolation(std::string("bridge: constructed portfolio is not admissible: ") + e.what());
  }
  out.fraction = rp.units.cwiseProduct(dual.price.leftCols(n)).cwiseQuotient(out.wealth.leftCols(n));

  auto& r = out.report;
  r.direction = dir;
  r.mode = a.mode;
  const Eigen::MatrixXd claim = dual.density.col(n).unaryExpr([&](double g) { return utility.inverse_marginal(g); });
  r.checks.push_back(compare("terminal_link", "X(T) = -V'(G(T))", out.wealth.col(n), claim, a.mode, tol));
  r.checks.push_back(compare("process_link", "X(t) = p2(t)", out.wealth, a.p, a.mode, tol));
  r.checks.push_back(scalar_check("initial_value_link", "x = p2(0)", out.x - a.p(0, 0), tol.analytic));
  if (utility.family() == UtilityFamily::Log) {
    const Eigen::MatrixXd prod = out.wealth.cwiseProduct(dual.density);
    const Eigen::MatrixXd target = Eigen::MatrixXd::Constant(np, n + 1, out.x * dual.y);
    r.checks.push_back(compare("product_invariant", "X(t) G(t) = x y", prod, target, a.mode, tol));
  }
  return out;
}

}  // namespace

PrimalToDual primal_to_dual(const MarketModel& model, const UtilityPair& utility, const PrimalSolution& primal,
                            const PathEnsemble& ensemble, const BridgeTolerances& tol) {
  return primal_to_dual_impl(model, utility, primal, ensemble, tol,
                             primal.mu ? BridgeDirection::RobustPrimalToDual : BridgeDirection::PrimalToDual);
}

DualToPrimal dual_to_primal(const MarketModel& model, const UtilityPair& utility, const DualSolution& dual,
                            const PathEnsemble& ensemble, const BridgeTolerances& tol) {
  return dual_to_primal_impl(model, utility, dual, ensemble, tol,
                             dual.control.mu ? BridgeDirection::RobustDualToPrimal : BridgeDirection::DualToPrimal);
}

PrimalToDual robust_primal_to_dual(const MarketModel& model, const UtilityPair& utility,
                                   const RobustPrimalSolution& primal, const PathEnsemble& ensemble,
                                   const BridgeTolerances& tol) {
  if (!primal.primal.mu) throw InvalidInput("robust bridge: solution carries no perturbation");
  return primal_to_dual_impl(model, utility, primal.primal, ensemble, tol, BridgeDirection::RobustPrimalToDual);
}

DualToPrimal robust_dual_to_primal(const MarketModel& model, const UtilityPair& utility,
                                   const RobustDualSolution& dual, const PathEnsemble& ensemble,
                                   const BridgeTolerances& tol) {
  if (!dual.dual.control.mu) throw InvalidInput("robust bridge: solution carries no perturbation");
  return dual_to_primal_impl(model, utility, dual.dual, ensemble, tol, BridgeDirection::RobustDualToPrimal);
}

ProductDeviation verify_product_identity(const Channel& wealth, const Channel& density, double x, double y) {
  if (wealth.rows() != density.rows() || wealth.cols() != density.cols())
    throw InvalidInput("verify_product_identity: channel shapes differ");
  const Eigen::ArrayXXd d = (wealth.cwiseProduct(density).array() - x * y).abs();
  ProductDeviation p;
  p.max_abs = d.maxCoeff();
  p.mean_square = d.square().mean();
  p.rms = std::sqrt(p.mean_square);
  return p;
}

}  // namespace dualctl
