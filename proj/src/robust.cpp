#include "dualctl/robust.hpp"

#include "dualctl/errors.hpp"

#include <cmath>
#include <limits>

namespace dualctl {

RobustClosedForm robust_log_closed_form(const MarketModel& model, const UtilityPair& utility, const Penalty& penalty) {
  if (model.has_jumps()) throw InvalidInput("robust_log_closed_form: the closed form excludes jumps");
  if (utility.family() != UtilityFamily::Log) throw InvalidInput("robust_log_closed_form: requires log utility");
  if (penalty.scale() != 1.0) throw InvalidInput("robust_log_closed_form: requires rho(x) = x^2/2");
  auto b = model.drift;
  auto s = model.volatility;
  auto check = [](double sig, double t) {
    if (sig == 0.0) throw InvalidInput("robust_log_closed_form: sigma vanishes at t=" + std::to_string(t));
  };
  RobustClosedForm cf;
  cf.mu.mu = [b, s, check](double t) {
    const double sig = s(t);
    check(sig, t);
    return -b(t) / (2.0 * sig);
  };
  cf.fraction = Strategy::fraction(AdaptedProcess::of_time([b, s, check](double t) {
    const double sig = s(t);
    check(sig, t);
    return b(t) / (2.0 * sig * sig);
  }));
  return cf;
}

Eigen::MatrixXd robust_log_units(const MarketModel& model, const Channel& density, const Channel& perturbed_price) {
  const auto n = density.cols() - 1;
  const double dt = model.horizon / static_cast<double>(n);
  Eigen::MatrixXd phi(density.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    const double s = model.sigma(t);
    phi.col(i) = (model.b(t) / (2.0 * s * s)) / (density.col(i).array() * perturbed_price.col(i).array());
  }
  return phi;
}

RobustPrimalSolution evaluate_robust_primal(const MarketModel& model, const UtilityPair& utility,
                                            const Penalty& penalty, double x, const Strategy& strategy, double mu,
                                            const PathEnsemble& ensemble, const RobustOptions& options) {
  RobustPrimalSolution r;
  PrimalOptions po;
  po.mode = options.mode;
  po.basis = options.basis;
  po.mu = Perturbation::constant(mu);
  r.primal = evaluate_primal(model, utility, x, strategy, ensemble, po);
  r.mu = mu;
  r.pi = r.primal.pi;
  r.penalty = penalty;
  r.value = r.primal.value + penalty.rho(mu) * model.horizon;
  r.se = r.primal.se;
  return r;
}

RobustPrimalSolution solve_robust_saddle(const MarketModel& model, const UtilityPair& utility, const Penalty& penalty,
                                         double x, const std::vector<double>& pi_grid,
                                         const std::vector<double>& mu_grid, const PathEnsemble& ensemble,
                                         const RobustOptions& options) {
  if (pi_grid.empty() || mu_grid.empty()) throw InvalidInput("robust saddle: empty grid");
  const auto np = static_cast<Eigen::Index>(pi_grid.size());
  const auto nm = static_cast<Eigen::Index>(mu_grid.size());
  Eigen::MatrixXd payoff(np, nm), se(np, nm);
  for (Eigen::Index j = 0; j < nm; ++j) {
    const double mu = mu_grid[static_cast<std::size_t>(j)];
    const double pen = penalty.rho(mu) * model.horizon;
    for (Eigen::Index i = 0; i < np; ++i) {
      const Eigen::VectorXd xt = terminal_wealth(model, ensemble, pi_grid[static_cast<std::size_t>(i)], x, mu);
      const auto st = sample_stats(utility_values(utility, xt));
      payoff(i, j) = st.mean + pen;
      se(i, j) = st.se;
    }
  }
  auto tol = [](double v) { return 1e-12 * std::max(1.0, std::abs(v)); };

  RobustPrimalSolution best;
  // inf over mu of sup over pi
  best.minimax = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < nm; ++j) {
    Eigen::Index i;
    const double m = payoff.col(j).maxCoeff(&i);
    if (m < best.minimax - tol(m)) {
      best.minimax = m;
      best.minimax_row = static_cast<int>(i);
      best.minimax_col = static_cast<int>(j);
    }
  }
  best.maximin = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < np; ++i) {
    Eigen::Index j;
    const double m = payoff.row(i).minCoeff(&j);
    if (m > best.maximin + tol(m)) {
      best.maximin = m;
      best.maximin_row = static_cast<int>(i);
      best.maximin_col = static_cast<int>(j);
    }
  }
  best.gap = best.minimax - best.maximin;

  // Pure saddle: largest in its column (over pi), smallest in its row (over mu).
  int row = -1, col = -1;
  double size = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < np; ++i) {
    for (Eigen::Index j = 0; j < nm; ++j) {
      const double v = payoff(i, j);
      if (payoff.col(j).maxCoeff() > v + tol(v) || payoff.row(i).minCoeff() < v - tol(v)) continue;
      const double s = std::abs(pi_grid[static_cast<std::size_t>(i)]) + std::abs(mu_grid[static_cast<std::size_t>(j)]);
      if (s < size) {
        size = s;
        row = static_cast<int>(i);
        col = static_cast<int>(j);
      }
    }
  }
  best.pure_saddle = row >= 0;
  if (!best.pure_saddle) {
    row = best.minimax_row;
    col = best.minimax_col;
  }
  RobustPrimalSolution sol = evaluate_robust_primal(model, utility, penalty, x,
                                                    Strategy::constant_fraction(pi_grid[static_cast<std::size_t>(row)]),
                                                    mu_grid[static_cast<std::size_t>(col)], ensemble, options);
  sol.pi_grid = pi_grid;
  sol.mu_grid = mu_grid;
  sol.payoff = std::move(payoff);
  sol.payoff_se = std::move(se);
  sol.pure_saddle = best.pure_saddle;
  sol.row = row;
  sol.col = col;
  sol.minimax_row = best.minimax_row;
  sol.minimax_col = best.minimax_col;
  sol.maximin_row = best.maximin_row;
  sol.maximin_col = best.maximin_col;
  sol.minimax = best.minimax;
  sol.maximin = best.maximin;
  sol.gap = best.gap;
  return sol;
}

std::vector<FocResidual> robust_primal_foc_residuals(const MarketModel& model, const RobustPrimalSolution& solution) {
  std::vector<FocResidual> out;
  out.push_back(primal_foc_residual(model, solution.primal));
  const auto& pr = solution.primal;
  const auto& a = pr.adjoints;
  const auto np = a.q.rows();
  const auto n = a.q.cols();
  const double dt = model.horizon / static_cast<double>(n);
  Eigen::MatrixXd pen(np, n), expo(np, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    pen.col(i).setConstant(solution.penalty.derivative(solution.mu));
    for (Eigen::Index p = 0; p < np; ++p) {
      const double v = pr.strategy.value(p, i, t, pr.wealth(p, i), pr.price(p, i));
      const double held = pr.strategy.kind == Parameterization::Fraction ? v * pr.wealth(p, i) : v * pr.price(p, i);
      expo(p, i) = held * model.sigma(t) * a.p(p, i);
    }
  }
  const Eigen::MatrixXd res = pen + expo;
  out.push_back(summarize_foc("robust_primal_perturbation", res, {&pen, &expo}));
  return out;
}

RobustDualSolution evaluate_robust_dual(const MarketModel& model, const UtilityPair& utility, const Penalty& penalty,
                                        const ScenarioControl& control, const PathEnsemble& ensemble,
                                        const DualOptions& options) {
  if (!control.mu) throw InvalidInput("robust dual: control must carry a perturbation");
  RobustDualSolution r;
  r.dual = evaluate_dual(model, utility, control, ensemble, options);
  r.mu = (*control.mu)(0.0);
  r.penalty = penalty;
  double pen = 0.0;
  const auto& g = ensemble.grid();
  for (int i = 0; i < g.n_steps(); ++i) pen += penalty.rho((*control.mu)(g.time(i))) * g.dt();
  r.value = r.dual.value - pen;
  r.se = r.dual.se;
  return r;
}

namespace {

// Nearest grid neighbours below and above v (v itself when at the boundary).
std::pair<double, double> bracket(const std::vector<double>& grid, double v) {
  double lo = v, hi = v;
  for (double g : grid) {
    if (g < v && (lo == v || g > lo)) lo = g;
    if (g > v && (hi == v || g < hi)) hi = g;
  }
  return {lo, hi};
}

}  // namespace

RobustDualSolution solve_robust_dual_search(const MarketModel& model, const UtilityPair& utility,
                                            const Penalty& penalty, double y,
                                            const std::vector<std::vector<double>>& theta1_grid,
                                            const std::vector<double>& mu_grid, const PathEnsemble& ensemble,
                                            const DualOptions& options) {
  if (mu_grid.empty()) throw InvalidInput("robust dual search: empty mu grid");
  const std::size_t K = model.n_marks();
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < K; ++k)
    if (model.marks[k].intensity > 0.0) active.push_back(k);
  if (!active.empty() && theta1_grid.size() != K)
    throw InvalidInput("robust dual search: one theta1 grid per mark required");

  std::vector<DualCandidate> cands;
  auto objective = [&](const std::vector<double>& th1, double mu, DualCandidate* rec) {
    DualCandidate c;
    c.theta1 = th1;
    c.mu = mu;
    try {
      const auto ctrl = constrained_scenario(model, th1, y, Perturbation::constant(mu));
      const auto st = dual_objective(model, utility, ctrl, ensemble);
      c.value = st.mean - penalty.rho(mu) * model.horizon;
      c.se = st.se;
      if (!std::isfinite(c.value)) throw InvalidInput("non-finite dual objective");
    } catch (const InvalidInput& e) {
      c.admissible = false;
      c.reason = e.what();
      c.value = -std::numeric_limits<double>::infinity();
    }
    if (rec) *rec = c;
    return c.value;
  };

  std::vector<double> best(K, 0.0);
  double best_mu = 0.0;
  double best_value = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> idx(active.size(), 0);
  while (true) {
    std::vector<double> th1(K, 0.0);
    for (std::size_t j = 0; j < active.size(); ++j) th1[active[j]] = theta1_grid[active[j]][idx[j]];
    for (double mu : mu_grid) {
      DualCandidate c;
      objective(th1, mu, &c);
      cands.push_back(c);
      if (c.admissible && c.value > best_value) {
        best_value = c.value;
        best = th1;
        best_mu = mu;
      }
    }
    std::size_t j = 0;
    while (j < active.size() && ++idx[j] == theta1_grid[active[j]].size()) idx[j++] = 0;
    if (j == active.size()) break;
  }
  if (!std::isfinite(best_value)) throw SolverError("robust dual search: no admissible candidate");

  if (options.refine) {
    for (int sweep = 0; sweep < 3; ++sweep) {
      const auto [mlo, mhi] = bracket(mu_grid, best_mu);
      if (mlo != mhi) {
        const double v = golden_section_max([&](double m) { return objective(best, m, nullptr); }, mlo, mhi,
                                    options.refine_iterations);
        const double fv = objective(best, v, nullptr);
        if (fv > best_value) {
          best_value = fv;
          best_mu = v;
        }
      }
      for (auto k : active) {
        const auto [lo, hi] = bracket(theta1_grid[k], best[k]);
        if (lo == hi) continue;
        auto f = [&](double v) {
          auto th = best;
          th[k] = v;
          return objective(th, best_mu, nullptr);
        };
        const double v = golden_section_max(f, lo, hi, options.refine_iterations);
        const double fv = f(v);
        if (fv > best_value) {
          best_value = fv;
          best[k] = v;
        }
      }
    }
  }
  auto sol = evaluate_robust_dual(model, utility, penalty,
                                  constrained_scenario(model, best, y, Perturbation::constant(best_mu)), ensemble,
                                  options);
  sol.dual.theta1 = best;
  sol.candidates = std::move(cands);
  return sol;
}

std::vector<FocResidual> robust_dual_foc_residuals(const MarketModel& model, const RobustDualSolution& solution) {
  auto out = dual_foc_residual(model, solution.dual);
  const auto& a = solution.dual.adjoints;
  const auto np = a.q.rows();
  const auto n = a.q.cols();
  const double dt = model.horizon / static_cast<double>(n);
  Eigen::MatrixXd pen(np, n), gq(np, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    pen.col(i).setConstant(solution.penalty.derivative((*solution.dual.control.mu)(t)));
    gq.col(i) = solution.dual.density.col(i).cwiseProduct(a.q.col(i));
  }
  const Eigen::MatrixXd res = pen + gq;
  out.push_back(summarize_foc("robust_dual_perturbation", res, {&pen, &gq}));
  return out;
}

double mu_from_foc(const Penalty& penalty, double density, double q2) {
  return penalty.inverse_derivative(-density * q2);
}

}  // namespace dualctl
