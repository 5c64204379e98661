#include "dualctl/primal.hpp"

#include "dualctl/errors.hpp"

#include <cmath>
#include <limits>

namespace dualctl {

namespace {

MarketModel effective(const MarketModel& model, const std::optional<Perturbation>& mu) {
  return mu ? perturbed_model(model, *mu) : model;
}

double marginal_exponent(const UtilityPair& u) { return u.family() == UtilityFamily::Log ? -1.0 : u.alpha() - 1.0; }

bool deterministic_fraction(const Strategy& s) {
  return s.kind == Parameterization::Fraction && !s.feedback && s.values.deterministic();
}

// ln S, ln X and the marginal utility U'(X(t)); the last one carries the terminal shape.
StateChannels primal_states(const Channel& price, const Channel& wealth, const UtilityPair& u) {
  return {price.array().log().matrix(), wealth.array().log().matrix(), wealth.unaryExpr([&](double x) { return u.dU(x); })};
}

}  // namespace

Strategy merton_log_closed_form(const MarketModel& model) {
  if (model.has_jumps()) throw InvalidInput("merton_log_closed_form: the closed form excludes jumps");
  auto b = model.drift;
  auto s = model.volatility;
  return Strategy::fraction(AdaptedProcess::of_time([b, s](double t) {
    const double sig = s(t);
    if (sig == 0.0) throw InvalidInput("merton_log_closed_form: sigma vanishes at t=" + std::to_string(t));
    return b(t) / (sig * sig);
  }));
}

double fraction_at(const Strategy& strategy, int step, double t) { return strategy.values(0, step, t); }

Eigen::VectorXd utility_values(const UtilityPair& utility, const Eigen::VectorXd& wealth) {
  Eigen::VectorXd u(wealth.size());
  for (Eigen::Index i = 0; i < wealth.size(); ++i) u(i) = utility.U(wealth(i));
  return u;
}

AdjointTriple analytic_primal_adjoints(const MarketModel& model, const UtilityPair& utility,
                                       const PathEnsemble& ensemble, const Strategy& strategy,
                                       const Channel& wealth, const std::optional<Perturbation>& mu) {
  if (!deterministic_fraction(strategy))
    throw InvalidInput("analytic_primal_adjoints: requires a deterministic fraction strategy");
  const MarketModel m = effective(model, mu);
  const int n = ensemble.n_steps();
  const double dt = ensemble.grid().dt();
  const std::size_t K = ensemble.n_marks();
  const double beta = marginal_exponent(utility);

  // log E[(X_{i+1}/X_i)^beta | F_i] per step.
  Eigen::VectorXd kappa(n), qf(n);
  Eigen::MatrixXd rf(n, static_cast<Eigen::Index>(K));
  for (int i = 0; i < n; ++i) {
    const double t = ensemble.grid().time(i);
    const double pi = fraction_at(strategy, i, t);
    const double s = m.sigma(t);
    double k = beta * (pi * m.b(t) - 0.5 * pi * pi * s * s) + 0.5 * beta * beta * pi * pi * s * s;
    for (std::size_t j = 0; j < K; ++j) {
      const double g = pi * m.gamma(t, j);
      const double jump = std::pow(1.0 + g, beta);
      k += ensemble.intensity(j) * (jump - 1.0 - beta * g);
      rf(i, static_cast<Eigen::Index>(j)) = jump - 1.0;
    }
    kappa(i) = k;
    qf(i) = beta * pi * s;
  }
  AdjointTriple out;
  out.mode = AdjointMode::Analytic;
  out.p.resize(ensemble.n_paths(), n + 1);
  out.q.resize(ensemble.n_paths(), n);
  out.r.assign(K, Eigen::MatrixXd(ensemble.n_paths(), n));
  double tail = 0.0;
  for (int i = n; i >= 0; --i) {
    if (i < n) tail += kappa(i) * dt;
    const double f = std::exp(tail);
    for (Eigen::Index p = 0; p < ensemble.n_paths(); ++p) out.p(p, i) = f * std::pow(wealth(p, i), beta);
  }
  out.p.col(n) = wealth.col(n).unaryExpr([&](double w) { return utility.dU(w); });
  for (int i = 0; i < n; ++i) {
    out.q.col(i) = qf(i) * out.p.col(i);
    for (std::size_t j = 0; j < K; ++j) out.r[j].col(i) = rf(i, static_cast<Eigen::Index>(j)) * out.p.col(i);
  }
  return out;
}

PrimalSolution evaluate_primal(const MarketModel& model, const UtilityPair& utility, double x,
                               const Strategy& strategy, const PathEnsemble& ensemble,
                               const PrimalOptions& options) {
  if (!(x > 0.0)) throw InvalidInput("primal: initial wealth must be positive");
  const MarketModel m = effective(model, options.mu);
  PrimalSolution sol;
  sol.strategy = strategy;
  sol.x = x;
  sol.mu = options.mu;
  sol.pi = strategy.values.is_constant() && !strategy.feedback && strategy.kind == Parameterization::Fraction
               ? strategy.values.constant_value()
               : std::numeric_limits<double>::quiet_NaN();
  sol.price = price_paths(m, ensemble);
  sol.wealth = wealth_paths(m, ensemble, strategy, x);
  const Eigen::VectorXd xt = sol.wealth.col(ensemble.n_steps());
  const auto st = sample_stats(utility_values(utility, xt));
  sol.value = st.mean;
  sol.se = st.se;
  if (options.mode == AdjointMode::Analytic) {
    sol.adjoints = analytic_primal_adjoints(m, utility, ensemble, strategy, sol.wealth);
  } else {
    const Eigen::VectorXd terminal = xt.unaryExpr([&](double w) { return utility.dU(w); });
    sol.adjoints = martingale_representation(ensemble, terminal, primal_states(sol.price, sol.wealth, utility), options.basis);
  }
  return sol;
}

PrimalSolution solve_primal_search(const MarketModel& model, const UtilityPair& utility, double x,
                                   std::span<const double> pi_grid, const PathEnsemble& ensemble,
                                   const PrimalOptions& options) {
  if (pi_grid.empty()) throw InvalidInput("primal search: empty candidate family");
  if (!(x > 0.0)) throw InvalidInput("primal: initial wealth must be positive");
  const MarketModel m = effective(model, options.mu);
  std::vector<PrimalCandidate> cands;
  int best = -1;
  for (double pi : pi_grid) {
    PrimalCandidate c;
    c.pi = pi;
    try {
      const auto st = sample_stats(utility_values(utility, terminal_wealth(m, ensemble, pi, x)));
      c.value = st.mean;
      c.se = st.se;
      if (!std::isfinite(c.value)) throw AdmissibilityError("non-finite expected utility");
    } catch (const AdmissibilityError& e) {
      c.admissible = false;
      c.reason = e.what();
    }
    cands.push_back(c);
    if (!c.admissible) continue;
    const auto idx = static_cast<int>(cands.size()) - 1;
    if (best < 0) {
      best = idx;
      continue;
    }
    const auto& cur = cands[static_cast<std::size_t>(best)];
    const double tol = 1e-12 * std::max(1.0, std::abs(cur.value));
    if (c.value > cur.value + tol || (std::abs(c.value - cur.value) <= tol && std::abs(pi) < std::abs(cur.pi)))
      best = idx;
  }
  if (best < 0) throw SolverError("primal search: no admissible candidate");
  PrimalSolution sol = evaluate_primal(model, utility, x, Strategy::constant_fraction(cands[static_cast<std::size_t>(best)].pi),
                                       ensemble, options);
  sol.candidates = std::move(cands);
  return sol;
}

FocResidual primal_foc_residual(const MarketModel& model, const PrimalSolution& solution) {
  const MarketModel m = effective(model, solution.mu);
  const auto& a = solution.adjoints;
  const auto np = a.q.rows();
  const auto n = a.q.cols();
  Eigen::MatrixXd bp(np, n), sq(np, n), jr = Eigen::MatrixXd::Zero(np, n);
  const double dt = m.horizon / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    bp.col(i) = m.b(t) * a.p.col(i);
    sq.col(i) = m.sigma(t) * a.q.col(i);
    for (std::size_t k = 0; k < m.n_marks() && k < a.r.size(); ++k)
      jr.col(i) += m.gamma(t, k) * m.marks[k].intensity * a.r[k].col(i);
  }
  const Eigen::MatrixXd res = bp + sq + jr;
  return summarize_foc(solution.mu ? "robust_primal_portfolio" : "primal_portfolio", res, {&bp, &sq, &jr});
}

HamiltonianCheck hamiltonian_derivative_check(const MarketModel& model, const UtilityPair& utility,
                                              const PrimalSolution& solution, const TimeFunction& beta,
                                              const PathEnsemble& ensemble, double step) {
  if (!(step > 0.0)) throw InvalidInput("hamiltonian_derivative_check: step must be positive");
  if (!deterministic_fraction(solution.strategy))
    throw InvalidInput("hamiltonian_derivative_check: requires a deterministic fraction strategy");
  const MarketModel m = effective(model, solution.mu);
  const Strategy base = solution.strategy;
  auto shifted = [&](double a) {
    if (base.values.is_constant() && !beta) return terminal_wealth(m, ensemble, base.values.constant_value(), solution.x);
    Strategy s = Strategy::fraction(AdaptedProcess::on_paths([&] {
      Eigen::MatrixXd v(1, ensemble.n_steps());
      for (int i = 0; i < ensemble.n_steps(); ++i) {
        const double t = ensemble.grid().time(i);
        v(0, i) = fraction_at(base, i, t) + a * (beta ? beta(t) : 0.0);
      }
      return v;
    }()));
    return Eigen::VectorXd(wealth_paths(m, ensemble, s, solution.x).col(ensemble.n_steps()));
  };
  const Eigen::VectorXd up = utility_values(utility, shifted(step));
  const Eigen::VectorXd down = utility_values(utility, shifted(-step));
  const auto st = sample_stats((up - down) / (2.0 * step));
  return {st.mean, st.se};
}

}  // namespace dualctl
