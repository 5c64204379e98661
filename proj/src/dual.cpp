#include "dualctl/dual.hpp"

#include "dualctl/errors.hpp"

#include <cmath>
#include <limits>

namespace dualctl {

namespace {

double conjugate_exponent(const UtilityPair& u) {
  return u.family() == UtilityFamily::Log ? -1.0 : 1.0 / (u.alpha() - 1.0);
}

double mu_at(const std::optional<Perturbation>& mu, double t) { return mu ? (*mu)(t) : 0.0; }

// Sum_j gamma_j^2 nu_j, the normalizer of the degenerate-sigma jump weights.
double jump_energy(const MarketModel& m, double t) {
  double e = 0.0;
  for (std::size_t k = 0; k < m.n_marks(); ++k) e += m.gamma(t, k) * m.gamma(t, k) * m.marks[k].intensity;
  return e;
}

bool deterministic(const ScenarioControl& c) {
  if (!c.theta0.deterministic()) return false;
  for (const auto& t : c.theta1)
    if (!t.deterministic()) return false;
  return true;
}

double theta1_at(const ScenarioControl& c, std::size_t k, Eigen::Index p, int i, double t) {
  return k < c.theta1.size() ? c.theta1[k](p, i, t) : 0.0;
}

// ln S, ln G and -V'(G(t)).
StateChannels dual_states(const Channel& price, const Channel& density, const UtilityPair& u) {
  return {price.array().log().matrix(), density.array().log().matrix(),
          density.unaryExpr([&](double g) { return u.inverse_marginal(g); })};
}

}  // namespace

ScenarioControl unique_scenario_no_jumps(const MarketModel& model, double y) {
  if (model.has_jumps()) throw InvalidInput("unique_scenario_no_jumps: model has jumps");
  if (!(y > 0.0)) throw InvalidInput("unique_scenario_no_jumps: y must be positive");
  ScenarioControl c = constrained_scenario(model, std::vector<double>(model.n_marks(), 0.0), y);
  return c;
}

ScenarioControl constrained_scenario(const MarketModel& model, const std::vector<double>& theta1, double y,
                                     std::optional<Perturbation> mu) {
  if (!(y > 0.0)) throw InvalidInput("scenario: y must be positive");
  if (theta1.size() != model.n_marks()) throw InvalidInput("scenario: theta1 needs one value per mark");
  const MarketModel m = model;
  // Per-mark theta1 at time t, after the degenerate-sigma correction.
  auto th1 = [m, theta1, mu](double t) {
    std::vector<double> v = theta1;
    if (std::abs(m.sigma(t)) >= kSigmaZero) return v;
    const double energy = [&] {
      double e = 0.0;
      for (std::size_t k = 0; k < m.n_marks(); ++k) {
        const double w = m.gamma(t, k) * m.marks[k].intensity;
        e += w * w;
      }
      return e;
    }();
    double gap = m.b(t) + mu_at(mu, t) * m.sigma(t);
    for (std::size_t k = 0; k < m.n_marks(); ++k) gap += m.gamma(t, k) * m.marks[k].intensity * v[k];
    if (gap == 0.0) return v;
    if (energy == 0.0)
      throw InvalidInput("scenario: no martingale measure exists where sigma and all jump sizes vanish with b != 0");
    for (std::size_t k = 0; k < m.n_marks(); ++k) v[k] -= m.gamma(t, k) * m.marks[k].intensity * gap / energy;
    return v;
  };
  ScenarioControl c;
  c.y = y;
  c.mu = mu;
  c.theta0 = AdaptedProcess::of_time([m, mu, th1](double t) {
    const double s = m.sigma(t);
    if (std::abs(s) < kSigmaZero) return 0.0;
    const auto v = th1(t);
    double a = m.b(t) + mu_at(mu, t) * s;
    for (std::size_t k = 0; k < m.n_marks(); ++k) a += m.gamma(t, k) * v[k] * m.marks[k].intensity;
    return -a / s;
  });
  for (std::size_t k = 0; k < m.n_marks(); ++k)
    c.theta1.push_back(AdaptedProcess::of_time([th1, k](double t) { return th1(t)[k]; }));
  return c;
}

DriverSpec dual_driver(const MarketModel& model, std::optional<Perturbation> mu) {
  DriverSpec d;
  const MarketModel m = model;
  d.q_coef = [m, mu](double t) {
    const double s = m.sigma(t);
    return std::abs(s) < kSigmaZero ? 0.0 : (m.b(t) + mu_at(mu, t) * s) / s;
  };
  bool any_jump = false;
  for (const auto& mk : model.marks) any_jump = any_jump || mk.intensity > 0.0;
  if (any_jump) {
    for (std::size_t k = 0; k < model.n_marks(); ++k) {
      d.r_coef.push_back([m, mu, k](double t) {
        const double s = m.sigma(t);
        if (std::abs(s) >= kSigmaZero) return 0.0;
        const double e = jump_energy(m, t);
        return e > 0.0 ? (m.b(t) + mu_at(mu, t) * s) * m.gamma(t, k) * m.marks[k].intensity / e : 0.0;
      });
    }
  }
  return d;
}

AdjointTriple analytic_dual_adjoints(const MarketModel& model, const UtilityPair& utility,
                                     const PathEnsemble& ensemble, const ScenarioControl& control,
                                     const Channel& density) {
  if (!deterministic(control)) throw InvalidInput("analytic_dual_adjoints: control must be deterministic");
  const int n = ensemble.n_steps();
  const double dt = ensemble.grid().dt();
  const std::size_t K = ensemble.n_marks();
  const double beta = conjugate_exponent(utility);
  const DriverSpec drv = dual_driver(model, control.mu);

  Eigen::VectorXd c(n), qf(n);
  Eigen::MatrixXd rf(n, static_cast<Eigen::Index>(K));
  for (int i = 0; i < n; ++i) {
    const double t = ensemble.grid().time(i);
    const double th0 = control.theta0(0, i, t);
    double a = 0.5 * beta * (beta - 1.0) * th0 * th0;
    double drift = drv.q_coef(t) * beta * th0;
    for (std::size_t k = 0; k < K; ++k) {
      const double th1 = theta1_at(control, k, 0, i, t);
      const double jump = std::pow(1.0 + th1, beta) - 1.0;
      a += ensemble.intensity(k) * (jump - beta * th1);
      rf(i, static_cast<Eigen::Index>(k)) = jump;
      if (k < drv.r_coef.size()) drift += drv.r_coef[k](t) * jump;
    }
    c(i) = a - drift;
    qf(i) = beta * th0;
  }
  AdjointTriple out;
  out.mode = AdjointMode::Analytic;
  out.p.resize(ensemble.n_paths(), n + 1);
  out.q.resize(ensemble.n_paths(), n);
  out.r.assign(K, Eigen::MatrixXd(ensemble.n_paths(), n));
  double tail = 0.0;
  for (int i = n; i >= 0; --i) {
    if (i < n) tail += c(i) * dt;
    const double f = std::exp(tail);
    for (Eigen::Index p = 0; p < ensemble.n_paths(); ++p) out.p(p, i) = f * std::pow(density(p, i), beta);
  }
  out.p.col(n) = density.col(n).unaryExpr([&](double g) { return utility.inverse_marginal(g); });
  for (int i = 0; i < n; ++i) {
    out.q.col(i) = qf(i) * out.p.col(i);
    for (std::size_t k = 0; k < K; ++k) out.r[k].col(i) = rf(i, static_cast<Eigen::Index>(k)) * out.p.col(i);
  }
  return out;
}

SampleStats dual_objective(const MarketModel& model, const UtilityPair& utility, const ScenarioControl& control,
                           const PathEnsemble& ensemble) {
  (void)model;
  const int n = ensemble.n_steps();
  const std::size_t K = ensemble.n_marks();
  Eigen::VectorXd gt(ensemble.n_paths());
  if (deterministic(control)) {
    const double dt = ensemble.grid().dt();
    Eigen::VectorXd th0(n), drift(n);
    Eigen::MatrixXd lj(n, static_cast<Eigen::Index>(K));
    for (int i = 0; i < n; ++i) {
      const double t = ensemble.grid().time(i);
      th0(i) = control.theta0(0, i, t);
      double d = -0.5 * th0(i) * th0(i);
      for (std::size_t k = 0; k < K; ++k) {
        const double th1 = theta1_at(control, k, 0, i, t);
        if (ensemble.intensity(k) > 0.0 && th1 < -1.0 + kThetaFloor)
          throw InvalidInput("dual: theta1 below -1 + epsilon");
        d -= th1 * ensemble.intensity(k);
        lj(i, static_cast<Eigen::Index>(k)) = std::log1p(th1);
      }
      drift(i) = d * dt;
    }
    for (Eigen::Index p = 0; p < ensemble.n_paths(); ++p) {
      double acc = std::log(control.y);
      for (int i = 0; i < n; ++i) {
        acc += drift(i) + th0(i) * ensemble.dB(p, i);
        for (std::size_t k = 0; k < K; ++k) {
          const int nj = ensemble.jumps(p, i, k);
          if (nj != 0) acc += nj * lj(i, static_cast<Eigen::Index>(k));
        }
      }
      gt(p) = std::exp(acc);
    }
  } else {
    gt = density_paths(ensemble, control).col(n);
  }
  return sample_stats(gt.unaryExpr([&](double g) { return -utility.V(g); }));
}

DualSolution evaluate_dual(const MarketModel& model, const UtilityPair& utility, const ScenarioControl& control,
                           const PathEnsemble& ensemble, const DualOptions& options) {
  const MarketModel m = control.mu ? perturbed_model(model, *control.mu) : model;
  DualSolution sol;
  sol.control = control;
  sol.y = control.y;
  sol.price = price_paths(m, ensemble);
  sol.density = density_paths(ensemble, control, options.scheme);
  const int n = ensemble.n_steps();
  const Eigen::VectorXd gt = sol.density.col(n);
  const auto st = sample_stats(gt.unaryExpr([&](double g) { return -utility.V(g); }));
  sol.value = st.mean;
  sol.se = st.se;
  sol.driver = dual_driver(model, control.mu);
  if (options.mode == AdjointMode::Analytic) {
    sol.adjoints = analytic_dual_adjoints(model, utility, ensemble, control, sol.density);
  } else {
    const Eigen::VectorXd terminal = gt.unaryExpr([&](double g) { return utility.inverse_marginal(g); });
    sol.adjoints = solve_linear_bsde(ensemble, sol.driver, terminal, dual_states(sol.price, sol.density, utility), options.basis);
  }
  return sol;
}

DualSolution solve_dual_search(const MarketModel& model, const UtilityPair& utility, double y,
                               const std::vector<std::vector<double>>& theta1_grid,
                               const PathEnsemble& ensemble, const DualOptions& options) {
  const std::size_t K = model.n_marks();
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < K; ++k)
    if (model.marks[k].intensity > 0.0) active.push_back(k);

  std::vector<DualCandidate> cands;
  auto evaluate = [&](const std::vector<double>& th1, DualCandidate* rec) {
    DualCandidate c;
    c.theta1 = th1;
    try {
      const auto ctrl = constrained_scenario(model, th1, y);
      const auto st = dual_objective(model, utility, ctrl, ensemble);
      c.value = st.mean;
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
  double best_value = -std::numeric_limits<double>::infinity();
  if (active.empty()) {
    DualCandidate c;
    evaluate(best, &c);
    cands.push_back(c);
    best_value = c.value;
  } else {
    if (theta1_grid.size() != K) throw InvalidInput("dual search: one theta1 grid per mark required");
    for (auto k : active)
      if (theta1_grid[k].empty()) throw InvalidInput("dual search: empty theta1 grid");
    std::vector<std::size_t> idx(active.size(), 0);
    while (true) {
      std::vector<double> th1(K, 0.0);
      for (std::size_t j = 0; j < active.size(); ++j) th1[active[j]] = theta1_grid[active[j]][idx[j]];
      DualCandidate c;
      evaluate(th1, &c);
      cands.push_back(c);
      if (c.admissible && c.value > best_value) {
        best_value = c.value;
        best = th1;
      }
      std::size_t j = 0;
      while (j < active.size() && ++idx[j] == theta1_grid[active[j]].size()) idx[j++] = 0;
      if (j == active.size()) break;
    }
    if (!std::isfinite(best_value)) throw SolverError("dual search: no admissible candidate");
    if (options.refine) {
      for (int sweep = 0; sweep < 2; ++sweep) {
        for (auto k : active) {
          const auto& g = theta1_grid[k];
          double lo = best[k], hi = best[k];
          for (double v : g) {
            if (v < best[k] && (lo == best[k] || v > lo)) lo = v;
            if (v > best[k] && (hi == best[k] || v < hi)) hi = v;
          }
          if (lo == hi) continue;
          auto f = [&](double v) {
            auto th = best;
            th[k] = v;
            return evaluate(th, nullptr);
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
  }
  DualSolution sol = evaluate_dual(model, utility, constrained_scenario(model, best, y), ensemble, options);
  sol.theta1 = best;
  sol.candidates = std::move(cands);
  return sol;
}

std::vector<FocResidual> dual_foc_residual(const MarketModel& model, const DualSolution& solution) {
  const MarketModel m = model;
  const auto& a = solution.adjoints;
  const auto np = a.q.rows();
  const auto n = a.q.cols();
  const double dt = m.horizon / static_cast<double>(n);
  std::vector<FocResidual> out;
  for (std::size_t k = 0; k < m.n_marks() && k < a.r.size(); ++k) {
    if (m.marks[k].intensity <= 0.0) continue;
    Eigen::MatrixXd qg = Eigen::MatrixXd::Zero(np, n), r = Eigen::MatrixXd::Zero(np, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) * dt;
      const double s = m.sigma(t);
      if (std::abs(s) < kSigmaZero) continue;
      qg.col(i) = a.q.col(i) * (m.gamma(t, k) / s);
      r.col(i) = a.r[k].col(i);
    }
    const Eigen::MatrixXd res = r - qg;
    out.push_back(summarize_foc((solution.control.mu ? "robust_dual_jump_mark_" : "dual_jump_mark_") + std::to_string(k),
                                res, {&qg, &r}));
  }
  return out;
}

ReplicatingPortfolio replicating_portfolio(const MarketModel& model, const DualSolution& solution) {
  const MarketModel m = solution.control.mu ? perturbed_model(model, *solution.control.mu) : model;
  const auto& a = solution.adjoints;
  const auto np = a.q.rows();
  const auto n = static_cast<int>(a.q.cols());
  const double dt = m.horizon / n;
  ReplicatingPortfolio rp;
  rp.units.resize(np, n);
  const double p_scale = a.p.cwiseAbs().mean();
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    const double s = m.sigma(t);
    if (std::abs(s) >= kSigmaZero) {
      rp.units.col(i) = a.q.col(i).array() / (s * solution.price.col(i).array());
      ++rp.sigma_steps;
      continue;
    }
    const double e = jump_energy(m, t);
    if (e > 0.0) {
      Eigen::VectorXd lam = Eigen::VectorXd::Zero(np);
      for (std::size_t k = 0; k < m.n_marks() && k < a.r.size(); ++k)
        lam += (m.gamma(t, k) * m.marks[k].intensity / e) * a.r[k].col(i);
      rp.units.col(i) = lam.array() / solution.price.col(i).array();
      ++rp.jump_steps;
      continue;
    }
    double moving = a.q.col(i).cwiseAbs().maxCoeff();
    for (const auto& r : a.r) moving = std::max(moving, r.col(i).cwiseAbs().maxCoeff());
    if (moving > 1e-6 * std::max(p_scale, 1e-300))
      throw SolverError("replicating_portfolio: sigma and all jump sizes vanish at t=" + std::to_string(t) +
                        " but the adjoint integrands do not");
    rp.units.col(i).setZero();
    ++rp.idle_steps;
  }
  rp.x = a.p.col(0).mean();
  rp.strategy = Strategy::units(AdaptedProcess::on_paths(rp.units));
  return rp;
}

ReplicationReport replication_check(const MarketModel& model, const Strategy& strategy, double x,
                                    const Eigen::VectorXd& target, const PathEnsemble& ensemble, UpdateScheme scheme,
                                    std::optional<Perturbation> mu) {
  if (target.size() != ensemble.n_paths()) throw InvalidInput("replication_check: target has wrong length");
  WealthOptions wo;
  wo.scheme = scheme;
  wo.perturbation = mu;
  const Eigen::VectorXd xt = wealth_paths(model, ensemble, strategy, x, wo).col(ensemble.n_steps());
  const Eigen::ArrayXd err = (xt - target).array();
  const Eigen::ArrayXd rel = err / target.array().abs();
  ReplicationReport r;
  r.mean_square_error = err.square().mean();
  r.rmse = std::sqrt(r.mean_square_error);
  r.relative_rmse = std::sqrt(rel.square().mean());
  r.max_relative_error = rel.abs().maxCoeff();
  return r;
}

}  // namespace dualctl
