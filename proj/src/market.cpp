#include "dualctl/market.hpp"

#include "dualctl/errors.hpp"
#include "dualctl/rng.hpp"

#include <cmath>
#include <string>

namespace dualctl {

MarketModel MarketModel::constant(double b, double sigma, std::vector<JumpMark> marks, double horizon) {
  MarketModel m;
  m.drift = [b](double) { return b; };
  m.volatility = [sigma](double) { return sigma; };
  m.marks = std::move(marks);
  m.horizon = horizon;
  return m;
}

bool MarketModel::has_jumps() const {
  for (const auto& mk : marks)
    if (mk.intensity > 0.0) return true;
  return false;
}

TimeGrid::TimeGrid(double horizon, int n_steps) : horizon_(horizon), n_steps_(n_steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidInput("time grid: horizon must be positive");
  if (n_steps < 1) throw InvalidInput("time grid: n_steps must be positive");
  dt_ = horizon / n_steps;
}

std::vector<double> TimeGrid::times() const {
  std::vector<double> t(n_steps_ + 1);
  for (int i = 0; i <= n_steps_; ++i) t[i] = time(i);
  return t;
}

void validate_model(const MarketModel& model, const TimeGrid& grid) {
  if (!model.drift || !model.volatility) throw InvalidInput("market: drift and volatility must be set");
  if (!(model.horizon > 0.0)) throw InvalidInput("market: horizon must be positive");
  if (!(model.s0 > 0.0) || !std::isfinite(model.s0)) throw InvalidInput("market: s0 must be positive");
  if (std::abs(grid.horizon() - model.horizon) > 1e-12 * model.horizon)
    throw InvalidInput("market: grid horizon differs from model horizon");
  for (const auto& mk : model.marks)
    if (!(mk.intensity >= 0.0) || !std::isfinite(mk.intensity) || !std::isfinite(mk.mark))
      throw InvalidInput("market: jump intensities must be finite and non-negative");
  for (int i = 0; i <= grid.n_steps(); ++i) {
    const double t = grid.time(i);
    if (!std::isfinite(model.b(t)) || !std::isfinite(model.sigma(t)))
      throw InvalidInput("market: non-finite coefficient at t=" + std::to_string(t));
    for (std::size_t k = 0; k < model.n_marks(); ++k) {
      const double g = model.gamma(t, k);
      if (!std::isfinite(g)) throw InvalidInput("market: non-finite jump size at t=" + std::to_string(t));
      if (!(g > -1.0)) throw InvalidInput("market: jump size must exceed -1 (price positivity)");
    }
  }
}

PathEnsemble::PathEnsemble(TimeGrid grid, Eigen::MatrixXd brownian, std::vector<Eigen::MatrixXi> jumps,
                           std::vector<double> intensities, std::uint64_t seed, bool antithetic)
    : grid_(grid),
      brownian_(std::move(brownian)),
      jumps_(std::move(jumps)),
      intensities_(std::move(intensities)),
      seed_(seed),
      antithetic_(antithetic) {
  if (brownian_.cols() != grid_.n_steps()) throw InvalidInput("ensemble: increments do not match grid");
  if (brownian_.rows() < 1) throw InvalidInput("ensemble: n_paths must be at least 1");
  if (jumps_.size() != intensities_.size()) throw InvalidInput("ensemble: one intensity per mark required");
  for (const auto& j : jumps_)
    if (j.rows() != brownian_.rows() || j.cols() != brownian_.cols())
      throw InvalidInput("ensemble: jump count shape mismatch");
}

Channel PathEnsemble::brownian_path() const {
  Channel b(n_paths(), n_steps() + 1);
  b.col(0).setZero();
  for (int i = 0; i < n_steps(); ++i) b.col(i + 1) = b.col(i) + brownian_.col(i);
  return b;
}

PathEnsemble PathEnsemble::select(std::span<const Eigen::Index> paths) const {
  const auto n = static_cast<Eigen::Index>(paths.size());
  Eigen::MatrixXd bm(n, n_steps());
  std::vector<Eigen::MatrixXi> jm(n_marks(), Eigen::MatrixXi(n, n_steps()));
  for (Eigen::Index r = 0; r < n; ++r) {
    bm.row(r) = brownian_.row(paths[r]);
    for (std::size_t k = 0; k < n_marks(); ++k) jm[k].row(r) = jumps_[k].row(paths[r]);
  }
  return PathEnsemble(grid_, std::move(bm), std::move(jm), intensities_, seed_, false);
}

PathEnsemble simulate_drivers(const MarketModel& model, const TimeGrid& grid, Eigen::Index n_paths,
                              std::uint64_t seed, SimulationOptions options) {
  if (n_paths < 1) throw InvalidInput("simulate_drivers: n_paths must be at least 1");
  validate_model(model, grid);
  const CounterRng rng(seed);
  const int n = grid.n_steps();
  const double sqdt = std::sqrt(grid.dt());
  const std::size_t n_marks = model.n_marks();

  Eigen::MatrixXd brownian(n_paths, n);
  std::vector<Eigen::MatrixXi> jumps(n_marks, Eigen::MatrixXi(n_paths, n));
  std::vector<double> intensities(n_marks);
  for (std::size_t k = 0; k < n_marks; ++k) intensities[k] = model.marks[k].intensity;

  for (Eigen::Index p = 0; p < n_paths; ++p) {
    const auto source = static_cast<std::uint64_t>(options.antithetic ? p / 2 : p);
    const double sign = (options.antithetic && (p % 2 == 1)) ? -1.0 : 1.0;
    for (int i = 0; i < n; ++i) {
      brownian(p, i) = sign * sqdt * rng.normal(source, static_cast<std::uint64_t>(i), 0);
      for (std::size_t k = 0; k < n_marks; ++k)
        jumps[k](p, i) = rng.poisson(intensities[k] * grid.dt(), source, static_cast<std::uint64_t>(i), 2 + k);
    }
  }
  return PathEnsemble(grid, std::move(brownian), std::move(jumps), std::move(intensities), seed,
                      options.antithetic);
}

namespace {

// Coefficients frozen at the left end of each step.
struct StepCoefficients {
  std::vector<double> t, b, sigma, mu;
  Eigen::MatrixXd gamma;  // steps x marks
};

StepCoefficients freeze(const MarketModel& model, const TimeGrid& grid, const std::optional<Perturbation>& mu) {
  const int n = grid.n_steps();
  StepCoefficients c;
  c.t.resize(n);
  c.b.resize(n);
  c.sigma.resize(n);
  c.mu.assign(n, 0.0);
  c.gamma.resize(n, static_cast<Eigen::Index>(model.n_marks()));
  for (int i = 0; i < n; ++i) {
    const double t = grid.time(i);
    c.t[i] = t;
    c.b[i] = model.b(t);
    c.sigma[i] = model.sigma(t);
    if (mu) c.mu[i] = (*mu)(t);
    for (std::size_t k = 0; k < model.n_marks(); ++k) c.gamma(i, static_cast<Eigen::Index>(k)) = model.gamma(t, k);
  }
  return c;
}

void check_marks(const MarketModel& model, const PathEnsemble& ensemble) {
  if (model.n_marks() != ensemble.n_marks()) throw InvalidInput("model and ensemble disagree on jump marks");
}

}  // namespace

Channel price_paths(const MarketModel& model, const PathEnsemble& ensemble) {
  check_marks(model, ensemble);
  validate_model(model, ensemble.grid());
  const auto c = freeze(model, ensemble.grid(), std::nullopt);
  const int n = ensemble.n_steps();
  const double dt = ensemble.grid().dt();
  const std::size_t K = ensemble.n_marks();

  std::vector<double> drift(n);
  Eigen::MatrixXd log_jump(n, static_cast<Eigen::Index>(K));
  for (int i = 0; i < n; ++i) {
    double comp = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      comp += c.gamma(i, k) * ensemble.intensity(k);
      log_jump(i, k) = std::log1p(c.gamma(i, k));
    }
    drift[i] = (c.b[i] - 0.5 * c.sigma[i] * c.sigma[i] - comp) * dt;
  }

  Channel s(ensemble.n_paths(), n + 1);
  for (Eigen::Index p = 0; p < ensemble.n_paths(); ++p) {
    s(p, 0) = model.s0;
    for (int i = 0; i < n; ++i) {
      double inc = drift[i] + c.sigma[i] * ensemble.dB(p, i);
      for (std::size_t k = 0; k < K; ++k) {
        const int nj = ensemble.jumps(p, i, k);
        if (nj != 0) inc += nj * log_jump(i, k);
      }
      s(p, i + 1) = s(p, i) * std::exp(inc);
    }
  }
  return s;
}

Channel wealth_paths(const MarketModel& model, const PathEnsemble& ensemble, const Strategy& strategy,
                     double x0, const WealthOptions& options) {
  check_marks(model, ensemble);
  if (!(x0 > 0.0)) throw InvalidInput("wealth_paths: initial wealth must be positive");
  const UpdateScheme scheme = options.scheme.value_or(
      strategy.kind == Parameterization::Fraction ? UpdateScheme::Exact : UpdateScheme::Euler);
  const auto c = freeze(model, ensemble.grid(), options.perturbation);
  const int n = ensemble.n_steps();
  const double dt = ensemble.grid().dt();
  const std::size_t K = ensemble.n_marks();

  const bool needs_price = strategy.kind == Parameterization::Units || static_cast<bool>(strategy.feedback);
  Channel s;
  if (needs_price) {
    s = options.perturbation ? price_paths(perturbed_model(model, *options.perturbation), ensemble)
                             : price_paths(model, ensemble);
  }

  Channel x(ensemble.n_paths(), n + 1);
  for (Eigen::Index p = 0; p < ensemble.n_paths(); ++p) {
    x(p, 0) = x0;
    for (int i = 0; i < n; ++i) {
      const double xi = x(p, i);
      const double si = needs_price ? s(p, i) : 0.0;
      const double v = strategy.value(p, i, c.t[i], xi, si);
      const double b_eff = c.b[i] + c.mu[i] * c.sigma[i];
      double next;
      if (scheme == UpdateScheme::Exact) {
        const double pi = strategy.kind == Parameterization::Fraction ? v : v * si / xi;
        double inc = (pi * b_eff - 0.5 * pi * pi * c.sigma[i] * c.sigma[i]) * dt + pi * c.sigma[i] * ensemble.dB(p, i);
        for (std::size_t k = 0; k < K; ++k) {
          const double g = pi * c.gamma(i, k);
          if (ensemble.intensity(k) > 0.0 && !(1.0 + g > 0.0))
            throw AdmissibilityError("wealth_paths: fraction violates 1 + pi*gamma > 0 at t=" +
                                     std::to_string(c.t[i]));
          inc -= g * ensemble.intensity(k) * dt;
          const int nj = ensemble.jumps(p, i, k);
          if (nj != 0) inc += nj * std::log1p(g);
        }
        next = xi * std::exp(inc);
      } else {
        double ret = b_eff * dt + c.sigma[i] * ensemble.dB(p, i);
        for (std::size_t k = 0; k < K; ++k) ret += c.gamma(i, k) * ensemble.compensated_jump(p, i, k);
        next = strategy.kind == Parameterization::Fraction ? xi * (1.0 + v * ret) : xi + v * si * ret;
      }
      if (!(next > 0.0) || !std::isfinite(next))
        throw AdmissibilityError("wealth_paths: wealth left (0, inf) on path " + std::to_string(p) +
                                 " at t=" + std::to_string(ensemble.grid().time(i + 1)));
      x(p, i + 1) = next;
    }
  }
  return x;
}

Eigen::VectorXd terminal_wealth(const MarketModel& model, const PathEnsemble& ensemble, double pi, double x0,
                                double mu) {
  check_marks(model, ensemble);
  const auto c = freeze(model, ensemble.grid(), Perturbation::constant(mu));
  const int n = ensemble.n_steps();
  const double dt = ensemble.grid().dt();
  const std::size_t K = ensemble.n_marks();
  std::vector<double> drift(n), vol(n);
  Eigen::MatrixXd log_jump(n, static_cast<Eigen::Index>(K));
  for (int i = 0; i < n; ++i) {
    double d = pi * (c.b[i] + mu * c.sigma[i]) - 0.5 * pi * pi * c.sigma[i] * c.sigma[i];
    for (std::size_t k = 0; k < K; ++k) {
      const double g = pi * c.gamma(i, k);
      if (ensemble.intensity(k) > 0.0 && !(1.0 + g > 0.0))
        throw AdmissibilityError("terminal_wealth: fraction violates 1 + pi*gamma > 0");
      d -= g * ensemble.intensity(k);
      log_jump(i, k) = std::log1p(g);
    }
    drift[i] = d * dt;
    vol[i] = pi * c.sigma[i];
  }
  Eigen::VectorXd out(ensemble.n_paths());
  for (Eigen::Index p = 0; p < ensemble.n_paths(); ++p) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += drift[i] + vol[i] * ensemble.dB(p, i);
      for (std::size_t k = 0; k < K; ++k) {
        const int nj = ensemble.jumps(p, i, k);
        if (nj != 0) acc += nj * log_jump(i, k);
      }
    }
    out(p) = x0 * std::exp(acc);
  }
  return out;
}

Channel density_paths(const PathEnsemble& ensemble, const ScenarioControl& theta, UpdateScheme scheme) {
  if (!(theta.y > 0.0)) throw InvalidInput("density_paths: y must be positive");
  const std::size_t K = ensemble.n_marks();
  if (theta.theta1.size() != K && !(theta.theta1.empty() && K == 0))
    throw InvalidInput("density_paths: theta1 needs one component per mark");
  const int n = ensemble.n_steps();
  const double dt = ensemble.grid().dt();

  bool fixed = theta.theta0.deterministic();
  for (const auto& t1 : theta.theta1) fixed = fixed && t1.deterministic();
  // Deterministic controls are tabulated once per step.
  Eigen::VectorXd tab0;
  Eigen::MatrixXd tab1;
  if (fixed) {
    tab0.resize(n);
    tab1.resize(n, static_cast<Eigen::Index>(K));
    for (int i = 0; i < n; ++i) {
      const double t = ensemble.grid().time(i);
      tab0(i) = theta.theta0(0, i, t);
      for (std::size_t k = 0; k < K; ++k) tab1(i, static_cast<Eigen::Index>(k)) = theta.theta1[k](0, i, t);
    }
  }

  Channel g(ensemble.n_paths(), n + 1);
  std::vector<double> th1(K);
  for (Eigen::Index p = 0; p < ensemble.n_paths(); ++p) {
    g(p, 0) = theta.y;
    for (int i = 0; i < n; ++i) {
      const double t = ensemble.grid().time(i);
      const double th0 = fixed ? tab0(i) : theta.theta0(p, i, t);
      for (std::size_t k = 0; k < K; ++k) {
        th1[k] = fixed ? tab1(i, static_cast<Eigen::Index>(k)) : theta.theta1[k](p, i, t);
        if (ensemble.intensity(k) > 0.0 && th1[k] < -1.0 + kThetaFloor)
          throw InvalidInput("density_paths: theta1 below -1 + epsilon at t=" + std::to_string(t));
      }
      if (scheme == UpdateScheme::Exact) {
        double inc = th0 * ensemble.dB(p, i) - 0.5 * th0 * th0 * dt;
        for (std::size_t k = 0; k < K; ++k) {
          inc -= th1[k] * ensemble.intensity(k) * dt;
          const int nj = ensemble.jumps(p, i, k);
          if (nj != 0) inc += nj * std::log1p(th1[k]);
        }
        g(p, i + 1) = g(p, i) * std::exp(inc);
      } else {
        double ret = th0 * ensemble.dB(p, i);
        for (std::size_t k = 0; k < K; ++k) ret += th1[k] * ensemble.compensated_jump(p, i, k);
        g(p, i + 1) = g(p, i) * (1.0 + ret);
      }
    }
  }
  return g;
}

double elmm_residual(const MarketModel& model, double theta0, std::span<const double> theta1, double mu, double t) {
  const double s = model.sigma(t);
  double r = model.b(t) + mu * s + s * theta0;
  for (std::size_t k = 0; k < model.n_marks() && k < theta1.size(); ++k)
    r += model.gamma(t, k) * theta1[k] * model.marks[k].intensity;
  return r;
}

double max_elmm_residual(const MarketModel& model, const TimeGrid& grid, const ScenarioControl& theta,
                         Eigen::Index n_paths) {
  bool path_valued = !theta.theta0.deterministic();
  for (const auto& t1 : theta.theta1) path_valued = path_valued || !t1.deterministic();
  const Eigen::Index rows = path_valued ? n_paths : 1;
  std::vector<double> th1(theta.theta1.size());
  double worst = 0.0;
  for (Eigen::Index p = 0; p < rows; ++p) {
    for (int i = 0; i < grid.n_steps(); ++i) {
      const double t = grid.time(i);
      for (std::size_t k = 0; k < th1.size(); ++k) th1[k] = theta.theta1[k](p, i, t);
      const double mu = theta.mu ? (*theta.mu)(t) : 0.0;
      worst = std::max(worst, std::abs(elmm_residual(model, theta.theta0(p, i, t), th1, mu, t)));
    }
  }
  return worst;
}

MarketModel perturbed_model(const MarketModel& model, const Perturbation& mu) {
  MarketModel m = model;
  m.drift = [b = model.drift, s = model.volatility, mu](double t) { return b(t) + mu(t) * s(t); };
  return m;
}

}  // namespace dualctl
