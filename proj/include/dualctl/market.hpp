#pragma once

#include "dualctl/controls.hpp"
#include "dualctl/errors.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace dualctl {

// Paths x (steps + 1) values of a forward process, column i at time t_i.
using Channel = Eigen::MatrixXd;

struct JumpMark {
  double mark = 0.0;       // zeta_k
  double intensity = 0.0;  // nu_k, jumps per unit time
};

using JumpSizeFunction = std::function<double(double t, double mark)>;

// Itô-Lévy market with one risky asset and a finite (compound Poisson) Lévy measure.
// Coefficients are deterministic functions of time.
struct MarketModel {
  TimeFunction drift;          // b(t)
  TimeFunction volatility;     // sigma(t)
  JumpSizeFunction jump_size;  // gamma(t, zeta); the mark itself when unset
  std::vector<JumpMark> marks;
  double horizon = 1.0;
  double s0 = 1.0;

  static MarketModel constant(double b, double sigma, std::vector<JumpMark> marks = {},
                              double horizon = 1.0);

  double b(double t) const { return drift(t); }
  double sigma(double t) const { return volatility(t); }
  double gamma(double t, std::size_t k) const {
    return jump_size ? jump_size(t, marks[k].mark) : marks[k].mark;
  }
  std::size_t n_marks() const { return marks.size(); }
  bool has_jumps() const;
};

class TimeGrid {
 public:
  TimeGrid(double horizon, int n_steps);

  int n_steps() const { return n_steps_; }
  double horizon() const { return horizon_; }
  double dt() const { return dt_; }
  double time(int i) const { return i == n_steps_ ? horizon_ : i * dt_; }
  std::vector<double> times() const;

 private:
  double horizon_;
  int n_steps_;
  double dt_;
};

// Throws InvalidInput if a coefficient is non-finite on the grid, gamma <= -1,
// an intensity is negative, or horizon/s0 are not positive.
void validate_model(const MarketModel& model, const TimeGrid& grid);

struct SimulationOptions {
  // Pair path 2j+1 with path 2j using negated Brownian increments (jump counts shared).
  bool antithetic = false;
};

// Immutable driving noise: Brownian increments and per-mark jump counts.
class PathEnsemble {
 public:
  PathEnsemble(TimeGrid grid, Eigen::MatrixXd brownian, std::vector<Eigen::MatrixXi> jumps,
               std::vector<double> intensities, std::uint64_t seed = 0, bool antithetic = false);

  const TimeGrid& grid() const { return grid_; }
  Eigen::Index n_paths() const { return brownian_.rows(); }
  int n_steps() const { return grid_.n_steps(); }
  std::size_t n_marks() const { return jumps_.size(); }
  std::uint64_t seed() const { return seed_; }
  bool antithetic() const { return antithetic_; }

  const Eigen::MatrixXd& brownian_increments() const { return brownian_; }
  double dB(Eigen::Index path, int step) const { return brownian_(path, step); }
  const Eigen::MatrixXi& jump_counts(std::size_t k) const { return jumps_[k]; }
  int jumps(Eigen::Index path, int step, std::size_t k) const { return jumps_[k](path, step); }
  double intensity(std::size_t k) const { return intensities_[k]; }
  // N_k - nu_k * dt over one step.
  double compensated_jump(Eigen::Index path, int step, std::size_t k) const {
    return jumps_[k](path, step) - intensities_[k] * grid_.dt();
  }

  // Cumulative Brownian motion B(t_i), paths x (steps + 1).
  Channel brownian_path() const;
  // Sub-ensemble made of the listed paths.
  PathEnsemble select(std::span<const Eigen::Index> paths) const;

 private:
  TimeGrid grid_;
  Eigen::MatrixXd brownian_;
  std::vector<Eigen::MatrixXi> jumps_;
  std::vector<double> intensities_;
  std::uint64_t seed_;
  bool antithetic_;
};

PathEnsemble simulate_drivers(const MarketModel& model, const TimeGrid& grid, Eigen::Index n_paths,
                              std::uint64_t seed, SimulationOptions options = {});

// Exact log-Euler price update with the jump compensator folded into the drift.
Channel price_paths(const MarketModel& model, const PathEnsemble& ensemble);

enum class UpdateScheme {
  Exact,  // exponential update, positivity by construction
  Euler,  // plain Euler step
};

struct WealthOptions {
  std::optional<Perturbation> perturbation;
  // Defaults: Exact for fraction strategies, Euler for unit-count strategies.
  // Exact with unit counts rebalances to the fraction phi*S/X at each grid time.
  std::optional<UpdateScheme> scheme;
};

// Self-financing wealth. Throws AdmissibilityError when a path reaches X <= 0
// or a fraction violates 1 + pi*gamma > 0 under the exact update.
Channel wealth_paths(const MarketModel& model, const PathEnsemble& ensemble, const Strategy& strategy,
                     double x0, const WealthOptions& options = {});

// Terminal wealth only, for constant fractions; avoids storing the full channel.
Eigen::VectorXd terminal_wealth(const MarketModel& model, const PathEnsemble& ensemble, double pi,
                                double x0, double mu = 0.0);

inline constexpr double kThetaFloor = 1e-9;  // theta1 >= -1 + kThetaFloor

// Stochastic-exponential density G with G(0) = y. Throws InvalidInput if theta1 < -1 + floor.
Channel density_paths(const PathEnsemble& ensemble, const ScenarioControl& theta,
                      UpdateScheme scheme = UpdateScheme::Exact);

// b + mu*sigma + sigma*theta0 + sum_k gamma_k * theta1_k * nu_k at time t.
double elmm_residual(const MarketModel& model, double theta0, std::span<const double> theta1,
                     double mu, double t);

// Maximum absolute residual over grid times (and paths for path-valued controls).
double max_elmm_residual(const MarketModel& model, const TimeGrid& grid, const ScenarioControl& theta,
                         Eigen::Index n_paths = 1);

MarketModel perturbed_model(const MarketModel& model, const Perturbation& mu);

}  // namespace dualctl
