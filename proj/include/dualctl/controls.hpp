#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <variant>
#include <vector>

namespace dualctl {

using TimeFunction = std::function<double(double)>;

// A predictable process sampled at the left end of each grid interval.
// Either deterministic (constant or a function of time) or an explicit
// paths x steps array, e.g. a ratio of regression-estimated adjoints.
class AdaptedProcess {
 public:
  AdaptedProcess() : repr_(0.0) {}

  static AdaptedProcess constant(double value) { return AdaptedProcess(Repr{value}); }
  static AdaptedProcess of_time(TimeFunction f) { return AdaptedProcess(Repr{std::move(f)}); }
  static AdaptedProcess on_paths(Eigen::MatrixXd values) { return AdaptedProcess(Repr{std::move(values)}); }

  double operator()(Eigen::Index path, Eigen::Index step, double t) const {
    switch (repr_.index()) {
      case 0: return std::get<0>(repr_);
      case 1: return std::get<1>(repr_)(t);
      default: {
        const auto& m = std::get<2>(repr_);
        return m(m.rows() == 1 ? 0 : path, step);
      }
    }
  }

  bool deterministic() const { return repr_.index() != 2 || std::get<2>(repr_).rows() == 1; }
  bool is_constant() const { return repr_.index() == 0; }
  double constant_value() const { return std::get<0>(repr_); }
  const Eigen::MatrixXd* path_values() const { return std::get_if<2>(&repr_); }

 private:
  using Repr = std::variant<double, TimeFunction, Eigen::MatrixXd>;
  explicit AdaptedProcess(Repr r) : repr_(std::move(r)) {}
  Repr repr_;
};

// Drift perturbation mu(t); the perturbed price drift is b + mu * sigma.
struct Perturbation {
  TimeFunction mu;

  static Perturbation constant(double value) {
    return Perturbation{[value](double) { return value; }};
  }
  double operator()(double t) const { return mu ? mu(t) : 0.0; }
};

enum class Parameterization { Fraction, Units };

// Portfolio either as fraction of wealth pi(t) or as a number of units phi(t).
// A feedback rule of (t, X, S), when set, takes precedence over `values`.
struct Strategy {
  Parameterization kind = Parameterization::Fraction;
  AdaptedProcess values;
  std::function<double(double t, double wealth, double price)> feedback;

  static Strategy fraction(AdaptedProcess pi) { return {Parameterization::Fraction, std::move(pi), {}}; }
  static Strategy constant_fraction(double pi) { return fraction(AdaptedProcess::constant(pi)); }
  static Strategy units(AdaptedProcess phi) { return {Parameterization::Units, std::move(phi), {}}; }

  double value(Eigen::Index path, Eigen::Index step, double t, double wealth, double price) const {
    return feedback ? feedback(t, wealth, price) : values(path, step, t);
  }
};

// Dual control theta = (theta0, theta1 per mark), initial density y and,
// in robust mode, the drift perturbation it is paired with.
struct ScenarioControl {
  AdaptedProcess theta0;
  std::vector<AdaptedProcess> theta1;
  double y = 1.0;
  std::optional<Perturbation> mu;
};

}  // namespace dualctl
