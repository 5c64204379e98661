#pragma once

#include "dualctl/errors.hpp"

#include <functional>
#include <string>

namespace dualctl {

enum class UtilityFamily { Log, Power };

// Utility U on (0, inf) with its convex conjugate V(y) = sup_x {U(x) - x*y}.
// The marginal inverse I = (U')^{-1} equals -V'.
class UtilityPair {
 public:
  UtilityFamily family() const { return family_; }
  double alpha() const { return alpha_; }
  const std::string& name() const { return name_; }

  double U(double x) const { return u_(x); }
  double dU(double x) const { return du_(x); }
  double V(double y) const { return v_(y); }
  double dV(double y) const { return dv_(y); }
  double inverse_marginal(double y) const { return -dv_(y); }

  friend UtilityPair make_log_utility();
  friend UtilityPair make_power_utility(double alpha);

 private:
  UtilityPair() = default;
  UtilityFamily family_ = UtilityFamily::Log;
  double alpha_ = 0.0;
  std::string name_;
  std::function<double(double)> u_, du_, v_, dv_;
};

// U = ln x, V(y) = -ln y - 1.
UtilityPair make_log_utility();
// U = x^alpha / alpha, alpha in (0, 1). Throws InvalidInput otherwise.
UtilityPair make_power_utility(double alpha);

// V(y) + x*y - U(x) >= 0, zero iff y = U'(x).
double fenchel_gap(const UtilityPair& pair, double x, double y);

// Brute-force conjugates: log-spaced grid search over [lo, hi] followed by a
// golden-section polish inside the bracketing cells.
struct ConjugateOracle {
  double lo = 1e-4;
  double hi = 1e4;
  int points = 10000;

  double sup_conjugate(const std::function<double(double)>& u, double y) const;  // sup_x {u(x) - x*y}
  double inf_biconjugate(const std::function<double(double)>& v, double x) const;  // inf_y {v(y) + x*y}
};

struct CertificationReport {
  double conjugacy_residual = 0.0;    // max |V(y) - sup_x{U - xy}|
  double biconjugacy_residual = 0.0;  // max |U(x) - inf_y{V + xy}|
  double inversion_residual = 0.0;    // max |U'(-V'(y)) - y|
  bool shape_ok = false;              // monotonicity, concavity/convexity, Inada ordering
  bool passed = false;
};

inline constexpr double kConjugacyTolerance = 1e-6;
inline constexpr double kInversionTolerance = 1e-8;

// Runs the grid-oracle certification; utility constructors call this and throw on failure.
CertificationReport certify(const UtilityPair& pair, const ConjugateOracle& oracle = {});

// Convex C^1 penalty with minimum rho(0) = 0; here the scaled quadratic c*x^2/2.
class Penalty {
 public:
  explicit Penalty(double scale = 1.0);

  double scale() const { return scale_; }
  double rho(double x) const { return 0.5 * scale_ * x * x; }
  double derivative(double x) const { return scale_ * x; }
  double inverse_derivative(double v) const { return v / scale_; }

 private:
  double scale_;
};

Penalty make_quadratic_penalty(double scale = 1.0);

}  // namespace dualctl
