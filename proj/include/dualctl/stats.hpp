#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace dualctl {

struct SampleStats {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean, paths treated as independent
};

// Under antithetic pairing the independent-path standard error overstates the
// error of monotone functionals, so it is used as a conservative bound.
SampleStats sample_stats(const Eigen::Ref<const Eigen::VectorXd>& values);

// Residual of a first-order condition, evaluated per path and step.
struct FocResidual {
  std::string name;
  Eigen::VectorXd mean_abs_by_step;  // mean over paths of |residual|
  double mean_abs = 0.0;             // over interior steps
  double scale = 0.0;                // largest mean |term| entering the residual
  double normalized = 0.0;           // mean_abs / scale, or mean_abs when scale vanishes
};

inline constexpr double kScaleFloor = 1e-14;

// Builds the report from residual and term matrices (paths x steps).
// Interior steps are 1 .. steps-2 when there are at least three steps.
FocResidual summarize_foc(std::string name, const Eigen::MatrixXd& residual,
                          std::initializer_list<const Eigen::MatrixXd*> terms);

// Maximizes a unimodal f on [lo, hi]; f may return -inf at infeasible points.
template <class F>
double golden_section_max(F&& f, double lo, double hi, int iterations) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < iterations && (b - a) > 1e-12; ++it) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return fc >= fd ? c : d;
}

}  // namespace dualctl
