#include "dualctl/preferences.hpp"

#include "dualctl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dualctl {

namespace {

std::vector<double> log_grid(double lo, double hi, int points) {
  std::vector<double> g(points);
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < points; ++i) g[i] = std::exp(a + (b - a) * i / (points - 1));
  return g;
}

// Golden-section search for the minimum of f on [a, b] in log coordinates.
template <class F>
double golden_min(F&& f, double a, double b) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double la = std::log(a), lb = std::log(b);
  double c = lb - r * (lb - la), d = la + r * (lb - la);
  double fc = f(std::exp(c)), fd = f(std::exp(d));
  for (int it = 0; it < 200 && lb - la > 1e-15; ++it) {
    if (fc < fd) {
      lb = d;
      d = c;
      fd = fc;
      c = lb - r * (lb - la);
      fc = f(std::exp(c));
    } else {
      la = c;
      c = d;
      fc = fd;
      d = la + r * (lb - la);
      fd = f(std::exp(d));
    }
  }
  return std::min(fc, fd);
}

template <class F>
double grid_min(F&& f, const ConjugateOracle& o) {
  const auto grid = log_grid(o.lo, o.hi, o.points);
  std::size_t best = 0;
  double best_v = f(grid[0]);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double v = f(grid[i]);
    if (v < best_v) {
      best_v = v;
      best = i;
    }
  }
  const double a = grid[best == 0 ? 0 : best - 1];
  const double b = grid[std::min(best + 1, grid.size() - 1)];
  return std::min(best_v, golden_min(f, a, b));
}

}  // namespace

UtilityPair make_log_utility() {
  UtilityPair p;
  p.family_ = UtilityFamily::Log;
  p.name_ = "log";
  p.u_ = [](double x) { return std::log(x); };
  p.du_ = [](double x) { return 1.0 / x; };
  p.v_ = [](double y) { return -std::log(y) - 1.0; };
  p.dv_ = [](double y) { return -1.0 / y; };
  const auto rep = certify(p);
  if (!rep.passed) throw SolverError("log utility failed conjugacy certification");
  return p;
}

UtilityPair make_power_utility(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("power utility: alpha must lie in (0, 1)");
  UtilityPair p;
  p.family_ = UtilityFamily::Power;
  p.alpha_ = alpha;
  p.name_ = "power";
  const double e = alpha / (alpha - 1.0);
  p.u_ = [alpha](double x) { return std::pow(x, alpha) / alpha; };
  p.du_ = [alpha](double x) { return std::pow(x, alpha - 1.0); };
  p.v_ = [alpha, e](double y) { return (1.0 - alpha) / alpha * std::pow(y, e); };
  p.dv_ = [alpha](double y) { return -std::pow(y, 1.0 / (alpha - 1.0)); };
  const auto rep = certify(p);
  if (!rep.passed) throw SolverError("power utility failed conjugacy certification");
  return p;
}

double fenchel_gap(const UtilityPair& pair, double x, double y) { return pair.V(y) + x * y - pair.U(x); }

double ConjugateOracle::sup_conjugate(const std::function<double(double)>& u, double y) const {
  return -grid_min([&](double x) { return x * y - u(x); }, *this);
}

double ConjugateOracle::inf_biconjugate(const std::function<double(double)>& v, double x) const {
  return grid_min([&](double y) { return v(y) + x * y; }, *this);
}

CertificationReport certify(const UtilityPair& pair, const ConjugateOracle& oracle) {
  CertificationReport rep;
  const auto u = [&](double x) { return pair.U(x); };
  const auto v = [&](double y) { return pair.V(y); };

  // x in [0.1, 10] keeps the optimiser y = U'(x) well inside the oracle grid.
  for (const double x : log_grid(0.1, 10.0, 21)) {
    rep.biconjugacy_residual = std::max(rep.biconjugacy_residual, std::abs(pair.U(x) - oracle.inf_biconjugate(v, x)));
    const double y = pair.dU(x);
    rep.conjugacy_residual = std::max(rep.conjugacy_residual, std::abs(pair.V(y) - oracle.sup_conjugate(u, y)));
  }
  for (const double y : log_grid(1e-2, 1e2, 41)) {
    rep.inversion_residual = std::max(rep.inversion_residual, std::abs(pair.dU(pair.inverse_marginal(y)) - y) / y);
  }

  bool shape = pair.dU(oracle.lo) > pair.dU(1.0) && pair.dU(1.0) > pair.dU(oracle.hi) && pair.dU(oracle.hi) > 0.0;
  const auto g = log_grid(1e-2, 1e2, 200);
  for (std::size_t i = 1; i + 1 < g.size() && shape; ++i) {
    // Second differences on a non-uniform grid via slopes.
    const double su0 = (pair.U(g[i]) - pair.U(g[i - 1])) / (g[i] - g[i - 1]);
    const double su1 = (pair.U(g[i + 1]) - pair.U(g[i])) / (g[i + 1] - g[i]);
    const double sv0 = (pair.V(g[i]) - pair.V(g[i - 1])) / (g[i] - g[i - 1]);
    const double sv1 = (pair.V(g[i + 1]) - pair.V(g[i])) / (g[i + 1] - g[i]);
    shape = su0 > 0.0 && su1 < su0 && sv0 < 0.0 && sv1 > sv0;
  }
  rep.shape_ok = shape;
  rep.passed = shape && rep.conjugacy_residual < kConjugacyTolerance &&
               rep.biconjugacy_residual < kConjugacyTolerance && rep.inversion_residual < kInversionTolerance;
  return rep;
}

Penalty::Penalty(double scale) : scale_(scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidInput("penalty: scale must be positive");
}

Penalty make_quadratic_penalty(double scale) { return Penalty(scale); }

}  // namespace dualctl
