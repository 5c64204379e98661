#include "dualctl/preferences.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace dualctl;

TEST_CASE("log utility closed forms") {
  const auto u = make_log_utility();
  CHECK(u.V(1.0) == doctest::Approx(-1.0));
  CHECK(u.inverse_marginal(2.0) == doctest::Approx(0.5));
  CHECK(u.dU(4.0) == doctest::Approx(0.25));
}

TEST_CASE("log conjugate agrees with a grid supremum") {
  const auto u = make_log_utility();
  const double sup = oracle::grid_sup([](double x) { return std::log(x); }, 0.5);
  CHECK(std::abs(u.V(0.5) - sup) < 1e-6);
}

TEST_CASE("power conjugate agrees with a grid supremum") {
  const auto u = make_power_utility(0.5);
  CHECK(u.V(1.0) == doctest::Approx(1.0));
  const double sup = oracle::grid_sup([](double x) { return 2.0 * std::sqrt(x); }, 1.0);
  CHECK(std::abs(u.V(1.0) - sup) < 1e-6);
}

TEST_CASE("marginal inversion for power utilities") {
  for (double a : {0.3, 0.5, 0.7}) {
    const auto u = make_power_utility(a);
    for (double y : {0.5, 1.0, 2.0}) CHECK(std::abs(u.dU(u.inverse_marginal(y)) - y) < 1e-8);
  }
}

TEST_CASE("power conjugate is decreasing") {
  const auto u = make_power_utility(0.3);
  double prev = u.V(0.1);
  for (double y = 0.2; y <= 10.0; y += 0.1) {
    CHECK(u.V(y) < prev);
    prev = u.V(y);
  }
}

TEST_CASE("power utility rejects alpha outside (0, 1)") {
  CHECK_THROWS_AS(make_power_utility(0.0), InvalidInput);
  CHECK_THROWS_AS(make_power_utility(1.0), InvalidInput);
  CHECK_THROWS_AS(make_power_utility(-0.5), InvalidInput);
}

TEST_CASE("biconjugacy against a grid infimum") {
  for (double a : {0.3, 0.5, 0.7}) {
    const auto u = make_power_utility(a);
    for (double x : {0.1, 1.0, 10.0}) {
      const double inf = oracle::grid_inf([&](double y) { return u.V(y); }, x);
      CHECK(std::abs(u.U(x) - inf) < 1e-6);
    }
  }
  const auto l = make_log_utility();
  for (double x : {0.1, 1.0, 10.0})
    CHECK(std::abs(l.U(x) - oracle::grid_inf([&](double y) { return l.V(y); }, x)) < 1e-6);
}

TEST_CASE("certification reports pass for the supported families") {
  CHECK(certify(make_log_utility()).passed);
  for (double a : {0.3, 0.5, 0.7}) {
    const auto r = certify(make_power_utility(a));
    CHECK(r.passed);
    CHECK(r.biconjugacy_residual < kConjugacyTolerance);
    CHECK(r.inversion_residual < kInversionTolerance);
  }
}

TEST_CASE("quadratic penalty") {
  const auto p = make_quadratic_penalty();
  CHECK(p.rho(0.0) == 0.0);
  CHECK(p.derivative(-0.125) == doctest::Approx(-0.125));
  CHECK(p.inverse_derivative(p.derivative(0.3)) == doctest::Approx(0.3));
  for (double x = -1.0; x <= 1.0; x += 0.125)
    if (x != 0.0) CHECK(p.rho(x) > 0.0);
}

TEST_CASE("fenchel gap") {
  const auto u = make_log_utility();
  CHECK(std::abs(fenchel_gap(u, 2.0, 0.5)) < 1e-12);
  CHECK(fenchel_gap(u, 1.0, 2.0) == doctest::Approx(1.0 - std::log(2.0)));
  const auto w = make_power_utility(0.7);
  for (double x : {0.2, 1.0, 3.0})
    for (double y : {0.3, 1.0, 4.0}) CHECK(fenchel_gap(w, x, y) >= -1e-14);
}
