#include "dualctl/bridge.hpp"

#include <doctest.h>

#include <cmath>

using namespace dualctl;

TEST_CASE("analytic merton bridge both ways") {
  const auto m = MarketModel::constant(0.05, 0.2);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 100), 10000, 1);
  const auto u = make_log_utility();
  PrimalOptions po;
  po.mode = AdjointMode::Analytic;
  const auto primal = evaluate_primal(m, u, 1.0, merton_log_closed_form(m), e, po);
  const auto p2d = primal_to_dual(m, u, primal, e);
  CHECK(p2d.report.passed());
  CHECK(p2d.control.theta0(0, 0, 0.0) == doctest::Approx(-0.25));
  CHECK(p2d.report.check("terminal_link").max_abs < 1e-12);
  CHECK(p2d.report.check("process_link").max_abs < 1e-12);
  CHECK(p2d.report.check("product_invariant").max_abs < 1e-12);

  DualOptions oa;
  oa.mode = AdjointMode::Analytic;
  const auto dual = evaluate_dual(m, u, p2d.control, e, oa);
  const auto d2p = dual_to_primal(m, u, dual, e);
  CHECK(d2p.report.passed());
  CHECK((d2p.fraction.array() - 1.25).abs().maxCoeff() < 1e-12);
}

TEST_CASE("static bridge in a zero-drift market") {
  const auto m = MarketModel::constant(0.0, 0.2);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 10), 100, 2);
  const auto u = make_log_utility();
  PrimalOptions po;
  po.mode = AdjointMode::Analytic;
  const auto primal = evaluate_primal(m, u, 2.0, Strategy::constant_fraction(0.0), e, po);
  const auto p2d = primal_to_dual(m, u, primal, e);
  CHECK(p2d.y == doctest::Approx(0.5));
  CHECK(p2d.control.theta0(0, 0, 0.0) == 0.0);
}

TEST_CASE("regression bridge stays within five percent pathwise") {
  const auto m = MarketModel::constant(0.05, 0.2);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 100), 50000, 3, {true});
  const auto u = make_log_utility();
  const auto primal = evaluate_primal(m, u, 1.0, merton_log_closed_form(m), e);
  const auto p2d = primal_to_dual(m, u, primal, e);
  CHECK(p2d.report.check("process_link").max_rel < 0.05);
}

TEST_CASE("robust analytic bridge and round trip") {
  const auto m = MarketModel::constant(0.05, 0.2);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 100), 10000, 4);
  const auto u = make_log_utility();
  const Penalty pen(1.0);
  const auto cf = robust_log_closed_form(m, u, pen);
  RobustOptions ro;
  ro.mode = AdjointMode::Analytic;
  const auto rp = evaluate_robust_primal(m, u, pen, 1.0, cf.fraction, -0.125, e, ro);
  const auto p2d = robust_primal_to_dual(m, u, rp, e);
  CHECK(p2d.report.passed());
  CHECK(p2d.control.theta0(0, 0, 0.0) == doctest::Approx(-0.125));
  DualOptions oa;
  oa.mode = AdjointMode::Analytic;
  const auto rd = evaluate_robust_dual(m, u, pen, p2d.control, e, oa);
  CHECK(rd.mu == doctest::Approx(-0.125));
  const auto d2p = robust_dual_to_primal(m, u, rd, e);
  CHECK(d2p.report.passed());
  CHECK((d2p.fraction.array() - 0.625).abs().maxCoeff() < 1e-12);
  // Units match the closed form b / (2 sigma^2 G S_mu).
  const auto units = robust_log_units(m, rd.dual.density, rd.dual.price);
  const auto* phi = d2p.strategy.values.path_values();
  REQUIRE(phi != nullptr);
  CHECK((*phi - units).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("product identity under exact and euler updates") {
  const auto m = MarketModel::constant(0.05, 0.2);
  const auto u = make_log_utility();
  double prev = INFINITY;
  for (int n : {25, 50, 100, 200}) {
    const auto e = simulate_drivers(m, TimeGrid(1.0, n), 5000, 5);
    const auto theta = unique_scenario_no_jumps(m, 1.0);
    WealthOptions euler;
    euler.scheme = UpdateScheme::Euler;
    const auto xe = wealth_paths(m, e, merton_log_closed_form(m), 1.0, euler);
    const auto ge = density_paths(e, theta, UpdateScheme::Euler);
    const auto dev = verify_product_identity(xe, ge, 1.0, 1.0);
    CHECK(dev.mean_square < prev);
    prev = dev.mean_square;
    const auto xx = wealth_paths(m, e, merton_log_closed_form(m), 1.0);
    const auto gx = density_paths(e, theta);
    CHECK(verify_product_identity(xx, gx, 1.0, 1.0).max_abs < 1e-12);
  }
}

TEST_CASE("bridge rejects densities that would not stay positive") {
  const auto m = MarketModel::constant(0.05, 0.2, {{0.5, 1.0}});
  const auto e = simulate_drivers(m, TimeGrid(1.0, 10), 200, 6);
  const auto u = make_log_utility();
  PrimalOptions po;
  po.mode = AdjointMode::Analytic;
  auto primal = evaluate_primal(m, u, 1.0, Strategy::constant_fraction(0.5), e, po);
  primal.adjoints.r[0] = -2.0 * primal.adjoints.p.leftCols(10);
  CHECK_THROWS_AS(primal_to_dual(m, u, primal, e), BridgeViolation);
}
