#include "dualctl/bsde.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace dualctl;

namespace {

StateChannels log_price_state(const MarketModel& m, const PathEnsemble& e) {
  return {price_paths(m, e).array().log().matrix()};
}

}  // namespace

TEST_CASE("constant terminal gives a constant triple") {
  const auto m = MarketModel::constant(0.05, 0.2, {{0.1, 1.0}});
  const auto e = simulate_drivers(m, TimeGrid(1.0, 20), 2000, 1);
  const auto a = martingale_representation(e, Eigen::VectorXd::Constant(2000, 3.0), log_price_state(m, e));
  CHECK((a.p.array() - 3.0).abs().maxCoeff() < 1e-12);
  CHECK(a.q.cwiseAbs().maxCoeff() < 1e-10);
  CHECK(a.r[0].cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("terminal B(T) has unit integrand") {
  const auto m = MarketModel::constant(0.0, 0.2);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 50), 50000, 2);
  const Channel b = e.brownian_path();
  const auto a = martingale_representation(e, b.col(50), {b}, {1});
  CHECK((a.q.array() - 1.0).abs().maxCoeff() < 0.05);
  CHECK((a.p - b).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("zero driver equals the martingale representation") {
  const auto m = MarketModel::constant(0.05, 0.2);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 10), 1000, 3);
  const auto st = log_price_state(m, e);
  const Eigen::VectorXd term = st[0].col(10).array().exp();
  const auto a = martingale_representation(e, term, st);
  const auto b = solve_linear_bsde(e, DriverSpec::zero(), term, st);
  CHECK(a.p == b.p);
  CHECK(a.q == b.q);
}

TEST_CASE("driver-free adjoint has time-constant sample mean") {
  const auto m = MarketModel::constant(0.05, 0.2, {{0.1, 1.0}});
  const auto e = simulate_drivers(m, TimeGrid(1.0, 50), 20000, 4, {true});
  const auto st = log_price_state(m, e);
  const Eigen::VectorXd term = st[0].col(50).array().exp().inverse();
  const auto a = martingale_representation(e, term, st);
  const auto ref = oracle::mean_se(term);
  for (int i = 0; i <= 50; i += 5) CHECK(std::abs(a.p.col(i).mean() - ref.mean) < 3.0 * ref.se);
}

TEST_CASE("linear driver p2 benchmark") {
  // dp = q b/sigma dt + q dB with p(T) = 1/G(T), G the unique no-jump density: p(0) = 1/y.
  const auto m = MarketModel::constant(0.05, 0.2);
  const TimeGrid g(1.0, 100);
  const auto e = simulate_drivers(m, g, 50000, 5, {true});
  ScenarioControl c;
  c.theta0 = AdaptedProcess::constant(-0.25);
  const auto dens = density_paths(e, c);
  DriverSpec d;
  d.q_coef = [](double) { return 0.25; };
  const StateChannels st{price_paths(m, e).array().log().matrix(), dens.array().log().matrix(), dens.cwiseInverse()};
  const auto a = solve_linear_bsde(e, d, dens.col(100).cwiseInverse(), st);
  CHECK(std::abs(a.p(0, 0) - 1.0) < 0.02);
  for (int i = 1; i < 99; ++i) CHECK((a.q.col(i).cwiseQuotient(a.p.col(i)).array() - 0.25).abs().maxCoeff() < 0.05);

  const auto rep = bsde_residual_report(a, e, d, st);
  CHECK(rep.mean_residual < a.diagnostics.regression_tolerance);

  AdjointTriple bad = a;
  bad.q.array() += 1.0;
  const auto worse = bsde_residual_report(bad, e, d, st);
  CHECK(worse.max_residual > 10.0 * rep.max_residual);
}

TEST_CASE("an exact triple has vanishing residuals") {
  const auto m = MarketModel::constant(0.0, 0.2);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 20), 4000, 6);
  AdjointTriple t;
  t.p = e.brownian_path();
  t.q = Eigen::MatrixXd::Ones(4000, 20);
  const auto rep = bsde_residual_report(t, e, DriverSpec::zero(), {t.p});
  CHECK(rep.max_residual < 1e-10);
}

TEST_CASE("implicit step singularity is reported") {
  const auto m = MarketModel::constant(0.0, 0.2);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 10), 100, 1);
  DriverSpec d;
  d.p_coef = [](double) { return -10.0; };  // 1 + c_p dt = 0
  CHECK_THROWS_AS(solve_linear_bsde(e, d, Eigen::VectorXd::Ones(100), {}), SolverError);
}

TEST_CASE("terminal condition is matched exactly") {
  const auto m = MarketModel::constant(0.05, 0.2, {{-0.1, 2.0}});
  const auto e = simulate_drivers(m, TimeGrid(1.0, 10), 500, 9);
  const auto st = log_price_state(m, e);
  const Eigen::VectorXd term = st[0].col(10);
  const auto a = martingale_representation(e, term, st);
  CHECK(a.p.col(10) == term);
}

TEST_CASE("solver rejects mismatched inputs") {
  const auto m = MarketModel::constant(0.05, 0.2);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 10), 50, 1);
  CHECK_THROWS_AS(martingale_representation(e, Eigen::VectorXd::Ones(49), {}), InvalidInput);
  Eigen::VectorXd bad = Eigen::VectorXd::Ones(50);
  bad(3) = NAN;
  CHECK_THROWS_AS(martingale_representation(e, bad, {}), InvalidInput);
}
