#include "dualctl/market.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace dualctl;

TEST_CASE("simulate_drivers is a deterministic function of the seed") {
  const auto m = MarketModel::constant(0.05, 0.2, {{0.1, 1.0}});
  const TimeGrid g(1.0, 10);
  const auto a = simulate_drivers(m, g, 2, 11);
  const auto b = simulate_drivers(m, g, 2, 11);
  CHECK(a.brownian_increments() == b.brownian_increments());
  CHECK(a.jump_counts(0) == b.jump_counts(0));
  const auto c = simulate_drivers(m, g, 2, 12);
  CHECK(a.brownian_increments() != c.brownian_increments());
}

TEST_CASE("paths are generated independently of the ensemble size") {
  const auto m = MarketModel::constant(0.05, 0.2, {{0.1, 1.0}});
  const TimeGrid g(1.0, 5);
  const auto small = simulate_drivers(m, g, 3, 5);
  const auto large = simulate_drivers(m, g, 10, 5);
  CHECK(small.brownian_increments() == large.brownian_increments().topRows(3));
}

TEST_CASE("no marks means no jumps") {
  const auto m = MarketModel::constant(0.05, 0.2);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 4), 8, 1);
  CHECK(e.n_marks() == 0);
}

TEST_CASE("compensated increments are counts minus nu dt") {
  const auto m = MarketModel::constant(0.05, 0.2, {{0.1, 2.0}});
  const auto e = simulate_drivers(m, TimeGrid(1.0, 10), 4, 3);
  for (Eigen::Index p = 0; p < 4; ++p)
    for (int i = 0; i < 10; ++i) CHECK(e.compensated_jump(p, i, 0) == doctest::Approx(e.jumps(p, i, 0) - 0.2));
}

TEST_CASE("per-step jump count has the Poisson mean") {
  const auto m = MarketModel::constant(0.0, 0.2, {{0.1, 1.0}});
  const auto e = simulate_drivers(m, TimeGrid(1.0, 100), 1000, 9);
  const Eigen::MatrixXd c = e.jump_counts(0).cast<double>();
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(c.data(), c.size());
  const auto s = oracle::mean_se(flat);
  CHECK(std::abs(s.mean - 0.01) < 3.0 * s.se);
}

TEST_CASE("brownian increments have variance dt") {
  const auto m = MarketModel::constant(0.0, 0.2);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 50), 4000, 2);
  const double var = e.brownian_increments().array().square().mean();
  CHECK(var == doctest::Approx(0.02).epsilon(0.02));
}

TEST_CASE("antithetic pairs negate the brownian increments") {
  const auto m = MarketModel::constant(0.0, 0.2, {{0.1, 1.0}});
  const auto e = simulate_drivers(m, TimeGrid(1.0, 5), 6, 2, {true});
  CHECK(e.brownian_increments().row(1) == -e.brownian_increments().row(0));
  CHECK(e.jump_counts(0).row(1) == e.jump_counts(0).row(0));
}

TEST_CASE("model validation rejects non-finite coefficients") {
  auto m = MarketModel::constant(0.05, 0.2);
  m.volatility = [](double t) { return t > 0.5 ? NAN : 0.2; };
  CHECK_THROWS_AS(simulate_drivers(m, TimeGrid(1.0, 10), 2, 1), InvalidInput);
  auto j = MarketModel::constant(0.05, 0.2, {{-1.5, 1.0}});
  CHECK_THROWS_AS(validate_model(j, TimeGrid(1.0, 10)), InvalidInput);
}

TEST_CASE("price is constant without dynamics") {
  const auto m = MarketModel::constant(0.0, 0.0);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 10), 5, 1);
  const auto s = price_paths(m, e);
  CHECK((s.array() == 1.0).all());
}

TEST_CASE("geometric brownian mean") {
  const auto m = MarketModel::constant(0.05, 0.2);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 20), 100000, 4);
  const auto s = price_paths(m, e);
  const auto st = oracle::mean_se(s.col(20));
  CHECK(std::abs(st.mean - std::exp(0.05)) < 3.0 * st.se);
}

TEST_CASE("a forced jump multiplies the price by 1 + gamma") {
  const auto m = MarketModel::constant(0.0, 0.0, {{0.1, 1.0}});
  const TimeGrid g(1.0, 4);
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(1, 4);
  counts(0, 2) = 1;
  const PathEnsemble e(g, Eigen::MatrixXd::Zero(1, 4), {counts}, {1.0});
  const auto s = price_paths(m, e);
  // Between jumps the compensator drift -gamma nu dt applies.
  const double drift = std::exp(-0.1 * 0.25);
  CHECK(s(0, 3) / s(0, 2) == doctest::Approx(1.1 * drift).epsilon(1e-14));
  CHECK(s(0, 2) / s(0, 1) == doctest::Approx(drift).epsilon(1e-14));
}

TEST_CASE("wealth under pi = 0 stays at x0") {
  const auto m = MarketModel::constant(0.05, 0.2, {{0.1, 1.0}});
  const auto e = simulate_drivers(m, TimeGrid(1.0, 10), 50, 1);
  const auto x = wealth_paths(m, e, Strategy::constant_fraction(0.0), 2.0);
  CHECK((x.array() == 2.0).all());
}

TEST_CASE("fully invested wealth tracks the price") {
  const auto m = MarketModel::constant(0.05, 0.2);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 10), 50, 1);
  const auto x = wealth_paths(m, e, Strategy::constant_fraction(1.0), 1.0);
  const auto s = price_paths(m, e);
  CHECK((x - s).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("the log-optimal constant fraction maximizes sample log growth") {
  const auto m = MarketModel::constant(0.05, 0.2);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 50), 20000, 3, {true});
  auto growth = [&](double pi) { return terminal_wealth(m, e, pi, 1.0).array().log().mean(); };
  const double best = growth(1.25);
  for (double pi : {0.0, 0.5, 1.0, 1.2, 1.3, 1.5, 2.0, 2.5}) CHECK(growth(pi) <= best + 1e-12);
  CHECK(best == doctest::Approx(oracle::log_growth(0.05, 0.2, 1.25, 1.0)).epsilon(1e-9));
}

TEST_CASE("unit-count wealth that reaches zero is rejected") {
  const auto m = MarketModel::constant(0.0, 0.0, {{-0.9, 1.0}});
  const TimeGrid g(1.0, 2);
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(1, 2);
  counts(0, 0) = 1;
  const PathEnsemble e(g, Eigen::MatrixXd::Zero(1, 2), {counts}, {1.0});
  CHECK_THROWS_AS(wealth_paths(m, e, Strategy::units(AdaptedProcess::constant(5.0)), 1.0), AdmissibilityError);
}

TEST_CASE("trivial density stays at y") {
  const auto m = MarketModel::constant(0.05, 0.2);
  const auto e = simulate_drivers(m, TimeGrid(1.0, 10), 20, 1);
  ScenarioControl c;
  c.y = 3.0;
  const auto g = density_paths(e, c);
  CHECK((g.array() == 3.0).all());
}

TEST_CASE("the unique no-jump density matches its closed form pathwise") {
  const auto m = MarketModel::constant(0.05, 0.2);
  const TimeGrid grid(1.0, 40);
  const auto e = simulate_drivers(m, grid, 200, 8);
  ScenarioControl c;
  c.theta0 = AdaptedProcess::constant(-0.25);
  const auto g = density_paths(e, c);
  const auto b = e.brownian_path();
  double worst = 0.0;
  for (int i = 0; i <= 40; ++i) {
    const Eigen::ArrayXd closed = (-0.25 * b.col(i).array() - 0.5 * 0.0625 * grid.time(i)).exp();
    worst = std::max(worst, (g.col(i).array() - closed).abs().maxCoeff());
  }
  CHECK(worst < 1e-13);
}

TEST_CASE("the density is a martingale") {
  const auto m = MarketModel::constant(0.1, 0.2, {{0.1, 1.0}});
  const auto e = simulate_drivers(m, TimeGrid(1.0, 20), 100000, 6);
  ScenarioControl c;
  c.theta0 = AdaptedProcess::constant(-0.25);
  c.theta1 = {AdaptedProcess::constant(-0.5)};
  const auto g = density_paths(e, c);
  for (int i : {5, 10, 20}) {
    const auto st = oracle::mean_se(g.col(i));
    CHECK(std::abs(st.mean - 1.0) < 3.0 * st.se);
  }
}

TEST_CASE("density rejects theta1 at or below -1") {
  const auto m = MarketModel::constant(0.1, 0.2, {{0.1, 1.0}});
  const auto e = simulate_drivers(m, TimeGrid(1.0, 5), 4, 1);
  ScenarioControl c;
  c.theta1 = {AdaptedProcess::constant(-1.0)};
  CHECK_THROWS_AS(density_paths(e, c), InvalidInput);
}

TEST_CASE("elmm residual examples") {
  const auto m = MarketModel::constant(0.05, 0.2);
  CHECK(std::abs(elmm_residual(m, -0.25, {}, 0.0, 0.0)) < 1e-15);
  CHECK(std::abs(elmm_residual(m, -0.25, {}, 0.0, 0.3)) < 1e-15);
  const auto j = MarketModel::constant(0.1, 0.2, {{0.1, 1.0}});
  const std::vector<double> th1{-0.5};
  CHECK(std::abs(elmm_residual(j, -0.25, th1, 0.0, 0.0)) < 1e-15);
  CHECK(elmm_residual(m, 0.0, {}, 0.0, 0.0) == doctest::Approx(0.05));
}

TEST_CASE("perturbed model drift") {
  const auto m = MarketModel::constant(0.05, 0.2);
  CHECK(perturbed_model(m, Perturbation::constant(0.0)).b(0.3) == 0.05);
  CHECK(std::abs(perturbed_model(m, Perturbation::constant(-0.25)).b(0.3)) < 1e-15);
  CHECK(perturbed_model(m, Perturbation::constant(-0.125)).b(0.3) == doctest::Approx(0.025));
  CHECK(perturbed_model(m, Perturbation::constant(-0.125)).sigma(0.3) == 0.2);
}
