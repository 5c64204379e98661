#include "dualctl/bsde.hpp"

#include "dualctl/errors.hpp"
#include "dualctl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace dualctl {

const char* to_string(AdjointMode mode) { return mode == AdjointMode::Analytic ? "analytic" : "regression"; }

nlohmann::json to_json(const BsdeDiagnostics& d) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : d.steps) {
    steps.push_back({{"degree", s.degree_used},
                     {"states", s.states_used},
                     {"condition_number", s.condition_number},
                     {"residual_rms", s.residual_rms},
                     {"fit_standard_error", s.fit_standard_error}});
  }
  return {{"steps", steps}, {"regression_tolerance", d.regression_tolerance}, {"warnings", d.warnings}};
}

namespace {

// Standardized polynomial features of the state at one grid time.
class FeatureMap {
 public:
  FeatureMap(const StateChannels& states, int step, const std::vector<Eigen::Index>& rows, int degree) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    std::vector<int> candidates;
    for (std::size_t s = 0; s < states.size(); ++s) {
      double mean = 0.0;
      for (auto r : rows) mean += states[s](r, step);
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (auto r : rows) var += (states[s](r, step) - mean) * (states[s](r, step) - mean);
      const double sd = std::sqrt(var / static_cast<double>(n));
      if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
        candidates.push_back(static_cast<int>(s));
        means_.push_back(mean);
        scales_.push_back(sd);
      }
    }
    // Drop state variables that are affine functions of the others.
    if (candidates.size() > 1) {
      Eigen::MatrixXd z(n, static_cast<Eigen::Index>(candidates.size()));
      for (std::size_t c = 0; c < candidates.size(); ++c)
        for (Eigen::Index r = 0; r < n; ++r)
          z(r, static_cast<Eigen::Index>(c)) = (states[candidates[c]](rows[r], step) - means_[c]) / scales_[c];
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
      qr.setThreshold(1e-8);
      qr.compute(z);
      std::vector<int> keep;
      std::vector<double> m, sc;
      for (Eigen::Index j = 0; j < qr.rank(); ++j) {
        const auto c = static_cast<std::size_t>(qr.colsPermutation().indices()(j));
        keep.push_back(static_cast<int>(c));
      }
      std::sort(keep.begin(), keep.end());
      std::vector<int> kept_states;
      for (int c : keep) {
        kept_states.push_back(candidates[c]);
        m.push_back(means_[c]);
        sc.push_back(scales_[c]);
      }
      candidates = kept_states;
      means_ = m;
      scales_ = sc;
    }
    states_ = candidates;
    degree_ = states_.empty() ? 0 : degree;
    std::vector<int> e(states_.size(), 0);
    enumerate(e, 0, degree_);
  }

  int degree() const { return degree_; }
  int n_states() const { return static_cast<int>(states_.size()); }
  Eigen::Index size() const { return static_cast<Eigen::Index>(exponents_.size()); }

  Eigen::MatrixXd evaluate(const StateChannels& states, int step, const std::vector<Eigen::Index>& rows) const {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd phi(n, size());
    std::vector<double> z(states_.size());
    for (Eigen::Index r = 0; r < n; ++r) {
      for (std::size_t s = 0; s < states_.size(); ++s)
        z[s] = (states[states_[s]](rows[r], step) - means_[s]) / scales_[s];
      for (Eigen::Index j = 0; j < size(); ++j) {
        double v = 1.0;
        for (std::size_t s = 0; s < states_.size(); ++s)
          for (int k = 0; k < exponents_[j][s]; ++k) v *= z[s];
        phi(r, j) = v;
      }
    }
    return phi;
  }

 private:
  void enumerate(std::vector<int>& e, std::size_t pos, int remaining) {
    if (pos == e.size()) {
      exponents_.push_back(e);
      return;
    }
    for (int k = 0; k <= remaining; ++k) {
      e[pos] = k;
      enumerate(e, pos + 1, remaining - k);
    }
    e[pos] = 0;
  }

  std::vector<int> states_;
  std::vector<double> means_, scales_;
  std::vector<std::vector<int>> exponents_;
  int degree_ = 0;
};

std::vector<Eigen::Index> all_rows(Eigen::Index n) {
  std::vector<Eigen::Index> r(static_cast<std::size_t>(n));
  std::iota(r.begin(), r.end(), Eigen::Index{0});
  return r;
}

struct StepFit {
  Eigen::VectorXd mean;  // E[p_{i+1} | F_i]
  Eigen::VectorXd q;
  std::vector<Eigen::VectorXd> r;
  StepDiagnostics diag;
};

double condition_of(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) {
  const auto cols = qr.matrixQR().cols();
  Eigen::MatrixXd rr = qr.matrixQR().topLeftCorner(cols, cols).triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rr);
  const auto& sv = svd.singularValues();
  return sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
}

// Indices of a maximal linearly independent subset of columns, ascending.
std::vector<Eigen::Index> independent_columns(const Eigen::MatrixXd& phi) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
  qr.setThreshold(1e-10);
  qr.compute(phi);
  std::vector<Eigen::Index> keep(qr.colsPermutation().indices().data(),
                                 qr.colsPermutation().indices().data() + qr.rank());
  std::sort(keep.begin(), keep.end());
  return keep;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& keep) {
  if (static_cast<Eigen::Index>(keep.size()) == m.cols()) return m;
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(keep[j]);
  return out;
}

StepFit fit_step(const PathEnsemble& ens, const StateChannels& states, int step, const Eigen::VectorXd& target,
                 int max_degree, std::vector<std::string>& warnings) {
  const auto n = ens.n_paths();
  const auto rows = all_rows(n);
  const double dt = ens.grid().dt();
  const std::size_t K = ens.n_marks();

  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < K; ++k) {
    if (ens.intensity(k) <= 0.0) continue;
    if (ens.jump_counts(k).col(step).any()) {
      active.push_back(k);
    } else {
      warnings.push_back("step " + std::to_string(step) + ": no jumps of mark " + std::to_string(k) +
                         " observed, r set to 0");
    }
  }

  const double bscale = 1.0 / std::sqrt(dt);
  for (int degree = max_degree; degree >= 0; --degree) {
    const FeatureMap fm(states, step, rows, degree);
    const Eigen::MatrixXd full = fm.evaluate(states, step, rows);
    const auto keep = independent_columns(full);
    const auto dropped = static_cast<std::size_t>(full.cols()) - keep.size();
    const Eigen::MatrixXd phi = select_columns(full, keep);
    const Eigen::Index nb = phi.cols();
    // A jump block only varies across paths that jump in this step, where the states may
    // take few distinct values; its basis is pruned on those rows.
    std::vector<std::vector<Eigen::Index>> jump_keep(active.size());
    Eigen::Index cols = 2 * nb;
    for (std::size_t j = 0; j < active.size(); ++j) {
      const auto counts = ens.jump_counts(active[j]).col(step);
      std::vector<Eigen::Index> jumped;
      for (Eigen::Index r = 0; r < n; ++r)
        if (counts(r) != 0) jumped.push_back(r);
      Eigen::MatrixXd sub(static_cast<Eigen::Index>(jumped.size()), nb);
      for (std::size_t r = 0; r < jumped.size(); ++r) sub.row(static_cast<Eigen::Index>(r)) = phi.row(jumped[r]);
      jump_keep[j] = independent_columns(sub);
      cols += static_cast<Eigen::Index>(jump_keep[j].size());
    }
    Eigen::MatrixXd a(n, cols);
    a.leftCols(nb) = phi;
    a.middleCols(nb, nb) = phi.array().colwise() * (ens.brownian_increments().col(step).array() * bscale);
    std::vector<Eigen::Index> offset(active.size());
    Eigen::Index at = 2 * nb;
    for (std::size_t j = 0; j < active.size(); ++j) {
      const std::size_t k = active[j];
      const double js = 1.0 / std::sqrt(ens.intensity(k) * dt);
      Eigen::ArrayXd dn = ens.jump_counts(k).col(step).cast<double>().array() - ens.intensity(k) * dt;
      const Eigen::MatrixXd pk = select_columns(phi, jump_keep[j]);
      offset[j] = at;
      a.middleCols(at, pk.cols()) = pk.array().colwise() * (dn * js);
      at += pk.cols();
    }
    if (a.rows() < a.cols()) continue;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
    qr.setThreshold(1e-10);
    qr.compute(a);
    if (qr.rank() < a.cols()) {
      if (degree > 0) {
        warnings.push_back("step " + std::to_string(step) + ": rank-deficient basis, degree reduced to " +
                           std::to_string(degree - 1));
      }
      continue;
    }
    if (dropped > 0)
      warnings.push_back("step " + std::to_string(step) + ": dropped " + std::to_string(dropped) +
                         " dependent basis functions");
    const Eigen::VectorXd coef = qr.solve(target);
    StepFit fit;
    fit.mean = phi * coef.head(nb);
    fit.q = phi * coef.segment(nb, nb) * bscale;
    fit.r.assign(K, Eigen::VectorXd::Zero(n));
    for (std::size_t j = 0; j < active.size(); ++j) {
      const std::size_t k = active[j];
      const double js = 1.0 / std::sqrt(ens.intensity(k) * dt);
      const auto w = static_cast<Eigen::Index>(jump_keep[j].size());
      fit.r[k] = select_columns(phi, jump_keep[j]) * coef.segment(offset[j], w) * js;
    }
    const Eigen::VectorXd resid = target - a * coef;
    fit.diag.degree_used = fm.degree();
    fit.diag.states_used = fm.n_states();
    fit.diag.condition_number = condition_of(qr);
    fit.diag.residual_rms = std::sqrt(resid.squaredNorm() / static_cast<double>(n));
    fit.diag.fit_standard_error =
        fit.diag.residual_rms * std::sqrt(static_cast<double>(a.cols()) / static_cast<double>(n));
    return fit;
  }
  throw SolverError("bsde: regression design is rank deficient at step " + std::to_string(step) +
                    " even with a constant basis");
}

double coef_at(const TimeFunction& f, double t) { return f ? f(t) : 0.0; }

void check_inputs(const PathEnsemble& ens, const Eigen::VectorXd& terminal, const StateChannels& states) {
  if (terminal.size() != ens.n_paths()) throw InvalidInput("bsde: terminal has wrong length");
  if (!terminal.allFinite()) throw InvalidInput("bsde: terminal values must be finite");
  for (const auto& s : states)
    if (s.rows() != ens.n_paths() || s.cols() != ens.n_steps() + 1)
      throw InvalidInput("bsde: state channel shape mismatch");
}

}  // namespace

AdjointTriple martingale_representation(const PathEnsemble& ensemble, const Eigen::VectorXd& terminal,
                                        const StateChannels& states, RegressionBasis basis) {
  return solve_linear_bsde(ensemble, DriverSpec::zero(), terminal, states, basis);
}

AdjointTriple solve_linear_bsde(const PathEnsemble& ensemble, const DriverSpec& driver,
                                const Eigen::VectorXd& terminal, const StateChannels& states,
                                RegressionBasis basis) {
  check_inputs(ensemble, terminal, states);
  if (basis.degree < 0) throw InvalidInput("bsde: basis degree must be non-negative");
  const int n = ensemble.n_steps();
  const auto np = ensemble.n_paths();
  const std::size_t K = ensemble.n_marks();
  const double dt = ensemble.grid().dt();

  AdjointTriple out;
  out.mode = AdjointMode::Regression;
  out.p.resize(np, n + 1);
  out.q.resize(np, n);
  out.r.assign(K, Eigen::MatrixXd::Zero(np, n));
  out.diagnostics.steps.resize(static_cast<std::size_t>(n));
  out.p.col(n) = terminal;

  for (int i = n - 1; i >= 0; --i) {
    const double t = ensemble.grid().time(i);
    const Eigen::VectorXd target = out.p.col(i + 1);
    StepFit fit = fit_step(ensemble, states, i, target, basis.degree, out.diagnostics.warnings);

    const double implicit = 1.0 + coef_at(driver.p_coef, t) * dt;
    if (std::abs(implicit) < 1e-8) throw SolverError("bsde: near-singular implicit step at t=" + std::to_string(t));
    Eigen::VectorXd explicit_part = coef_at(driver.q_coef, t) * fit.q;
    explicit_part.array() += coef_at(driver.constant, t);
    for (std::size_t k = 0; k < K && k < driver.r_coef.size(); ++k)
      explicit_part += coef_at(driver.r_coef[k], t) * fit.r[k];

    out.p.col(i) = (fit.mean - explicit_part * dt) / implicit;
    out.q.col(i) = fit.q;
    for (std::size_t k = 0; k < K; ++k) out.r[k].col(i) = fit.r[k];
    out.diagnostics.steps[static_cast<std::size_t>(i)] = fit.diag;
  }
  double worst = 0.0;
  for (const auto& s : out.diagnostics.steps) worst = std::max(worst, s.fit_standard_error);
  out.diagnostics.regression_tolerance = 3.0 * worst;
  return out;
}

ResidualReport bsde_residual_report(const AdjointTriple& triple, const PathEnsemble& ensemble,
                                    const DriverSpec& driver, const StateChannels& states, RegressionBasis basis,
                                    std::uint64_t split_seed) {
  const int n = ensemble.n_steps();
  const auto np = ensemble.n_paths();
  const std::size_t K = ensemble.n_marks();
  const double dt = ensemble.grid().dt();
  if (triple.p.rows() != np || triple.p.cols() != n + 1 || triple.q.cols() != n)
    throw InvalidInput("bsde_residual_report: triple does not match ensemble");

  const CounterRng rng(split_seed);
  std::vector<Eigen::Index> train, test;
  for (Eigen::Index p = 0; p < np; ++p) ((rng.bits(static_cast<std::uint64_t>(p), 0, 0) & 1U) ? test : train).push_back(p);
  if (train.empty() || test.empty()) throw InvalidInput("bsde_residual_report: need at least two paths");

  ResidualReport rep;
  rep.steps.resize(static_cast<std::size_t>(n));
  std::vector<std::size_t> marks;
  for (std::size_t k = 0; k < K; ++k)
    if (ensemble.intensity(k) > 0.0) marks.push_back(k);

  for (int i = 0; i < n; ++i) {
    const double t = ensemble.grid().time(i);
    Eigen::VectorXd e(np);
    for (Eigen::Index p = 0; p < np; ++p) {
      double f = coef_at(driver.p_coef, t) * triple.p(p, i) + coef_at(driver.q_coef, t) * triple.q(p, i) +
                 coef_at(driver.constant, t);
      double mart = triple.q(p, i) * ensemble.dB(p, i);
      for (std::size_t k = 0; k < K; ++k) {
        if (k < driver.r_coef.size()) f += coef_at(driver.r_coef[k], t) * triple.r[k](p, i);
        mart += triple.r[k](p, i) * ensemble.compensated_jump(p, i, k);
      }
      e(p) = triple.p(p, i + 1) - triple.p(p, i) - f * dt - mart;
    }

    const Eigen::Index nresp = 2 + static_cast<Eigen::Index>(marks.size());
    auto responses = [&](const std::vector<Eigen::Index>& rows) {
      Eigen::MatrixXd y(static_cast<Eigen::Index>(rows.size()), nresp);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto p = rows[r];
        const auto rr = static_cast<Eigen::Index>(r);
        y(rr, 0) = e(p);
        y(rr, 1) = e(p) * ensemble.dB(p, i) / std::sqrt(dt);
        for (std::size_t j = 0; j < marks.size(); ++j) {
          const std::size_t k = marks[j];
          y(rr, 2 + static_cast<Eigen::Index>(j)) =
              e(p) * ensemble.compensated_jump(p, i, k) / std::sqrt(ensemble.intensity(k) * dt);
        }
      }
      return y;
    };
    const Eigen::MatrixXd y_train = responses(train);

    Eigen::MatrixXd pred;
    for (int degree = basis.degree; degree >= 0; --degree) {
      const FeatureMap fm(states, i, train, degree);
      const Eigen::MatrixXd full = fm.evaluate(states, i, train);
      const auto keep = independent_columns(full);
      const Eigen::MatrixXd phi = select_columns(full, keep);
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
      qr.setThreshold(1e-10);
      qr.compute(phi);
      if (qr.rank() < phi.cols() && degree > 0) continue;
      const Eigen::MatrixXd coef = qr.solve(y_train);
      pred = select_columns(fm.evaluate(states, i, test), keep) * coef;
      break;
    }
    auto rms = [&](Eigen::Index c) { return std::sqrt(pred.col(c).squaredNorm() / static_cast<double>(pred.rows())); };
    auto& s = rep.steps[static_cast<std::size_t>(i)];
    s.mean_residual = rms(0);
    s.brownian_residual = rms(1);
    for (std::size_t j = 0; j < marks.size(); ++j)
      s.jump_residual = std::max(s.jump_residual, rms(2 + static_cast<Eigen::Index>(j)));
    const double worst = std::max({s.mean_residual, s.brownian_residual, s.jump_residual});
    rep.max_residual = std::max(rep.max_residual, worst);
    rep.mean_residual += worst / n;
  }
  return rep;
}

}  // namespace dualctl
