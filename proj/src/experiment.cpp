#include "dualctl/experiment.hpp"

#include "dualctl/bridge.hpp"
#include "dualctl/dual.hpp"
#include "dualctl/primal.hpp"
#include "dualctl/robust.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

namespace dualctl {

namespace fs = std::filesystem;
using nlohmann::json;

GridSpec GridSpec::range(double lo, double hi, double step) {
  if (!(step > 0.0) || !std::isfinite(lo) || !std::isfinite(hi) || hi < lo)
    throw InvalidInput("grid: need lo <= hi and step > 0");
  GridSpec g;
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  if (n > 1000000) throw InvalidInput("grid: too many points");
  for (long i = 0; i <= n; ++i) g.points.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
  return g;
}

GridSpec GridSpec::parse(const std::string& text, const std::string& field) {
  try {
    if (text.find(':') != std::string::npos) {
      std::vector<double> v;
      std::stringstream ss(text);
      std::string part;
      while (std::getline(ss, part, ':')) v.push_back(std::stod(part));
      if (v.size() != 3) throw ConfigError(field, "expected lo:hi:step");
      return range(v[0], v[1], v[2]);
    }
    GridSpec g;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) g.points.push_back(std::stod(part));
    if (g.points.empty()) throw ConfigError(field, "empty grid");
    return g;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(field, std::string("cannot parse grid '") + text + "': " + e.what());
  }
}

UtilityPair ExperimentConfig::utility() const {
  return utility_name == "log" ? make_log_utility() : make_power_utility(alpha);
}

Penalty ExperimentConfig::penalty() const { return make_quadratic_penalty(penalty_scale); }

std::string config_hash(const json& document) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : document.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

namespace {

// ---- schema helpers ----

std::string join(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

void only_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "must be an object");
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) throw ConfigError(join(path, k), "unknown key");
}

const json* find(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double number(const json& obj, const std::string& key, const std::string& path, std::optional<double> fallback) {
  const json* v = find(obj, key);
  if (!v) {
    if (fallback) return *fallback;
    throw ConfigError(join(path, key), "missing required field");
  }
  if (!v->is_number()) throw ConfigError(join(path, key), "must be a number");
  const double d = v->get<double>();
  if (!std::isfinite(d)) throw ConfigError(join(path, key), "must be finite");
  return d;
}

long integer(const json& obj, const std::string& key, const std::string& path, std::optional<long> fallback,
             long min_value) {
  const json* v = find(obj, key);
  if (!v) {
    if (fallback) return *fallback;
    throw ConfigError(join(path, key), "missing required field");
  }
  if (!v->is_number_integer()) throw ConfigError(join(path, key), "must be an integer");
  const long n = v->get<long>();
  if (n < min_value) throw ConfigError(join(path, key), "must be at least " + std::to_string(min_value));
  return n;
}

// Number, or {"piecewise": [[t0, v0], [t1, v1], ...]} holding v_j on [t_j, t_{j+1}).
TimeFunction time_function(const json& obj, const std::string& key, const std::string& path) {
  const std::string field = join(path, key);
  const json* v = find(obj, key);
  if (!v) throw ConfigError(field, "missing required field");
  if (v->is_number()) {
    const double c = v->get<double>();
    if (!std::isfinite(c)) throw ConfigError(field, "must be finite");
    return [c](double) { return c; };
  }
  if (!v->is_object()) throw ConfigError(field, "must be a number or {\"piecewise\": [[t, value], ...]}");
  only_keys(*v, {"piecewise"}, field);
  const json* pw = find(*v, "piecewise");
  if (!pw || !pw->is_array() || pw->empty()) throw ConfigError(join(field, "piecewise"), "must be a non-empty array");
  std::vector<std::pair<double, double>> knots;
  for (const auto& e : *pw) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
      throw ConfigError(join(field, "piecewise"), "entries must be [time, value] pairs");
    knots.emplace_back(e[0].get<double>(), e[1].get<double>());
  }
  if (knots.front().first != 0.0) throw ConfigError(join(field, "piecewise"), "first knot must be at t = 0");
  for (std::size_t i = 1; i < knots.size(); ++i)
    if (!(knots[i].first > knots[i - 1].first)) throw ConfigError(join(field, "piecewise"), "knot times must increase");
  return [knots](double t) {
    double v = knots.front().second;
    for (const auto& [tk, vk] : knots)
      if (t >= tk) v = vk;
    return v;
  };
}

GridSpec grid_value(const json& obj, const std::string& key, const std::string& path, GridSpec fallback) {
  const std::string field = join(path, key);
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (v->is_string()) return GridSpec::parse(v->get<std::string>(), field);
  if (v->is_array()) {
    GridSpec g;
    for (const auto& e : *v) {
      if (!e.is_number()) throw ConfigError(field, "grid entries must be numbers");
      g.points.push_back(e.get<double>());
    }
    if (g.points.empty()) throw ConfigError(field, "empty grid");
    return g;
  }
  if (v->is_object()) {
    only_keys(*v, {"min", "max", "step"}, field);
    try {
      return GridSpec::range(number(*v, "min", field, {}), number(*v, "max", field, {}), number(*v, "step", field, {}));
    } catch (const ConfigError&) {
      throw;
    } catch (const InvalidInput& e) {
      throw ConfigError(field, e.what());
    }
  }
  throw ConfigError(field, "must be \"lo:hi:step\", an array, or {min, max, step}");
}

}  // namespace

ExperimentConfig load_config(json doc, const Overrides& ov) {
  if (!doc.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
  auto sub = [&](const char* key) -> json& {
    if (!doc.contains(key)) doc[key] = json::object();
    return doc[key];
  };
  if (ov.seed) sub("mc")["seed"] = *ov.seed;
  if (ov.paths) sub("mc")["paths"] = *ov.paths;
  if (ov.steps) sub("grid")["steps"] = *ov.steps;
  if (ov.mode) doc["mode"] = *ov.mode;
  if (ov.y) doc["y"] = *ov.y;
  if (ov.grid_min) sub("primal")["grid_min"] = *ov.grid_min;
  if (ov.grid_max) sub("primal")["grid_max"] = *ov.grid_max;
  if (ov.grid_step) sub("primal")["grid_step"] = *ov.grid_step;
  if (ov.phi_grid) sub("robust")["phi_grid"] = *ov.phi_grid;
  if (ov.mu_grid) sub("robust")["mu_grid"] = *ov.mu_grid;
  if (ov.penalty_scale) sub("penalty")["scale"] = *ov.penalty_scale;

  only_keys(doc, {"name", "drift", "vol", "jumps", "horizon", "s0", "grid", "mc", "utility", "penalty", "x0", "y",
                  "mode", "basis", "primal", "dual", "robust", "bridge", "convergence", "simulate"},
            "");
  ExperimentConfig c;
  if (const json* n = find(doc, "name")) {
    if (!n->is_string()) throw ConfigError("name", "must be a string");
    c.name = n->get<std::string>();
  }
  c.model.drift = time_function(doc, "drift", "");
  c.model.volatility = time_function(doc, "vol", "");
  c.model.horizon = number(doc, "horizon", "", {});
  if (!(c.model.horizon > 0.0)) throw ConfigError("horizon", "must be positive");
  c.model.s0 = number(doc, "s0", "", 1.0);
  if (!(c.model.s0 > 0.0)) throw ConfigError("s0", "must be positive");
  if (const json* j = find(doc, "jumps")) {
    if (!j->is_array()) throw ConfigError("jumps", "must be an array of {mark, intensity}");
    for (std::size_t i = 0; i < j->size(); ++i) {
      const std::string path = "jumps[" + std::to_string(i) + "]";
      only_keys((*j)[i], {"mark", "intensity"}, path);
      JumpMark mk{number((*j)[i], "mark", path, {}), number((*j)[i], "intensity", path, {})};
      if (!(mk.mark > -1.0)) throw ConfigError(path + ".mark", "jump size must exceed -1");
      if (mk.intensity < 0.0) throw ConfigError(path + ".intensity", "must be non-negative");
      c.model.marks.push_back(mk);
    }
  }

  const json* grid = find(doc, "grid");
  if (!grid) throw ConfigError("grid.steps", "missing required field");
  only_keys(*grid, {"steps"}, "grid");
  c.steps = static_cast<int>(integer(*grid, "steps", "grid", {}, 1));

  const json* mc = find(doc, "mc");
  if (!mc) throw ConfigError("mc.seed", "missing required field");
  only_keys(*mc, {"paths", "seed", "antithetic"}, "mc");
  c.paths = integer(*mc, "paths", "mc", {}, 1);
  c.seed = static_cast<std::uint64_t>(integer(*mc, "seed", "mc", {}, 0));
  if (const json* a = find(*mc, "antithetic")) {
    if (!a->is_boolean()) throw ConfigError("mc.antithetic", "must be a boolean");
    c.antithetic = a->get<bool>();
  }

  if (const json* u = find(doc, "utility")) {
    only_keys(*u, {"name", "alpha"}, "utility");
    const json* n = find(*u, "name");
    if (!n || !n->is_string()) throw ConfigError("utility.name", "must be \"log\" or \"power\"");
    c.utility_name = n->get<std::string>();
    if (c.utility_name != "log" && c.utility_name != "power") throw ConfigError("utility.name", "must be \"log\" or \"power\"");
    if (c.utility_name == "power") {
      c.alpha = number(*u, "alpha", "utility", {});
      if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("utility.alpha", "must lie in (0, 1)");
    } else if (find(*u, "alpha")) {
      throw ConfigError("utility.alpha", "only valid for power utility");
    }
  }
  if (const json* p = find(doc, "penalty")) {
    only_keys(*p, {"name", "scale"}, "penalty");
    if (const json* n = find(*p, "name"); n && (!n->is_string() || n->get<std::string>() != "quadratic"))
      throw ConfigError("penalty.name", "only \"quadratic\" is supported");
    c.penalty_scale = number(*p, "scale", "penalty", 1.0);
    if (!(c.penalty_scale > 0.0)) throw ConfigError("penalty.scale", "must be positive");
  }
  c.x0 = number(doc, "x0", "", 1.0);
  if (!(c.x0 > 0.0)) throw ConfigError("x0", "must be positive");
  c.y = number(doc, "y", "", 1.0);
  if (!(c.y > 0.0)) throw ConfigError("y", "must be positive");
  if (const json* m = find(doc, "mode")) {
    if (!m->is_string() || (*m != "analytic" && *m != "regression"))
      throw ConfigError("mode", "must be \"analytic\" or \"regression\"");
    c.mode = *m == "analytic" ? AdjointMode::Analytic : AdjointMode::Regression;
  }
  if (const json* b = find(doc, "basis")) {
    only_keys(*b, {"degree"}, "basis");
    c.degree = static_cast<int>(integer(*b, "degree", "basis", 2, 0));
  }

  json empty = json::object();
  const json* pr = find(doc, "primal");
  if (!pr) pr = &empty;
  only_keys(*pr, {"grid_min", "grid_max", "grid_step"}, "primal");
  try {
    c.pi_grid = GridSpec::range(number(*pr, "grid_min", "primal", 0.0), number(*pr, "grid_max", "primal", 2.5),
                                number(*pr, "grid_step", "primal", 0.05));
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidInput& e) {
    throw ConfigError("primal.grid_step", e.what());
  }

  const json* du = find(doc, "dual");
  if (!du) du = &empty;
  only_keys(*du, {"theta1_grid", "refine"}, "dual");
  c.theta1_grid = grid_value(*du, "theta1_grid", "dual", GridSpec::range(-0.5, 0.5, 0.05));
  for (double v : c.theta1_grid.points)
    if (!(v > -1.0)) throw ConfigError("dual.theta1_grid", "values must exceed -1");
  if (const json* r = find(*du, "refine")) {
    if (!r->is_boolean()) throw ConfigError("dual.refine", "must be a boolean");
    c.refine = r->get<bool>();
  }

  const json* ro = find(doc, "robust");
  if (!ro) ro = &empty;
  only_keys(*ro, {"phi_grid", "mu_grid"}, "robust");
  c.phi_grid = grid_value(*ro, "phi_grid", "robust", GridSpec::range(0.0, 1.25, 0.0625));
  c.mu_grid = grid_value(*ro, "mu_grid", "robust", GridSpec::range(-0.25, 0.25, 0.025));

  if (const json* br = find(doc, "bridge")) {
    only_keys(*br, {"scenario"}, "bridge");
    const json* s = find(*br, "scenario");
    if (!s || !s->is_string() || (*s != "standard" && *s != "robust" && *s != "both"))
      throw ConfigError("bridge.scenario", "must be \"standard\", \"robust\" or \"both\"");
    c.bridge_scenario = s->get<std::string>();
  }

  c.ladder_paths = {10000, 25000, 50000};
  c.ladder_steps = {25, 50, 100, 200};
  if (const json* cv = find(doc, "convergence")) {
    only_keys(*cv, {"paths", "steps"}, "convergence");
    auto ladder = [&](const char* key, auto& out) {
      if (const json* l = find(*cv, key)) {
        if (!l->is_array() || l->empty()) throw ConfigError(std::string("convergence.") + key, "must be a non-empty array");
        out.clear();
        for (const auto& e : *l) {
          if (!e.is_number_integer() || e.get<long>() < 1)
            throw ConfigError(std::string("convergence.") + key, "entries must be positive integers");
          out.push_back(static_cast<typename std::decay_t<decltype(out)>::value_type>(e.get<long>()));
        }
      }
    };
    ladder("paths", c.ladder_paths);
    ladder("steps", c.ladder_steps);
  }
  if (const json* sm = find(doc, "simulate")) {
    only_keys(*sm, {"export_paths"}, "simulate");
    c.export_paths = integer(*sm, "export_paths", "simulate", 100, 0);
  }

  try {
    validate_model(c.model, c.grid());
  } catch (const InvalidInput& e) {
    throw ConfigError("vol", e.what());
  }
  c.effective = doc;
  c.hash = config_hash(doc);
  return c;
}

ExperimentConfig load_config_file(const fs::path& path, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  return load_config(std::move(doc), overrides);
}

namespace {

// ---- output helpers ----

class CsvWriter {
 public:
  CsvWriter(const fs::path& p, const std::string& hash, const std::string& header) : out_(p) {
    if (!out_) throw std::runtime_error("cannot write " + p.string());
    out_ << "# config_hash=" << hash << "\n" << header << "\n";
    out_ << std::setprecision(17);
  }
  template <class... T>
  void row(const T&... v) {
    bool first = true;
    ((out_ << (first ? "" : ",") << v, first = false), ...);
    out_ << "\n";
  }
  std::ofstream& stream() { return out_; }

 private:
  std::ofstream out_;
};

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << j.dump(2) << "\n";
}

json foc_json(const FocResidual& f) {
  return {{"name", f.name}, {"normalized", f.normalized}, {"mean_abs", f.mean_abs}, {"scale", f.scale}};
}

json diag_summary(const AdjointTriple& a) {
  json j = {{"mode", to_string(a.mode)}};
  if (a.mode == AdjointMode::Regression) {
    j["regression_tolerance"] = a.diagnostics.regression_tolerance;
    j["warnings"] = a.diagnostics.warnings;
    double worst_cond = 0.0;
    int min_degree = 1 << 20;
    for (const auto& s : a.diagnostics.steps) {
      worst_cond = std::max(worst_cond, s.condition_number);
      min_degree = std::min(min_degree, s.degree_used);
    }
    j["max_condition_number"] = worst_cond;
    j["min_degree_used"] = a.diagnostics.steps.empty() ? 0 : min_degree;
  }
  return j;
}

PathEnsemble ensemble_for(const ExperimentConfig& c, long paths, int steps) {
  return simulate_drivers(c.model, TimeGrid(c.model.horizon, steps), paths, c.seed, {c.antithetic});
}

std::vector<std::vector<double>> theta1_grids(const ExperimentConfig& c) {
  return std::vector<std::vector<double>>(c.model.n_marks(), c.theta1_grid.points);
}

bool log_no_jumps(const ExperimentConfig& c) { return c.utility_name == "log" && !c.model.has_jumps(); }

bool sigma_vanishes(const ExperimentConfig& c) {
  const auto g = c.grid();
  for (int i = 0; i <= g.n_steps(); ++i)
    if (std::abs(c.model.sigma(g.time(i))) < kSigmaZero) return true;
  return false;
}

// ---- subcommands ----

json run_simulate(const ExperimentConfig& c, const fs::path& out, std::vector<std::string>& files) {
  const auto ens = ensemble_for(c, c.paths, c.steps);
  const Channel s = price_paths(c.model, ens);
  const Channel b = ens.brownian_path();
  const int n = c.steps;
  const auto st = sample_stats(s.col(n) / c.model.s0);
  json marks = json::array();
  for (std::size_t k = 0; k < ens.n_marks(); ++k) {
    const double mean = ens.jump_counts(k).cast<double>().mean();
    marks.push_back({{"mark", c.model.marks[k].mark},
                     {"intensity", c.model.marks[k].intensity},
                     {"mean_jumps_per_step", mean},
                     {"expected_per_step", c.model.marks[k].intensity * ens.grid().dt()}});
  }
  {
    std::string header = "path,step,t,S,B";
    for (std::size_t k = 0; k < ens.n_marks(); ++k) header += ",N" + std::to_string(k);
    CsvWriter csv(out / "paths.csv", c.hash, header);
    const long rows = std::min<long>(c.export_paths, static_cast<long>(ens.n_paths()));
    for (long p = 0; p < rows; ++p) {
      std::vector<int> cum(ens.n_marks(), 0);
      for (int i = 0; i <= n; ++i) {
        auto& o = csv.stream();
        o << p << "," << i << "," << ens.grid().time(i) << "," << s(p, i) << "," << b(p, i);
        for (std::size_t k = 0; k < ens.n_marks(); ++k) {
          if (i > 0) cum[k] += ens.jumps(p, i - 1, k);
          o << "," << cum[k];
        }
        o << "\n";
      }
    }
    files.push_back("paths.csv");
  }
  return {{"paths", c.paths},
          {"steps", n},
          {"terminal_price_ratio", {{"mean", st.mean}, {"se", st.se}}},
          {"min_price", s.minCoeff()},
          {"marks", marks}};
}

json run_primal(const ExperimentConfig& c, const fs::path& out, std::vector<std::string>& files) {
  const auto ens = ensemble_for(c, c.paths, c.steps);
  const auto u = c.utility();
  PrimalOptions po;
  po.mode = c.mode;
  po.basis.degree = c.degree;
  const auto sol = solve_primal_search(c.model, u, c.x0, c.pi_grid.points, ens, po);
  {
    CsvWriter csv(out / "candidates.csv", c.hash, "pi,value,se,admissible");
    for (const auto& cd : sol.candidates) csv.row(cd.pi, cd.value, cd.se, cd.admissible ? 1 : 0);
    files.push_back("candidates.csv");
  }
  const auto foc = primal_foc_residual(c.model, sol);
  const auto ham = hamiltonian_derivative_check(c.model, u, sol, [](double) { return 1.0; }, ens);
  json j = {{"pi", sol.pi},
            {"x", sol.x},
            {"value", sol.value},
            {"se", sol.se},
            {"foc", foc_json(foc)},
            {"hamiltonian_derivative", {{"direction", "constant 1"}, {"derivative", ham.derivative}, {"se", ham.se}}},
            {"adjoints", diag_summary(sol.adjoints)},
            {"excluded", json::array()}};
  for (const auto& cd : sol.candidates)
    if (!cd.admissible) j["excluded"].push_back({{"pi", cd.pi}, {"reason", cd.reason}});
  if (log_no_jumps(c) && !sigma_vanishes(c)) {
    const auto m = merton_log_closed_form(c.model);
    j["closed_form_pi_t0"] = m.values(0, 0, 0.0);
  }
  return j;
}

json run_dual(const ExperimentConfig& c, const fs::path& out, std::vector<std::string>& files) {
  const auto ens = ensemble_for(c, c.paths, c.steps);
  const auto u = c.utility();
  DualOptions o;
  o.mode = c.mode;
  o.basis.degree = c.degree;
  o.refine = c.refine;
  const auto sol = solve_dual_search(c.model, u, c.y, theta1_grids(c), ens, o);
  {
    std::string header;
    for (std::size_t k = 0; k < c.model.n_marks(); ++k) header += "theta1_" + std::to_string(k) + ",";
    CsvWriter csv(out / "candidates.csv", c.hash, header + "value,se,admissible");
    for (const auto& cd : sol.candidates) {
      auto& s = csv.stream();
      for (double v : cd.theta1) s << v << ",";
      s << cd.value << "," << cd.se << "," << (cd.admissible ? 1 : 0) << "\n";
    }
    files.push_back("candidates.csv");
  }
  json focs = json::array();
  for (const auto& f : dual_foc_residual(c.model, sol)) focs.push_back(foc_json(f));
  json rep;
  try {
    const auto rp = replicating_portfolio(c.model, sol);
    const Eigen::VectorXd claim =
        sol.density.col(c.steps).unaryExpr([&](double g) { return u.inverse_marginal(g); });
    const auto r = replication_check(c.model, rp.strategy, rp.x, claim, ens);
    rep = {{"x", rp.x},
           {"sigma_branch_steps", rp.sigma_steps},
           {"jump_branch_steps", rp.jump_steps},
           {"idle_steps", rp.idle_steps},
           {"relative_rmse", r.relative_rmse},
           {"max_relative_error", r.max_relative_error},
           {"rmse", r.rmse}};
  } catch (const std::exception& e) {
    rep = {{"error", e.what()}};
  }
  const double t0 = 0.0;
  return {{"theta1", sol.theta1},
          {"theta0_t0", sol.control.theta0(0, 0, t0)},
          {"y", sol.y},
          {"objective", sol.value},
          {"dual_value", -sol.value},
          {"se", sol.se},
          {"elmm_residual", max_elmm_residual(c.model, ens.grid(), sol.control)},
          {"p2_0", sol.adjoints.p(0, 0)},
          {"foc", focs},
          {"adjoints", diag_summary(sol.adjoints)},
          {"replication", rep}};
}

json run_robust(const ExperimentConfig& c, const fs::path& out, std::vector<std::string>& files) {
  const auto ens = ensemble_for(c, c.paths, c.steps);
  const auto u = c.utility();
  const auto pen = c.penalty();
  RobustOptions ro;
  ro.mode = c.mode == AdjointMode::Analytic ? AdjointMode::Analytic : AdjointMode::Regression;
  ro.basis.degree = c.degree;
  const auto sol = solve_robust_saddle(c.model, u, pen, c.x0, c.phi_grid.points, c.mu_grid.points, ens, ro);
  {
    std::string header = "pi";
    for (double m : c.mu_grid.points) {
      std::ostringstream os;
      os << std::setprecision(17) << ",mu=" << m;
      header += os.str();
    }
    CsvWriter csv(out / "payoff.csv", c.hash, header);
    for (Eigen::Index i = 0; i < sol.payoff.rows(); ++i) {
      auto& s = csv.stream();
      s << c.phi_grid.points[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < sol.payoff.cols(); ++j) s << "," << sol.payoff(i, j);
      s << "\n";
    }
    files.push_back("payoff.csv");
  }
  json focs = json::array();
  for (const auto& f : robust_primal_foc_residuals(c.model, sol)) focs.push_back(foc_json(f));
  json j = {{"pi", sol.pi},
            {"mu", sol.mu},
            {"value", sol.value},
            {"se", sol.se},
            {"pure_saddle", sol.pure_saddle},
            {"minimax", sol.minimax},
            {"maximin", sol.maximin},
            {"gap", sol.gap},
            {"foc", focs},
            {"adjoints", diag_summary(sol.primal.adjoints)}};

  DualOptions o;
  o.mode = c.mode;
  o.basis.degree = c.degree;
  o.refine = c.refine;
  const auto rd = solve_robust_dual_search(c.model, u, pen, c.y, theta1_grids(c), c.mu_grid.points, ens, o);
  json dfoc = json::array();
  for (const auto& f : robust_dual_foc_residuals(c.model, rd)) dfoc.push_back(foc_json(f));
  j["dual"] = {{"mu", rd.mu},
               {"theta1", rd.dual.theta1},
               {"value", rd.value},
               {"se", rd.se},
               {"elmm_residual", max_elmm_residual(c.model, ens.grid(), rd.dual.control)},
               {"foc", dfoc}};

  if (log_no_jumps(c) && pen.scale() == 1.0 && !sigma_vanishes(c)) {
    const auto cf = robust_log_closed_form(c.model, u, pen);
    const double pi_r = cf.fraction.values(0, 0, 0.0);
    const double pi_m = merton_log_closed_form(c.model).values(0, 0, 0.0);
    j["closed_form"] = {{"mu", cf.mu(0.0)}, {"pi", pi_r}, {"merton_pi", pi_m}, {"ratio", pi_r / pi_m}};
  }
  return j;
}

json run_bridge(const ExperimentConfig& c) {
  const auto ens = ensemble_for(c, c.paths, c.steps);
  const auto u = c.utility();
  json j = {{"mode", to_string(c.mode)}, {"reports", json::array()}};
  PrimalOptions po;
  po.mode = c.mode;
  po.basis.degree = c.degree;
  DualOptions o;
  o.mode = c.mode;
  o.basis.degree = c.degree;
  o.refine = c.refine;

  auto round_trip = [&](const PrimalSolution& primal, const PrimalToDual& p2d) {
    const auto dual = evaluate_dual(c.model, u, p2d.control, ens, o);
    const auto back = dual_to_primal(c.model, u, dual, ens);
    double worst = 0.0;
    for (int i = 0; i < c.steps; ++i) {
      const double pi = fraction_at(primal.strategy, i, ens.grid().time(i));
      worst = std::max(worst, (back.fraction.col(i).array() - pi).abs().maxCoeff());
    }
    return worst;
  };

  if (c.bridge_scenario != "robust") {
    const PrimalSolution primal =
        log_no_jumps(c) && !sigma_vanishes(c)
            ? evaluate_primal(c.model, u, c.x0, merton_log_closed_form(c.model), ens, po)
            : solve_primal_search(c.model, u, c.x0, c.pi_grid.points, ens, po);
    const auto p2d = primal_to_dual(c.model, u, primal, ens);
    j["reports"].push_back(to_json(p2d.report));
    const auto dual = solve_dual_search(c.model, u, c.y, theta1_grids(c), ens, o);
    const auto d2p = dual_to_primal(c.model, u, dual, ens);
    j["reports"].push_back(to_json(d2p.report));
    j["round_trip_fraction_error"] = round_trip(primal, p2d);
  }
  if (c.bridge_scenario != "standard") {
    const auto pen = c.penalty();
    RobustOptions ro;
    ro.mode = c.mode;
    ro.basis.degree = c.degree;
    RobustPrimalSolution rp;
    if (log_no_jumps(c) && pen.scale() == 1.0 && !sigma_vanishes(c)) {
      const auto cf = robust_log_closed_form(c.model, u, pen);
      rp = evaluate_robust_primal(c.model, u, pen, c.x0, cf.fraction, cf.mu(0.0), ens, ro);
    } else {
      rp = solve_robust_saddle(c.model, u, pen, c.x0, c.phi_grid.points, c.mu_grid.points, ens, ro);
    }
    const auto p2d = robust_primal_to_dual(c.model, u, rp, ens);
    j["reports"].push_back(to_json(p2d.report));
    const auto rd = evaluate_robust_dual(c.model, u, pen, p2d.control, ens, o);
    const auto d2p = robust_dual_to_primal(c.model, u, rd, ens);
    j["reports"].push_back(to_json(d2p.report));
    double worst = 0.0;
    for (int i = 0; i < c.steps; ++i) {
      const double pi = fraction_at(rp.primal.strategy, i, ens.grid().time(i));
      worst = std::max(worst, (d2p.fraction.col(i).array() - pi).abs().maxCoeff());
    }
    j["robust_round_trip_fraction_error"] = worst;
    j["robust_round_trip_mu_error"] = std::abs(rd.mu - rp.mu);
  }
  bool ok = true;
  for (const auto& r : j["reports"]) ok = ok && r["passed"].get<bool>();
  j["passed"] = ok;
  return j;
}

}  // namespace

ConvergenceResult convergence_study(const ExperimentConfig& c) {
  ConvergenceResult res;
  const auto u = c.utility();

  // Dual adjoint benchmark: regression p2(0) against the closed form, across paths.
  std::vector<double> errs;
  for (long paths : c.ladder_paths) {
    const auto ens = ensemble_for(c, paths, c.steps);
    const auto ctrl = constrained_scenario(c.model, std::vector<double>(c.model.n_marks(), 0.0), c.y);
    DualOptions reg;
    reg.basis.degree = c.degree;
    const auto s = evaluate_dual(c.model, u, ctrl, ens, reg);
    const auto exact = analytic_dual_adjoints(c.model, u, ens, ctrl, s.density);
    const double e = std::abs(s.adjoints.p(0, 0) - exact.p(0, 0)) / std::abs(exact.p(0, 0));
    errs.push_back(e);
    res.rows.push_back({"bsde_p0_relative_error", paths, c.steps, e});
  }
  const double floor = *std::min_element(errs.begin(), errs.end());
  res.bsde_trend_ok = errs.back() <= 1.5 * std::max(floor, 1e-300) || errs.back() < 1e-6;

  // Product identity X G = x y at the log optimum, Euler versus exact updates, across steps.
  if (log_no_jumps(c) && !sigma_vanishes(c)) {
    std::vector<double> lx, ly;
    for (int steps : c.ladder_steps) {
      const auto ens = ensemble_for(c, c.paths, steps);
      const auto pi = merton_log_closed_form(c.model);
      const auto theta = unique_scenario_no_jumps(c.model, c.y);
      for (UpdateScheme scheme : {UpdateScheme::Euler, UpdateScheme::Exact}) {
        WealthOptions wo;
        wo.scheme = scheme;
        const auto x = wealth_paths(c.model, ens, pi, c.x0, wo);
        const auto g = density_paths(ens, theta, scheme);
        const auto dev = verify_product_identity(x, g, c.x0, c.y);
        const std::string tag = scheme == UpdateScheme::Euler ? "euler" : "exact";
        res.rows.push_back({"product_" + tag + "_max_abs", c.paths, steps, dev.max_abs});
        res.rows.push_back({"product_" + tag + "_mean_square", c.paths, steps, dev.mean_square});
        if (scheme == UpdateScheme::Euler) {
          lx.push_back(std::log(c.model.horizon / steps));
          ly.push_back(std::log(dev.mean_square));
        } else {
          res.exact_max = std::max(res.exact_max, dev.max_abs);
        }
      }
    }
    if (lx.size() >= 2) {
      const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
      const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
      double sxy = 0.0, sxx = 0.0;
      for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
      }
      res.euler_slope = sxy / sxx;
    }
  }
  return res;
}

nlohmann::json run_experiment(const std::string& subcommand, const ExperimentConfig& c, const fs::path& out) {
  fs::create_directories(out);
  std::vector<std::string> files;
  json result;
  std::string main_file = "solution.json";
  if (subcommand == "simulate") {
    result = run_simulate(c, out, files);
    main_file = "summary.json";
  } else if (subcommand == "primal") {
    result = run_primal(c, out, files);
  } else if (subcommand == "dual") {
    result = run_dual(c, out, files);
  } else if (subcommand == "robust") {
    result = run_robust(c, out, files);
  } else if (subcommand == "bridge-check") {
    result = run_bridge(c);
    main_file = "bridge.json";
  } else if (subcommand == "convergence") {
    const auto cr = convergence_study(c);
    {
      CsvWriter csv(out / "convergence.csv", c.hash, "study,paths,steps,value");
      for (const auto& r : cr.rows) csv.row(r.study, r.paths, r.steps, r.value);
      files.push_back("convergence.csv");
    }
    result = {{"euler_mean_square_slope", cr.euler_slope},
              {"exact_max_deviation", cr.exact_max},
              {"bsde_trend_ok", cr.bsde_trend_ok},
              {"rows", cr.rows.size()}};
    main_file = "convergence.json";
  } else {
    throw InvalidInput("unknown subcommand: " + subcommand);
  }
  json doc = {{"config_hash", c.hash}, {"subcommand", subcommand}, {"name", c.name}, {"result", result}};
  write_json(out / main_file, doc);
  files.push_back(main_file);
  json manifest = {{"config_hash", c.hash},
                   {"subcommand", subcommand},
                   {"seed", c.seed},
                   {"config", c.effective},
                   {"files", files},
                   {"versions",
                    {{"dualctl", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"compiler", __VERSION__}}}};
  write_json(out / "manifest.json", manifest);
  return doc;
}

}  // namespace dualctl
