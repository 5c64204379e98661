#pragma once

#include "dualctl/bsde.hpp"
#include "dualctl/errors.hpp"
#include "dualctl/market.hpp"
#include "dualctl/preferences.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dualctl {

inline constexpr const char* kVersion = "0.1.0";

// Invalid configuration; `field` is the dotted path of the offending key.
class ConfigError : public InvalidInput {
 public:
  ConfigError(std::string field, const std::string& message)
      : InvalidInput("config field '" + field + "': " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct GridSpec {
  std::vector<double> points;
  static GridSpec range(double lo, double hi, double step);  // lo, lo+step, ..., hi
  // "lo:hi:step" or "a,b,c".
  static GridSpec parse(const std::string& text, const std::string& field);
};

struct ExperimentConfig {
  nlohmann::json effective;  // validated document after command-line overrides
  std::string hash;          // FNV-1a of the canonical dump
  std::string name;
  MarketModel model;
  int steps = 100;
  long paths = 10000;
  std::uint64_t seed = 0;
  bool antithetic = true;
  std::string utility_name = "log";
  double alpha = 0.5;
  double penalty_scale = 1.0;
  double x0 = 1.0;
  double y = 1.0;
  AdjointMode mode = AdjointMode::Regression;
  int degree = 2;
  GridSpec pi_grid;
  GridSpec theta1_grid;
  bool refine = true;
  GridSpec phi_grid;
  GridSpec mu_grid;
  std::string bridge_scenario = "both";
  std::vector<long> ladder_paths;
  std::vector<int> ladder_steps;
  long export_paths = 100;

  UtilityPair utility() const;
  Penalty penalty() const;
  TimeGrid grid() const { return TimeGrid(model.horizon, steps); }
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<long> paths;
  std::optional<int> steps;
  std::optional<std::string> mode;
  std::optional<double> y;
  std::optional<double> grid_min, grid_max, grid_step;
  std::optional<std::string> phi_grid, mu_grid;
  std::optional<double> penalty_scale;
};

// Applies overrides to the raw document, then validates. Throws ConfigError.
ExperimentConfig load_config(nlohmann::json document, const Overrides& overrides = {});
ExperimentConfig load_config_file(const std::filesystem::path& path, const Overrides& overrides = {});

std::string config_hash(const nlohmann::json& document);

// Runs one subcommand, writes its files plus manifest.json into `out`, and returns the
// solution document. Subcommands: simulate, primal, dual, robust, bridge-check, convergence.
nlohmann::json run_experiment(const std::string& subcommand, const ExperimentConfig& config,
                              const std::filesystem::path& out);

struct ConvergenceRow {
  std::string study;
  long paths = 0;
  int steps = 0;
  double value = 0.0;
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  double euler_slope = 0.0;     // log-log slope of mean-square product deviation vs dt
  double exact_max = 0.0;       // worst exact-update product deviation
  bool bsde_trend_ok = false;   // errors non-increasing within a 1.5x noise factor
};

// Benchmarks across the path and step ladders of the config.
ConvergenceResult convergence_study(const ExperimentConfig& config);

}  // namespace dualctl
