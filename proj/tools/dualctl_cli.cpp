#include "dualctl/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct CommonFlags {
  std::string config;
  std::string out = "out";
  dualctl::Overrides overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON configuration file")->required();
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.overrides.seed, "master seed");
  cmd->add_option("--paths", f.overrides.paths, "Monte Carlo paths");
  cmd->add_option("--steps", f.overrides.steps, "time steps");
  cmd->add_option("--mode", f.overrides.mode, "adjoint mode")->check(CLI::IsMember({"analytic", "regression"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Primal/dual stochastic control experiments on Ito-Levy markets"};
  app.set_version_flag("--version", dualctl::kVersion);
  app.require_subcommand(1);

  CommonFlags flags;
  auto* simulate = app.add_subcommand("simulate", "simulate driver and price paths");
  auto* primal = app.add_subcommand("primal", "constant-fraction primal search");
  auto* dual = app.add_subcommand("dual", "dual scenario search and replication");
  auto* robust = app.add_subcommand("robust", "robust saddle search");
  auto* bridge = app.add_subcommand("bridge-check", "primal/dual bridge identities");
  auto* convergence = app.add_subcommand("convergence", "path and step convergence ladders");
  for (auto* cmd : {simulate, primal, dual, robust, bridge, convergence}) add_common(cmd, flags);

  primal->add_option("--grid-min", flags.overrides.grid_min, "smallest fraction");
  primal->add_option("--grid-max", flags.overrides.grid_max, "largest fraction");
  primal->add_option("--grid-step", flags.overrides.grid_step, "fraction step");
  dual->add_option("--y", flags.overrides.y, "initial density level");
  robust->add_option("--phi-grid", flags.overrides.phi_grid, "fraction grid, lo:hi:step or a,b,c");
  robust->add_option("--mu-grid", flags.overrides.mu_grid, "perturbation grid, lo:hi:step or a,b,c");
  robust->add_option("--penalty-scale", flags.overrides.penalty_scale, "quadratic penalty scale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    const auto config = dualctl::load_config_file(flags.config, flags.overrides);
    const auto doc = dualctl::run_experiment(sub, config, flags.out);
    std::cout << doc.dump(2) << "\n";
  } catch (const dualctl::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error (" << sub << "): " << e.what() << "\n";
    return 1;
  }
  return 0;
}
