#include "dualctl/experiment.hpp"
#include "dualctl/primal.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace dualctl;

namespace {

Overrides overrides_from(const py::dict& d) {
  Overrides o;
  for (auto [k, v] : d) {
    const auto key = k.cast<std::string>();
    if (key == "seed") o.seed = v.cast<std::uint64_t>();
    else if (key == "paths") o.paths = v.cast<long>();
    else if (key == "steps") o.steps = v.cast<int>();
    else if (key == "mode") o.mode = v.cast<std::string>();
    else if (key == "y") o.y = v.cast<double>();
    else if (key == "grid_min") o.grid_min = v.cast<double>();
    else if (key == "grid_max") o.grid_max = v.cast<double>();
    else if (key == "grid_step") o.grid_step = v.cast<double>();
    else if (key == "phi_grid") o.phi_grid = v.cast<std::string>();
    else if (key == "mu_grid") o.mu_grid = v.cast<std::string>();
    else if (key == "penalty_scale") o.penalty_scale = v.cast<double>();
    else throw ConfigError(key, "unknown override");
  }
  return o;
}

}  // namespace

PYBIND11_MODULE(_dualctl, m) {
  m.attr("__version__") = kVersion;

  // Translators run newest first, so the subclass is registered last.
  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::object err = py::reinterpret_borrow<py::object>(config_error.ptr())(e.what());
      err.attr("field") = e.field();
      PyErr_SetObject(config_error.ptr(), err.ptr());
    }
  });

  py::class_<ExperimentConfig>(m, "Config")
      .def_readonly("hash", &ExperimentConfig::hash)
      .def_readonly("name", &ExperimentConfig::name)
      .def_readonly("seed", &ExperimentConfig::seed)
      .def_readonly("paths", &ExperimentConfig::paths)
      .def_readonly("steps", &ExperimentConfig::steps)
      .def_property_readonly("effective_json", [](const ExperimentConfig& c) { return c.effective.dump(); });

  m.def(
      "load_config_json",
      [](const std::string& text, const py::dict& overrides) {
        nlohmann::json doc;
        try {
          doc = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
          throw ConfigError("<document>", e.what());
        }
        return load_config(std::move(doc), overrides_from(overrides));
      },
      py::arg("text"), py::arg("overrides") = py::dict());
  m.def(
      "load_config_file",
      [](const std::filesystem::path& path, const py::dict& overrides) {
        return load_config_file(path, overrides_from(overrides));
      },
      py::arg("path"), py::arg("overrides") = py::dict());

  m.def(
      "run_json",
      [](const std::string& subcommand, const ExperimentConfig& config, const std::filesystem::path& out) {
        py::gil_scoped_release release;
        return run_experiment(subcommand, config, out).dump();
      },
      py::arg("subcommand"), py::arg("config"), py::arg("out"));

  m.def(
      "certify",
      [](const std::string& name, double alpha) {
        const auto pair = name == "power" ? make_power_utility(alpha) : make_log_utility();
        const auto r = certify(pair);
        py::dict d;
        d["conjugacy_residual"] = r.conjugacy_residual;
        d["biconjugacy_residual"] = r.biconjugacy_residual;
        d["inversion_residual"] = r.inversion_residual;
        d["shape_ok"] = r.shape_ok;
        d["passed"] = r.passed;
        return d;
      },
      py::arg("utility") = "log", py::arg("alpha") = 0.5);

  m.def(
      "merton_fraction",
      [](double drift, double vol) { return merton_log_closed_form(MarketModel::constant(drift, vol)).values(0, 0, 0.0); },
      py::arg("drift"), py::arg("vol"));
}
