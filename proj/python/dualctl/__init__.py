"""Python bindings for the dualctl stochastic-control toolkit."""

import json
import os
from os import PathLike

from ._dualctl import (
    Config,
    ConfigError,
    InvalidInput,
    __version__,
    certify,
    load_config_file,
    merton_fraction,
)
from ._dualctl import load_config_json as _load_config_json
from ._dualctl import run_json as _run_json

SUBCOMMANDS = ("simulate", "primal", "dual", "robust", "bridge-check", "convergence")


def load_config(document, **overrides) -> Config:
    """Validate a config given as a dict, JSON string or path."""
    if isinstance(document, dict):
        return _load_config_json(json.dumps(document), overrides)
    if isinstance(document, PathLike) or not document.lstrip().startswith("{"):
        return load_config_file(os.fspath(document), overrides)
    return _load_config_json(document, overrides)


def run(subcommand: str, config: Config, out) -> dict:
    """Run a subcommand, write its files into `out`, and return the solution document."""
    return json.loads(_run_json(subcommand, config, out))


__all__ = [
    "Config",
    "ConfigError",
    "InvalidInput",
    "SUBCOMMANDS",
    "__version__",
    "certify",
    "load_config",
    "load_config_file",
    "merton_fraction",
    "run",
]
