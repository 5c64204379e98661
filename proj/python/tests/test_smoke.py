import json
import os
from pathlib import Path

import pytest

import dualctl

CONFIGS = Path(os.environ.get("DUALCTL_CONFIG_DIR", Path(__file__).resolve().parents[2] / "configs"))


def merton_doc():
    return json.loads((CONFIGS / "merton_log.json").read_text())


def test_certify_log_and_power():
    for name, alpha in [("log", 0.5), ("power", 0.3), ("power", 0.7)]:
        report = dualctl.certify(name, alpha)
        assert report["passed"]
        assert report["conjugacy_residual"] < 1e-6


def test_merton_fraction_closed_form():
    assert dualctl.merton_fraction(0.05, 0.2) == pytest.approx(1.25, rel=1e-14)


def test_missing_seed_names_field():
    doc = merton_doc()
    del doc["mc"]["seed"]
    with pytest.raises(dualctl.ConfigError) as info:
        dualctl.load_config(doc)
    assert info.value.field == "mc.seed"


def test_unknown_key_rejected():
    doc = merton_doc()
    doc["horizn"] = 1.0
    with pytest.raises(dualctl.ConfigError) as info:
        dualctl.load_config(doc)
    assert "horizn" in info.value.field


def test_hash_tracks_overrides():
    a = dualctl.load_config(merton_doc())
    b = dualctl.load_config(merton_doc(), paths=2000)
    assert a.hash != b.hash
    assert a.hash == dualctl.load_config(merton_doc()).hash


def test_primal_run_selects_merton_grid_point(tmp_path):
    cfg = dualctl.load_config(merton_doc(), paths=4000, steps=20, mode="analytic")
    sol = dualctl.run("primal", cfg, tmp_path)
    assert sol["config_hash"] == cfg.hash
    assert sol["result"]["pi"] == pytest.approx(1.25)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config_hash"] == cfg.hash
    assert (tmp_path / "candidates.csv").read_text().startswith(f"# config_hash={cfg.hash}")


def test_path_and_text_inputs_agree():
    path = CONFIGS / "merton_log.json"
    assert dualctl.load_config(path).hash == dualctl.load_config(str(path)).hash
    assert dualctl.load_config(path.read_text()).hash == dualctl.load_config(merton_doc()).hash
