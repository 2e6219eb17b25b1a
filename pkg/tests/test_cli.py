import hashlib
import json
from pathlib import Path

import pytest
import yaml

from jkoflow import cli
from jkoflow.config import from_dict, load
from jkoflow.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]

BASE = {
    "grid": {"n_cells": 16},
    "problem": {"mobility": {"tag": "quadratic", "M": 1.0}, "energy": {"tag": "double_well", "theta": 1.0}},
    "scheme": {"tau": 2e-3, "T_final": 1e-2, "backend": "dynamic", "K": 2},
    "initial": {"tag": "cosine", "mean": 0.5, "amplitudes": [0.0, 0.3]},
    "checks": ["structure", "energy_estimate", "flow_interchange"],
    "outputs": {"snapshot_every": 2},
}


def _write(tmp_path, raw, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return str(p)


def _read(d: Path):
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_run_writes_artifacts_and_is_deterministic(tmp_path):
    cfg = _write(tmp_path, BASE)
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "a")]) == cli.EXIT_OK
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "b")]) == cli.EXIT_OK
    a, b = _read(tmp_path / "a"), _read(tmp_path / "b")
    assert set(a) == set(b)
    for k in a:
        if k != "timing.json":
            assert a[k] == b[k], k
    summary = json.loads(a["summary.json"])
    assert summary["passed"] is True
    assert {"config", "tolerances", "checks", "statistics", "manifest"} <= set(summary)
    for rel, digest in summary["manifest"].items():
        assert hashlib.sha256(a[rel]).hexdigest() == digest
    assert "timing.json" not in summary["manifest"]
    assert "snapshots/u_000000.csv" in a and "snapshots/u_000004.csv" in a
    assert a["snapshots/u_000000.csv"].decode().splitlines()[0] == "x,u"


def test_backend_override(tmp_path):
    cfg = _write(tmp_path, BASE)
    out = tmp_path / "f"
    assert cli.main(["run", "--config", cfg, "--out", str(out), "--backend", "frozen"]) == cli.EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["scheme"]["backend"] == "frozen"


def test_infeasible_and_bad_configs(tmp_path, capsys):
    assert cli.main(["run", "--config", str(ROOT / "configs" / "infeasible.yaml"), "--out", str(tmp_path / "x")]) == 2
    raw = dict(BASE, checks=["bogus"])
    assert cli.main(["run", "--config", _write(tmp_path, raw), "--out", str(tmp_path / "y")]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2
    (tmp_path / "broken.yaml").write_text("problem: [unclosed")
    assert cli.main(["check", "--config", str(tmp_path / "broken.yaml")]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_check_modes(tmp_path):
    ch = _write(tmp_path, BASE, "ch.yaml")
    assert cli.main(["check", "--config", ch]) == cli.EXIT_OK
    tf = dict(BASE, problem={"mobility": {"tag": "power", "alpha": 0.75},
                             "energy": {"tag": "thin_film", "alpha": 0.75, "beta": 1.0, "kappa": 0.0}})
    tf = _write(tmp_path, tf, "tf.yaml")
    assert cli.main(["check", "--config", tf, "--mode", "lsc"]) == cli.EXIT_CHECK
    assert cli.main(["check", "--config", tf, "--mode", "general"]) == cli.EXIT_OK


def test_sweep(tmp_path):
    raw = dict(BASE, sweep={"n_cells": [8, 16]}, checks=["structure"])
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--config", _write(tmp_path, raw), "--out", str(out), "--workers", "1"]) == 0
    table = json.loads((out / "sweep.json").read_text())
    assert [c["params"] for c in table["cells"]] == [{"n_cells": 8}, {"n_cells": 16}]
    assert table["cells"][0]["l2_to_next"] > 0
    assert (out / "sweep.csv").read_text().splitlines()[0] == "cell,n_cells,exit,passed,l2_to_next"
    bad = dict(BASE, sweep={"theta": [1, 2]})
    assert cli.main(["sweep", "--config", _write(tmp_path, bad, "bad.yaml"), "--out", str(out)]) == 2


@pytest.mark.slow
def test_compare_positivity_contrast(tmp_path):
    out = tmp_path / "cmp"
    assert cli.main(["compare", "--config", str(ROOT / "configs" / "thin_film_contrast.yaml"), "--out", str(out)]) == 0
    c = json.loads((out / "compare.json").read_text())["comparison"]
    assert c["direct_status"] == "positivity_loss"
    assert c["jko_box_violations"] == 0


def test_shipped_configs_parse():
    for p in sorted((ROOT / "configs").glob("*.yaml")):
        cfg = load(p)
        assert cfg.n_cells >= 3
        assert cfg.echo()["schema"] == "1"


def test_from_dict_errors():
    with pytest.raises(ConfigError):
        from_dict({"scheme": {}})
    with pytest.raises(ConfigError):
        from_dict({**BASE, "scheme": {"tau": 1e-3, "T_final": 1e-2, "backend": "magic"}})
    with pytest.raises(ConfigError):
        from_dict({**BASE, "problem": {"mobility": {"tag": "quadratic", "M": 1.0}}})
    cfg = from_dict({**BASE, "problem": {"mobility": {"tag": "quadratic", "bogus": 1},
                                          "energy": {"tag": "zero"}}})
    with pytest.raises(ConfigError):
        cfg.mobility_obj()
