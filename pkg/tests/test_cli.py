import csv
import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from regulab.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main
from regulab.io import RunManifest

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def _run(*argv):
    return main([str(a) for a in argv])


def _write_cfg(tmp_path, data, name="c.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_curve_frac_l1(tmp_path):
    cfg = _write_cfg(tmp_path, {"scenario": "frac_l1", "tasks": [{"name": "frac"}], "samples": {"curve": 20_000}})
    assert _run("curve", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK
    rows = _read_csv(tmp_path / "o" / "curve_frac.csv")
    assert len(rows) == 101
    assert list(rows[0]) == ["x", "value", "stderr", "n"]
    assert all(abs(float(r["value"]) - 0.5) < 0.02 for r in rows)
    summary = json.loads((tmp_path / "o" / "curve_summary.json").read_text())
    assert summary["tasks"]["frac"]["jumps"] == []
    assert (tmp_path / "o" / "curve_frac.vl.json").exists()


def test_curve_frac_l2_flags_jump(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, {"scenario": "frac_l2", "tasks": [{"name": "frac"}]})
    assert _run("curve", "--config", cfg, "--out", tmp_path / "o", "--quick") == EXIT_OK
    summary = json.loads((tmp_path / "o" / "curve_summary.json").read_text())
    jumps = summary["tasks"]["frac"]["jumps"]
    assert len(jumps) == 1
    lo, hi = jumps[0]["between"]
    assert lo <= 0.0 <= hi and hi - lo <= 0.04 + 1e-12
    assert "jump" in capsys.readouterr().out


def test_certify_exit_codes(tmp_path):
    assert _run("certify", "--config", CONFIGS / "frac_l1.yaml", "--out", tmp_path / "a", "--quick") == EXIT_OK
    assert _run("certify", "--config", CONFIGS / "frac_l2.yaml", "--out", tmp_path / "b", "--quick") == EXIT_FAIL
    cert = json.loads((tmp_path / "b" / "certificate.json").read_text())
    assert cert["passed"] is False and cert["verdict"] == "violated"
    assert cert["reasons"]


def test_certify_matching(tmp_path):
    code = _run("certify", "--config", CONFIGS / "matching.yaml", "--out", tmp_path, "--quick")
    assert code == EXIT_OK
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert cert["kind"] == "discrete"


def test_certify_custom_factory(tmp_path):
    assert _run("certify", "--config", CONFIGS / "custom.yaml", "--out", tmp_path, "--quick") == EXIT_OK


def test_probe_writes_tables(tmp_path):
    assert _run("probe", "--scenario", "frac_l2", "--out", tmp_path, "--quick") == EXIT_OK
    tv = _read_csv(tmp_path / "tv.csv")
    assert [float(r["radius"]) for r in tv] == [0.5, 0.1, 0.02]
    assert all(float(r["binned_tv"]) >= 0.9 for r in tv)
    assert (tmp_path / "regularity.csv").exists() and (tmp_path / "density.csv").exists()
    assert json.loads((tmp_path / "probe_summary.json").read_text())["regularity"]["verdict"] == "violated"


def test_matching_probe_pass_and_fail(tmp_path):
    assert _run("matching-probe", "--config", CONFIGS / "matching.yaml", "--out", tmp_path / "a") == EXIT_OK
    assert _run("matching-probe", "--config", CONFIGS / "matching_step.yaml", "--out", tmp_path / "b") == EXIT_FAIL
    rows = _read_csv(tmp_path / "a" / "matching_probe.csv")
    assert len(rows) == 4


def test_whiten_modes(tmp_path):
    base = yaml.safe_load((CONFIGS / "whiten_shifted.yaml").read_text())
    cfg = _write_cfg(tmp_path, base)
    assert _run("whiten", "--config", cfg, "--out", tmp_path / "fit") == EXIT_OK
    report = json.loads((tmp_path / "fit" / "whiteness.json").read_text())
    assert report["whiteness"]["passed"] and report["composition_max_error"] < 1e-6
    chain = tmp_path / "fit" / "chain.npz"
    replay = dict(base, whiten=dict(base["whiten"], mode="replay", chain=str(chain)))
    assert _run("whiten", "--config", _write_cfg(tmp_path, replay, "r.yaml"), "--out", tmp_path / "rp") == EXIT_OK
    ident = dict(base, whiten=dict(base["whiten"], mode="identity"))
    assert _run("whiten", "--config", _write_cfg(tmp_path, ident, "i.yaml"), "--out", tmp_path / "id") == EXIT_FAIL


def test_whiten_from_csv(tmp_path):
    import numpy as np

    rng = np.random.default_rng(0)
    x = rng.random(20_000)
    r = x + rng.random(20_000)
    data = tmp_path / "d.csv"
    data.write_text("x,r\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(x, r)))
    cfg = _write_cfg(tmp_path, {"whiten": {"source": "csv", "csv": str(data), "x_columns": ["x"],
                                           "r_columns": ["r"], "ks_threshold": 0.03}})
    assert _run("whiten", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK


def test_malformed_csv_is_config_error(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("x,r\n0.1,0.2\n0.2,bad\n")
    cfg = _write_cfg(tmp_path, {"whiten": {"source": "csv", "csv": str(data), "x_columns": ["x"], "r_columns": ["r"]}})
    assert _run("whiten", "--config", cfg, "--out", tmp_path / "o") == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "row 3" in err and "r" in err


@pytest.mark.parametrize(
    "data",
    [{"unknown_key": 1}, {"regularity": {"radii": [0.1, 0.2]}}, {"tasks": [{"name": "nope"}]}],
)
def test_bad_config_exit_2(tmp_path, data):
    cfg = _write_cfg(tmp_path, data)
    assert _run("certify", "--config", cfg, "--out", tmp_path / "o", "--quick") == EXIT_CONFIG


def test_missing_config_file_exit_2(tmp_path):
    assert _run("curve", "--config", tmp_path / "nope.yaml", "--out", tmp_path) == EXIT_CONFIG


def _outputs(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir()) if p.name != "manifest.json"}


@pytest.mark.parametrize(
    "argv",
    [
        ["curve", "--scenario", "frac_l2", "--quick"],
        ["certify", "--config", CONFIGS / "frac_l1.yaml", "--quick"],
        ["probe", "--scenario", "frac_l1", "--quick"],
        ["matching-probe", "--config", CONFIGS / "matching.yaml"],
        ["whiten", "--config", CONFIGS / "whiten_shifted.yaml"],
    ],
    ids=["curve", "certify", "probe", "matching-probe", "whiten"],
)
def test_reruns_are_byte_identical(tmp_path, argv):
    _run(*argv, "--out", tmp_path / "a", "--seed", 3)
    _run(*argv, "--out", tmp_path / "b", "--seed", 3)
    assert _outputs(tmp_path / "a") == _outputs(tmp_path / "b")
    ma = RunManifest.read(tmp_path / "a" / "manifest.json")
    mb = RunManifest.read(tmp_path / "b" / "manifest.json")
    assert ma.outputs == mb.outputs and ma.config_hash == mb.config_hash
    assert mb.verify(tmp_path / "a") == []


def test_different_seed_changes_output(tmp_path):
    _run("curve", "--scenario", "frac_l1", "--quick", "--out", tmp_path / "a", "--seed", 1)
    _run("curve", "--scenario", "frac_l1", "--quick", "--out", tmp_path / "b", "--seed", 2)
    assert _outputs(tmp_path / "a") != _outputs(tmp_path / "b")


@pytest.mark.skipif(shutil.which("regulab") is None, reason="console script not installed")
def test_console_script(tmp_path):
    out = subprocess.run(["regulab", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "certify" in out.stdout


def test_module_entry_point_exit_code(tmp_path):
    cfg = _write_cfg(tmp_path, {"nope": 1})
    out = subprocess.run([sys.executable, "-m", "regulab.cli", "curve", "--config", str(cfg)],
                         capture_output=True, text=True)
    assert out.returncode == EXIT_CONFIG
    assert "nope" in out.stderr
