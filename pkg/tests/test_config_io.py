import json

import numpy as np
import pytest
import yaml

from regulab import config
from regulab.errors import ConfigError
from regulab.io import RunManifest, dumps, format_value, read_xr_csv, sha256_file, write_csv, write_json


def test_defaults_validate():
    cfg = config.validate({})
    assert cfg.scenario == "frac_l1"
    assert cfg.seed == 0


@pytest.mark.parametrize("path", ["frac_l1", "frac_l2", "matching", "matching_step", "custom", "whiten_shifted"])
def test_bundled_configs_validate(path, request):
    root = request.config.rootpath
    assert config.load(root / "configs" / f"{path}.yaml")


@pytest.mark.parametrize(
    "data,field",
    [
        ({"bogus": 1}, "bogus"),
        ({"seed": -1}, "seed"),
        ({"regularity": {"radii": [0.1, 0.5]}}, "regularity.radii"),
        ({"probe": {"radii": [0.5, 0.0]}}, "probe.radii"),
        ({"matching": {"radii": [0.1, 0.2]}}, "matching.radii"),
        ({"grid": {"lo": 1.0, "hi": 0.0, "points": 5}}, "grid"),
        ({"tasks": [{"name": "frac", "colour": "red"}]}, "tasks.0.colour"),
        ({"whiten": {"mode": "guess"}}, "whiten.mode"),
        ({"scenario": "custom"}, "<root>"),
    ],
)
def test_invalid_configs_name_the_field(data, field):
    with pytest.raises(ConfigError) as exc:
        config.validate(data)
    assert exc.value.field == field


def test_load_reports_bad_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: [1,\n")
    with pytest.raises(ConfigError) as exc:
        config.load(p)
    assert exc.value.field == "--config"
    with pytest.raises(ConfigError):
        config.load(tmp_path / "missing.yaml")


def test_digest_ignores_out_but_not_seed():
    a = config.validate({"out": "a"})
    b = config.validate({"out": "b"})
    c = config.validate({"seed": 1})
    assert a.digest() == b.digest() != c.digest()


def test_updated_revalidates():
    cfg = config.validate({})
    assert cfg.updated(seed=5).seed == 5
    with pytest.raises(ConfigError):
        cfg.updated(threads=0)


def test_resolve_factory():
    from regulab.scenarios.frac import frac_l1

    assert config.resolve_factory("regulab.scenarios.frac:frac_l1") is frac_l1
    for bad in ("nomodule", "no_such_module_xyz:f", "regulab.scenarios.frac:nope"):
        with pytest.raises(ConfigError):
            config.resolve_factory(bad)


def test_yaml_round_trip(tmp_path):
    cfg = config.validate({"seed": 3, "tasks": [{"name": "indicator", "lo": 0.5}]})
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(cfg.model_dump(mode="json")))
    assert config.load(p) == cfg


# ---------------------------------------------------------------- io


def test_format_value_round_trips_floats():
    for v in (0.1, 1 / 3, 1e-300, -2.5):
        assert float(format_value(v)) == v
    assert format_value(np.float64(0.1)) == "0.1"
    assert format_value(3) == "3"


def test_write_csv_and_json_are_stable(tmp_path):
    a = write_csv(tmp_path / "a.csv", ["x", "y"], [(0.1, 2), (np.float64(1 / 3), 4)])
    assert a.read_text().splitlines() == ["x,y", "0.1,2", "0.3333333333333333,4"]
    j1 = write_json(tmp_path / "a.json", {"b": np.int64(1), "a": np.arange(2)})
    j2 = write_json(tmp_path / "b.json", {"a": [0, 1], "b": 1})
    assert j1.read_bytes() == j2.read_bytes()
    assert json.loads(dumps({"z": np.array([0.5])})) == {"z": [0.5]}


def test_read_xr_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,r,extra\n0.1,0.2,a\n0.3,0.4,b\n")
    x, r = read_xr_csv(p, ["x"], ["r"])
    assert x.tolist() == [[0.1], [0.3]]
    assert r.tolist() == [[0.2], [0.4]]


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("x,r\n0.1,0.2\n0.3,oops\n", "row 3"),
        ("x,q\n0.1,0.2\n", "missing column(s) ['r']"),
        ("x,r\n0.1,nan\n", "row 2"),
    ],
)
def test_read_xr_csv_errors_point_at_the_cell(tmp_path, text, fragment):
    p = tmp_path / "d.csv"
    p.write_text(text)
    with pytest.raises(ConfigError) as exc:
        read_xr_csv(p, ["x"], ["r"])
    assert fragment in exc.value.field or fragment in str(exc.value)


def test_manifest_records_and_verifies(tmp_path):
    f = write_csv(tmp_path / "t.csv", ["a"], [(1,)])
    m = RunManifest("curve", "abc", 7)
    m.record("table", f)
    with m.timed("work"):
        pass
    path = m.write(tmp_path)
    again = RunManifest.read(path)
    assert again.outputs == m.outputs
    assert again.verify(tmp_path) == []
    f.write_text("a\n2\n")
    assert again.verify(tmp_path) == ["table"]
    assert m.outputs["table"]["sha256"] != sha256_file(f)
