"""Deterministic CSV/JSON output, content hashes and run manifests.

Floats are written with Python's shortest round-trip representation
(``repr``), so re-running a command with the same config and seed produces
byte-identical files and reading a value back returns the exact float.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from regulab import __version__
from regulab.errors import ConfigError

MANIFEST_NAME = "manifest.json"


def format_value(v) -> str:
    """Shortest round-trip text for floats; ``str`` for everything else."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])
    return path


def _plain(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (tuple, set)):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(data) -> str:
    """Canonical JSON: sorted keys, two-space indent, ``repr`` floats."""
    return json.dumps(data, sort_keys=True, indent=2, default=_plain, allow_nan=True) + "\n"


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(data))
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def read_xr_csv(path, x_columns: Sequence[str], r_columns: Sequence[str]):
    """Read ``(x, r)`` rows from a headed CSV.

    Raises:
        ConfigError: unreadable file, missing columns or a non-numeric cell;
            the field names the row and column.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise ConfigError("whiten.csv", f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError("whiten.csv", f"{path} is empty") from None
        header = [h.strip() for h in header]
        missing = [c for c in list(x_columns) + list(r_columns) if c not in header]
        if missing:
            raise ConfigError("whiten.csv", f"missing column(s) {missing}; header is {header}")
        xi = [header.index(c) for c in x_columns]
        ri = [header.index(c) for c in r_columns]
        xs, rs = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ConfigError(
                    f"whiten.csv:row {lineno}", f"expected {len(header)} cells, found {len(row)}"
                )
            vals = []
            for idx in xi + ri:
                try:
                    v = float(row[idx])
                except ValueError:
                    raise ConfigError(
                        f"whiten.csv:row {lineno}:column {header[idx]}",
                        f"not a number: {row[idx]!r}",
                    ) from None
                if not np.isfinite(v):
                    raise ConfigError(
                        f"whiten.csv:row {lineno}:column {header[idx]}", "value is not finite"
                    )
                vals.append(v)
            xs.append(vals[: len(xi)])
            rs.append(vals[len(xi) :])
    if not xs:
        raise ConfigError("whiten.csv", f"{path} has no data rows")
    return np.asarray(xs, dtype=float), np.asarray(rs, dtype=float)


@dataclass
class RunManifest:
    """What a command produced: version, config hash, seed, files with hashes, timings.

    Timings are the only non-deterministic part, so they live here and never
    in the artifacts themselves.
    """

    command: str
    config_hash: str
    seed: int
    version: str = __version__
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def record(self, name: str, path) -> None:
        path = Path(path)
        self.outputs[name] = {"path": path.name, "sha256": sha256_file(path)}

    @contextmanager
    def timed(self, label: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[label] = round(time.perf_counter() - start, 6)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "version": self.version,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "outputs": self.outputs,
            "timings": self.timings,
        }

    def write(self, out_dir) -> Path:
        return write_json(Path(out_dir) / MANIFEST_NAME, self.to_dict())

    @classmethod
    def read(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text())
        return cls(
            data["command"],
            data["config_hash"],
            data["seed"],
            data.get("version", __version__),
            data.get("outputs", {}),
            data.get("timings", {}),
        )

    def verify(self, out_dir) -> list:
        """Names of outputs that are missing or whose content hash changed."""
        bad = []
        for name, entry in self.outputs.items():
            p = Path(out_dir) / entry["path"]
            if not p.exists() or sha256_file(p) != entry["sha256"]:
                bad.append(name)
        return bad
