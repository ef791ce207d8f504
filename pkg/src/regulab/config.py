"""Run configuration: a YAML file validated against a strict schema.

Unknown keys anywhere are rejected, and every validation problem is
reported as a :class:`~regulab.errors.ConfigError` whose ``field`` is the
dotted path of the offending key (``regularity.radii``, ``tasks.0.name``).
"""

from __future__ import annotations

import hashlib
import importlib
import json
from pathlib import Path
from typing import List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from regulab.errors import ConfigError

SCENARIOS = ("frac_l1", "frac_l2", "matching", "custom")
NOISE_GENERATORS = ("shifted", "white", "coupled")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Strict):
    lo: float
    hi: float
    points: int = Field(ge=2)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.lo < self.hi:
            raise ValueError("lo must be below hi")
        return self


class TaskConfig(_Strict):
    """One bounded transform; see :mod:`regulab.tasks` for the parameters per name."""

    name: str = "frac"
    coord: int = 0
    lo: Optional[float] = None
    hi: Optional[float] = None
    offset: Optional[float] = None
    value: Optional[float] = None
    breakpoints: Optional[List[float]] = None
    values: Optional[List[float]] = None
    steps: Optional[int] = None


class DistributionConfig(_Strict):
    kind: Literal["uniform", "gaussian", "categorical"] = "gaussian"
    lo: float = 0.0
    hi: float = 1.0
    mean: float = 0.0
    std: float = 1.0
    weights: Optional[List[float]] = None


class SamplesConfig(_Strict):
    """Sample counts; ``None`` means the scenario default.

    ``--quick`` multiplies every count by ``quick_scale`` (with floors that
    keep the estimators meaningful).
    """

    curve: Optional[int] = Field(default=None, ge=2)
    certify_curve: Optional[int] = Field(default=None, ge=2)
    probe: Optional[int] = Field(default=None, ge=2)
    quick_scale: float = Field(default=0.1, gt=0, le=1)


def _decreasing_radii(v: List[float]) -> List[float]:
    if not v or any(r <= 0 for r in v):
        raise ValueError("need at least one positive radius")
    if any(b >= a for a, b in zip(v, v[1:])):
        raise ValueError("radii must be strictly decreasing")
    return v


class RegularitySection(_Strict):
    x0: Optional[List[float]] = None
    radii: List[float] = [0.5, 0.1, 0.02, 0.004]
    tau_grid: List[float] = [0.5, 0.2, 0.1, 0.05]
    n: int = Field(default=20_000, ge=2)
    density_bins: Optional[int] = Field(default=None, ge=1)
    D_bound: Optional[float] = Field(default=None, gt=0)
    threshold: float = Field(default=0.05, gt=0, lt=1)
    sigma: float = Field(default=3.0, ge=0)
    growth: float = Field(default=1.5, gt=1)
    n_random_directions: Optional[int] = Field(default=None, ge=0)

    _radii = field_validator("radii")(_decreasing_radii)


class ProbeSection(_Strict):
    radii: List[float] = [0.5, 0.1, 0.02]
    bins: Optional[int] = Field(default=None, ge=1)

    _radii = field_validator("radii")(_decreasing_radii)


class JumpSection(_Strict):
    threshold: float = Field(default=0.1, gt=0)
    z: float = Field(default=6.0, ge=0)


class MatchingSection(_Strict):
    n_agents: int = Field(default=3, ge=1)
    feature_dim: int = Field(default=2, ge=1)
    feature_dist: DistributionConfig = DistributionConfig()
    preference: Literal["linear", "bump", "step"] = "linear"
    focal: int = Field(default=0, ge=0)
    identical_women: bool = False
    step_height: float = 5.0
    bump_amplitude: List[float] = [0.0, 2.0]
    bump_scale: List[float] = [0.5, 1.5]
    trials: int = Field(default=1000, ge=1)
    radii: List[float] = [0.5, 0.1, 0.02, 0.004]

    @field_validator("radii")
    @classmethod
    def _non_increasing(cls, v):
        if not v or any(r < 0 for r in v) or any(b > a for a, b in zip(v, v[1:])):
            raise ValueError("radii must be non-negative and non-increasing")
        return v


class FracSection(_Strict):
    x_lo: float = -2.0
    x_hi: float = 2.0


class CustomSection(_Strict):
    """``factory`` is ``"module:attribute"``; calling it must return a Scenario."""

    factory: str


class WhitenBins(_Strict):
    x_bins: int = Field(default=32, ge=1)
    r_bins: int = Field(default=16, ge=1)
    min_leaf: int = Field(default=8, ge=1)


class WhitenSection(_Strict):
    mode: Literal["fit", "replay", "identity"] = "fit"
    source: Literal["generated", "csv"] = "generated"
    generator: Literal["shifted", "white", "coupled"] = "shifted"
    csv: Optional[str] = None
    x_columns: List[str] = ["x"]
    r_columns: List[str] = ["r"]
    chain: Optional[str] = None
    n_fit: int = Field(default=100_000, ge=1000)
    n_test: int = Field(default=100_000, ge=10)
    holdout_fraction: float = Field(default=0.5, gt=0, lt=1)
    bins: WhitenBins = WhitenBins()
    ks_threshold: float = Field(default=0.02, gt=0)
    corr_threshold: float = Field(default=0.05, gt=0)

    @model_validator(mode="after")
    def _sources(self):
        if self.source == "csv" and not self.csv:
            raise ValueError("source 'csv' needs a csv path")
        if self.mode == "replay" and not self.chain:
            raise ValueError("mode 'replay' needs a chain path")
        return self


class ScenarioConfig(_Strict):
    """Top-level run configuration."""

    scenario: Literal["frac_l1", "frac_l2", "matching", "custom"] = "frac_l1"
    seed: int = Field(default=0, ge=0, lt=2**64)
    out: str = "out"
    threads: Optional[int] = Field(default=None, ge=1)
    grid: Optional[GridConfig] = None
    tasks: List[TaskConfig] = []
    samples: SamplesConfig = SamplesConfig()
    regularity: RegularitySection = RegularitySection()
    probe: ProbeSection = ProbeSection()
    jumps: JumpSection = JumpSection()
    frac: FracSection = FracSection()
    matching: MatchingSection = MatchingSection()
    custom: Optional[CustomSection] = None
    whiten: WhitenSection = WhitenSection()

    @model_validator(mode="after")
    def _custom_needs_factory(self):
        if self.scenario == "custom" and self.custom is None:
            raise ValueError("scenario 'custom' needs a custom.factory entry")
        return self

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form, ignoring the output directory."""
        data = self.model_dump(mode="json")
        data.pop("out", None)
        blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def updated(self, **changes) -> "ScenarioConfig":
        data = self.model_dump()
        data.update({k: v for k, v in changes.items() if v is not None})
        return validate(data)


def _field_path(err: dict) -> str:
    loc = [str(p) for p in err.get("loc", ())]
    return ".".join(loc) or "<root>"


def validate(data) -> ScenarioConfig:
    """Validate a plain mapping, translating schema errors into ConfigError."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(_field_path(first), first.get("msg", "invalid value")) from None


def load(path) -> ScenarioConfig:
    """Read and validate a YAML config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"not valid YAML: {exc}") from None
    return validate(data)


def resolve_factory(spec: str):
    """Import ``"module:attribute"``."""
    module, _, attr = spec.partition(":")
    if not module or not attr:
        raise ConfigError("custom.factory", "expected 'module:attribute'")
    try:
        obj = importlib.import_module(module)
    except ImportError as exc:
        raise ConfigError("custom.factory", f"cannot import {module!r}: {exc}") from None
    for part in attr.split("."):
        if not hasattr(obj, part):
            raise ConfigError("custom.factory", f"{module!r} has no attribute {attr!r}")
        obj = getattr(obj, part)
    return obj
