"""Empirical checks of discrete- and continuous-regularity, and continuity certificates.

Both probes couple every input to ``x0`` through common random numbers: one
noise draw ``r_1..r_n`` is pushed through ``T_x`` for ``x0`` and for every
probe point, so the estimated quantities are exactly the probabilities over
``r`` (with ``x`` fixed) that the regularity conditions talk about.

Verdicts are one of ``consistent``, ``violated`` or ``inconclusive``. A
probe only says ``violated`` when some quantity exceeds its threshold by
more than ``sigma`` Monte-Carlo standard errors; a probe can never prove
regularity, only fail to find evidence against it on a finite set of radii
and directions.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from regulab import __version__
from regulab.dgp import DerivedTask, Factorization, curves, evaluate_common
from regulab.errors import ConfigError
from regulab.metrics import (
    bin_samples,
    default_bins,
    modulus_and_jumps,
    probe_directions,
    probe_points,
    regular_edges,
    tv_limit_probe,
)
from regulab.sampling import as_seed

CONSISTENT = "consistent"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class RegularityConfig:
    """Knobs shared by both regularity probes.

    Attributes:
        x0: The point whose neighbourhood is probed.
        radii: Strictly decreasing positive probe radii.
        tau_grid: Exceedance thresholds for the continuous probe. They should
            exceed the smallest radius, or a Lipschitz map will look violated.
        n: Noise draws per estimate.
        density_bins: Bins per latent axis for the coarsest density
            histogram; ``None`` picks the metrics default for the dimension.
        D_bound: Optional declared density bound; exceeding it is a violation.
        threshold: Largest acceptable final mismatch / exceedance fraction.
        sigma: Standard errors required before calling anything a violation.
        growth: Per-refinement growth factor of the density sup that marks
            the density as unbounded.
        n_random_directions: Random probe directions on top of ``+-e_i``.
    """

    x0: tuple = (0.0,)
    radii: tuple = (0.5, 0.1, 0.02, 0.004)
    tau_grid: tuple = (0.5, 0.2, 0.1, 0.05)
    n: int = 20_000
    density_bins: Optional[int] = None
    D_bound: Optional[float] = None
    threshold: float = 0.05
    sigma: float = 3.0
    growth: float = 1.5
    n_random_directions: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        object.__setattr__(self, "tau_grid", tuple(float(t) for t in self.tau_grid))
        if not self.radii or any(r <= 0 for r in self.radii):
            raise ConfigError("regularity.radii", "need at least one positive radius")
        if any(b >= a for a, b in zip(self.radii, self.radii[1:])):
            raise ConfigError("regularity.radii", "must be strictly decreasing")
        if not self.tau_grid or any(t <= 0 for t in self.tau_grid):
            raise ConfigError("regularity.tau_grid", "thresholds must be strictly positive")
        if self.n < 2:
            raise ConfigError("regularity.n", "need at least two samples")
        if self.density_bins is not None and self.density_bins < 1:
            raise ConfigError("regularity.density_bins", "must be positive")
        if self.D_bound is not None and self.D_bound <= 0:
            raise ConfigError("regularity.D_bound", "must be positive")
        if not 0 < self.threshold < 1:
            raise ConfigError("regularity.threshold", "must lie in (0, 1)")
        if self.sigma < 0:
            raise ConfigError("regularity.sigma", "must be non-negative")
        if self.growth <= 1:
            raise ConfigError("regularity.growth", "must exceed 1")

    def with_x0(self, x0) -> "RegularityConfig":
        d = asdict(self)
        d["x0"] = x0
        return RegularityConfig(**d)

    def thresholds(self) -> dict:
        return {
            "mismatch": self.threshold,
            "sigma": self.sigma,
            "density_growth": self.growth,
            "D_bound": self.D_bound,
        }


@dataclass
class RegularityReport:
    """Outcome of a regularity probe.

    ``tables`` maps a table name to a list of row dicts. The discrete probe
    has a single ``mismatch`` table; the continuous probe has one
    ``exceedance`` table (one row per radius and tau) and one ``density``
    table (one row per probed input).
    """

    kind: str
    verdict: str
    reasons: list
    tables: dict
    density: dict = field(default_factory=dict)
    resampled: int = 0

    @property
    def consistent(self) -> bool:
        return self.verdict == CONSISTENT

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "reasons": list(self.reasons),
            "tables": self.tables,
            "density": self.density,
            "resampled": self.resampled,
        }


def _probe_inputs(fact: Factorization, cfg: RegularityConfig, seed):
    x0 = fact.point(cfg.x0)
    dirs = probe_directions(fact.input_dim, seed.split(1), cfg.n_random_directions)
    groups = [probe_points(fact, x0, r, dirs) for r in cfg.radii]
    for r, g in zip(cfg.radii, groups):
        if len(g) == 0:
            raise ConfigError("regularity.radii", f"no probe point at radius {r} lies inside the domain")
    points = [x0] + [p for g in groups for p in g]
    _, thetas, resampled = evaluate_common(fact, points, cfg.n, seed.split(0))
    per_radius = []
    k = 1
    for g in groups:
        per_radius.append((g, thetas[k : k + len(g)]))
        k += len(g)
    return thetas[0], per_radius, resampled


def _se(p: float, n: int) -> float:
    return float(np.sqrt(max(p * (1.0 - p), 0.0) / n))


def _column_verdict(rows, key, cfg: RegularityConfig, label: str):
    """Shared rule: consistent iff non-increasing within noise and final < threshold."""
    reasons = []
    final = rows[-1]
    if final[key] > cfg.threshold + cfg.sigma * final["stderr"]:
        reasons.append(
            f"{label}: final {key} {final[key]:.4g} exceeds {cfg.threshold:g} "
            f"by more than {cfg.sigma:g} standard errors at radius {final['radius']:g}"
        )
        return VIOLATED, reasons
    monotone = all(
        b[key] <= a[key] + cfg.sigma * float(np.hypot(a["stderr"], b["stderr"]))
        for a, b in zip(rows, rows[1:])
    )
    if not monotone:
        reasons.append(f"{label}: {key} column increases beyond noise as the radius shrinks")
        return INCONCLUSIVE, reasons
    if final[key] >= cfg.threshold:
        reasons.append(f"{label}: final {key} {final[key]:.4g} within noise of threshold")
        return INCONCLUSIVE, reasons
    return CONSISTENT, reasons


def _combine(verdicts) -> str:
    if VIOLATED in verdicts:
        return VIOLATED
    if all(v == CONSISTENT for v in verdicts):
        return CONSISTENT
    return INCONCLUSIVE


def _mismatch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim == 1:
        return a != b
    return np.any(a != b, axis=1)


def discrete_regularity_probe(fact: Factorization, cfg: RegularityConfig, seed) -> RegularityReport:
    """Estimate ``P(T_x(R) != T_x0(R))`` at each radius, maximised over directions.

    Raises:
        ConfigError: the latent space has no exact-equality semantics.
    """
    if not fact.latent.compares_exactly:
        raise ConfigError(
            "latent", "discrete regularity needs a discrete latent space or declared exact equality"
        )
    seed = as_seed(seed)
    base, per_radius, resampled = _probe_inputs(fact, cfg, seed)
    rows = []
    for r, (pts, thetas) in zip(cfg.radii, per_radius):
        fracs = [float(np.mean(_mismatch(th, base))) for th in thetas]
        worst = int(np.argmax(fracs))
        p = fracs[worst]
        rows.append({
            "radius": r,
            "mismatch": p,
            "stderr": _se(p, cfg.n),
            "worst_point": [float(v) for v in pts[worst]],
            "directions": len(pts),
        })
    verdict, reasons = _column_verdict(rows, "mismatch", cfg, "mismatch")
    if verdict == CONSISTENT:
        reasons.append("mismatch fraction shrinks below threshold")
    return RegularityReport("discrete", verdict, reasons, {"mismatch": rows}, resampled=resampled)


def density_sup(samples: np.ndarray, bins: int, z: float) -> float:
    """Largest lower-confidence histogram density over a regular grid.

    Each bin's density is ``max(c - z * sqrt(c), 0) / (n * volume)``, so
    sampling noise in sparse bins cannot masquerade as a large density;
    a point mass still produces a sup that scales with ``1 / volume``.
    """
    rows = np.asarray(samples, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    edges = regular_edges([rows], bins)
    law = bin_samples(rows, edges)
    counts = law.probs * law.n
    lower = np.maximum(counts - z * np.sqrt(counts), 0.0)
    volume = float(np.prod([e[1] - e[0] for e in edges]))
    return float(lower.max() / (law.n * volume))


def _density_check(thetas, points, cfg: RegularityConfig, dim: int):
    bins = cfg.density_bins or default_bins(dim)
    levels = [bins, 2 * bins, 4 * bins]
    rows = []
    for x, th in zip(points, thetas):
        sups = [density_sup(th, b, cfg.sigma) for b in levels]
        ratios = [b / a if a > 0 else (np.inf if b > 0 else 1.0) for a, b in zip(sups, sups[1:])]
        rows.append({
            "x": [float(v) for v in x],
            "sup_by_bins": dict(zip(levels, sups)),
            "estimate": sups[0],
            "growth": ratios,
        })
    reasons = []
    growing = [r for r in rows if all(g >= cfg.growth for g in r["growth"])]
    partly = [r for r in rows if any(g >= cfg.growth for g in r["growth"])]
    estimate = max(r["estimate"] for r in rows)
    if growing:
        worst = growing[0]
        reasons.append(
            f"density bound not established: histogram sup at x={worst['x']} grows "
            f">= {cfg.growth:g}x per bin refinement"
        )
        verdict = VIOLATED
    elif cfg.D_bound is not None and estimate > cfg.D_bound:
        reasons.append(f"density estimate {estimate:.4g} exceeds declared bound {cfg.D_bound:g}")
        verdict = VIOLATED
    elif partly:
        reasons.append("density sup grows under one of the two refinements")
        verdict = INCONCLUSIVE
    elif estimate == 0.0:
        reasons.append("too few samples per bin to estimate a density")
        verdict = INCONCLUSIVE
    else:
        verdict = CONSISTENT
    summary = {"estimate": estimate, "bins": levels, "verdict": verdict}
    return verdict, reasons, rows, summary


def continuous_regularity_probe(fact: Factorization, cfg: RegularityConfig, seed) -> RegularityReport:
    """Estimate ``P(||T_x(R) - T_x0(R)|| >= tau)`` per radius and tau, plus a density check.

    The density check runs on ``x0`` and every probe point: a histogram sup
    that keeps growing as the bins are halved (twice) means the conditional
    law has no bounded density there.
    """
    if fact.latent.kind != "continuous":
        raise ConfigError("latent", "continuous regularity needs a continuous latent space")
    seed = as_seed(seed)
    base, per_radius, resampled = _probe_inputs(fact, cfg, seed)
    rows = []
    by_tau = {t: [] for t in cfg.tau_grid}
    for r, (pts, thetas) in zip(cfg.radii, per_radius):
        dists = [np.linalg.norm(th - base, axis=1) for th in thetas]
        for t in cfg.tau_grid:
            fracs = [float(np.mean(d >= t)) for d in dists]
            worst = int(np.argmax(fracs))
            p = fracs[worst]
            row = {
                "radius": r,
                "tau": t,
                "exceedance": p,
                "stderr": _se(p, cfg.n),
                "worst_point": [float(v) for v in pts[worst]],
            }
            rows.append(row)
            by_tau[t].append(row)
    verdicts = []
    reasons = []
    for t, col in by_tau.items():
        v, why = _column_verdict(col, "exceedance", cfg, f"tau={t:g}")
        verdicts.append(v)
        reasons.extend(why)
    exceed_verdict = _combine(verdicts)
    points = [fact.point(cfg.x0)] + [p for pts, _ in per_radius for p in pts]
    thetas = [base] + [th for _, ths in per_radius for th in ths]
    d_verdict, d_reasons, d_rows, d_summary = _density_check(thetas, points, cfg, fact.latent.dimension)
    reasons.extend(d_reasons)
    verdict = _combine([exceed_verdict, d_verdict])
    if verdict == CONSISTENT:
        reasons.append("exceedance shrinks below threshold for every tau and the density stays bounded")
    d_summary["exceedance_verdict"] = exceed_verdict
    return RegularityReport(
        "continuous",
        verdict,
        reasons,
        {"exceedance": rows, "density": d_rows},
        density=d_summary,
        resampled=resampled,
    )


def regularity_probe(fact: Factorization, cfg: RegularityConfig, seed) -> RegularityReport:
    """Discrete probe when the latent compares exactly, continuous probe otherwise."""
    if fact.latent.compares_exactly:
        return discrete_regularity_probe(fact, cfg, seed)
    return continuous_regularity_probe(fact, cfg, seed)


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


@dataclass
class Certificate:
    """Regularity verdict, TV-convergence table and per-task curve scans in one record."""

    scenario: str
    regularity: RegularityReport
    tv: object
    curve_reports: dict
    curve_points: dict
    thresholds: dict
    seed: dict

    @property
    def jumps(self) -> dict:
        return {name: rep.jumps for name, rep in self.curve_reports.items()}

    @property
    def any_jump(self) -> bool:
        return any(rep.jumps for rep in self.curve_reports.values())

    @property
    def all_constant(self) -> bool:
        return all(len(set(rep.values)) <= 1 for rep in self.curve_reports.values())

    @property
    def passed(self) -> bool:
        """No flagged jump, and either a consistent regularity verdict or only constant curves."""
        return not self.any_jump and (self.regularity.consistent or self.all_constant)

    @property
    def implication_violated(self) -> bool:
        """A consistent regularity verdict next to a flagged jump: the pattern the theory rules out."""
        return self.regularity.consistent and self.any_jump

    def to_dict(self) -> dict:
        curves_out = {}
        for name, rep in self.curve_reports.items():
            curves_out[name] = {
                "max_modulus": rep.max_modulus,
                "jumps": [asdict(j) for j in rep.jumps],
                "modulus": [list(m) for m in rep.modulus],
            }
        return {
            "scenario": self.scenario,
            "kind": self.regularity.kind,
            "verdict": self.regularity.verdict,
            "reasons": list(self.regularity.reasons),
            "passed": self.passed,
            "tables": {
                "regularity": self.regularity.tables,
                "density": self.regularity.density,
                "tv": self.tv.to_records(),
                "curves": curves_out,
            },
            "thresholds": self.thresholds,
            "seed": self.seed,
            "version": __version__,
        }


def continuity_certificate(
    fact: Factorization,
    tasks: Sequence[DerivedTask],
    cfg: RegularityConfig,
    grid,
    n_curve: int,
    seed,
    scenario: str = "",
    path_axis: int = 0,
    jump_threshold: float = 0.1,
    z: float = 6.0,
    tv_bins: Optional[int] = None,
    threads: Optional[int] = None,
) -> Certificate:
    """Run the regularity probe, a TV-limit probe at ``cfg.x0`` and a jump scan per task.

    Args:
        fact: The factorization under test.
        tasks: Bounded transforms ``f``; one curve ``E[f(L) | X = x]`` each.
        cfg: Regularity settings; ``cfg.x0`` and ``cfg.radii`` also drive the TV probe.
        grid: Input points for the curves, ordered along ``path_axis``.
        n_curve: Noise draws per grid point.
        seed: Root seed; regularity, TV and curves use children 0, 1, 2.
        scenario: Label stored in the certificate.
        path_axis: Input coordinate used as the curve's abscissa.
        jump_threshold: Minimum gap between neighbours to flag a jump.
        z: Standard errors a gap must also exceed to be flagged.
        tv_bins: Bins per latent axis for the TV probe.
        threads: Worker cap for the curve sweep.
    """
    seed = as_seed(seed)
    if not tasks:
        raise ConfigError("tasks", "need at least one task")
    report = regularity_probe(fact, cfg, seed.split(0))
    tv_table = tv_limit_probe(
        fact, cfg.x0, cfg.radii, cfg.n, seed.split(1), tv_bins, cfg.n_random_directions
    )
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[1] != fact.input_dim:
        grid = grid.reshape(-1, fact.input_dim)
    out = curves(fact, tasks, grid, n_curve, seed.split(2), threads)
    xs = grid[:, path_axis]
    reports = {}
    for task in tasks:
        pts = out[task.name]
        reports[task.name] = modulus_and_jumps(
            xs, [p.value for p in pts], [p.stderr for p in pts], jump_threshold, z
        )
    thresholds = cfg.thresholds()
    thresholds.update({"jump": jump_threshold, "jump_z": z})
    return Certificate(
        scenario or fact.name,
        report,
        tv_table,
        reports,
        out,
        thresholds,
        seed.as_dict(),
    )


@dataclass
class BatteryResult:
    """Certificates for a set of scenarios, each run against the same task battery."""

    certificates: dict

    @property
    def consistent_with_jumps(self) -> list:
        return [name for name, c in self.certificates.items() if c.implication_violated]

    @property
    def implication_holds(self) -> bool:
        return not self.consistent_with_jumps

    def to_dict(self) -> dict:
        return {
            "implication_holds": self.implication_holds,
            "consistent_with_jumps": self.consistent_with_jumps,
            "scenarios": {
                name: {
                    "verdict": c.regularity.verdict,
                    "jumps": {k: len(v) for k, v in c.jumps.items()},
                    "passed": c.passed,
                }
                for name, c in self.certificates.items()
            },
        }


def implication_battery(cases, seed, threads: Optional[int] = None) -> BatteryResult:
    """Certify several scenarios against their task batteries.

    Args:
        cases: Iterable of dicts with keys ``name``, ``factorization``,
            ``tasks``, ``config``, ``grid``, ``n_curve`` and optionally
            ``path_axis``.
        seed: Case ``i`` uses child ``i`` of this seed.
    """
    seed = as_seed(seed)
    certs = {}
    for i, case in enumerate(cases):
        certs[case["name"]] = continuity_certificate(
            case["factorization"],
            case["tasks"],
            case["config"],
            case["grid"],
            case["n_curve"],
            seed.split(i),
            scenario=case["name"],
            path_axis=case.get("path_axis", 0),
            threads=threads,
        )
    return BatteryResult(certs)
