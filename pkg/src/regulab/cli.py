"""Command-line front door: ``regulab {curve,certify,whiten,probe,matching-probe}``.

Exit codes are a stable contract: 0 success or pass, 1 runtime error,
2 configuration error, 3 certified fail (certificate, whiteness check or
matching probe did not pass).
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from regulab import __version__, tasks as task_lib
from regulab.config import ScenarioConfig, load, resolve_factory, validate
from regulab.dgp import curves
from regulab.errors import ConfigError, RegulabError
from regulab.io import RunManifest, read_xr_csv, write_csv, write_json
from regulab.metrics import modulus_and_jumps, tv_limit_probe
from regulab.regularity import RegularityConfig, continuity_certificate, regularity_probe
from regulab.sampling import DistributionSpec, as_seed, categorical, gaussian, uniform
from regulab.scenarios import (
    MarketSpec,
    Scenario,
    coupled_noise,
    matching_regularity_probe,
    matching_scenario,
    shifted_noise,
    white_noise,
)
from regulab.scenarios.base import line_grid
from regulab.scenarios.frac import frac_l1, frac_l2
from regulab.whitening import (
    BinningConfig,
    ConditionalCdfChain,
    WhitenedFactorization,
    fit_chain,
    verify_whiteness,
)

log = logging.getLogger("regulab")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_FAIL = 3

# sample counts when the config leaves them unset: (full, floor under --quick)
DEFAULT_CURVE_N = {"frac_l1": 100_000, "frac_l2": 100_000, "matching": 20_000, "custom": 20_000}
DEFAULT_CERTIFY_N = 20_000
DEFAULT_PROBE_N = 20_000
QUICK_FLOOR = 1_000


# ---------------------------------------------------------------------------
# building blocks from config
# ---------------------------------------------------------------------------


def _distribution(cfg, dim: int) -> DistributionSpec:
    if cfg.kind == "uniform":
        return uniform(cfg.lo, cfg.hi, dim)
    if cfg.kind == "gaussian":
        return gaussian(cfg.mean, cfg.std, dim)
    return categorical(cfg.weights or [1.0])


def market_spec(cfg: ScenarioConfig) -> MarketSpec:
    m = cfg.matching
    return MarketSpec(
        n_agents=m.n_agents,
        feature_dim=m.feature_dim,
        feature_dist=_distribution(m.feature_dist, m.feature_dim),
        preference=m.preference,
        focal=m.focal,
        identical_women=m.identical_women,
        bump_amplitude=tuple(m.bump_amplitude),
        bump_scale=tuple(m.bump_scale),
        step_height=m.step_height,
    )


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    """The configured scenario, with the grid override applied."""
    if cfg.scenario == "frac_l1":
        sc = frac_l1(cfg.frac.x_lo, cfg.frac.x_hi)
    elif cfg.scenario == "frac_l2":
        sc = frac_l2(cfg.frac.x_lo, cfg.frac.x_hi)
    elif cfg.scenario == "matching":
        sc = matching_scenario(market_spec(cfg))
    else:
        sc = resolve_factory(cfg.custom.factory)()
        if not isinstance(sc, Scenario):
            raise ConfigError("custom.factory", "factory must return a Scenario")
    if cfg.grid is not None:
        base = sc.x0 if sc.factorization.input_dim > 1 else None
        grid = line_grid(cfg.grid.lo, cfg.grid.hi, cfg.grid.points, base=base, axis=sc.path_axis)
        sc = Scenario(sc.name, sc.factorization, sc.x_dist, sc.x0, grid, sc.path_axis, sc.latent_range)
    return sc


def build_tasks(cfg: ScenarioConfig, sc: Scenario):
    seed = as_seed(cfg.seed).split(99)
    if cfg.tasks:
        return [task_lib.from_config(t.model_dump(), seed.split(i)) for i, t in enumerate(cfg.tasks)]
    if cfg.scenario == "matching":
        return [task_lib.indicator(0.0, np.inf)]
    return [task_lib.frac()]


def regularity_config(cfg: ScenarioConfig, sc: Scenario, quick: bool) -> RegularityConfig:
    r = cfg.regularity
    return RegularityConfig(
        x0=tuple(r.x0) if r.x0 is not None else sc.x0,
        radii=tuple(r.radii),
        tau_grid=tuple(r.tau_grid),
        n=_scaled(r.n, cfg, quick),
        density_bins=r.density_bins,
        D_bound=r.D_bound,
        threshold=r.threshold,
        sigma=r.sigma,
        growth=r.growth,
        n_random_directions=r.n_random_directions,
    )


def _scaled(n: int, cfg: ScenarioConfig, quick: bool) -> int:
    if not quick:
        return int(n)
    return max(min(int(n), QUICK_FLOOR), int(n * cfg.samples.quick_scale))


def slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_") or "task"


def _vega_sidecar(csv_name: str, title: str) -> dict:
    return {
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "title": title,
        "data": {"url": csv_name, "format": {"type": "csv"}},
        "layer": [
            {
                "mark": "errorband",
                "encoding": {
                    "x": {"field": "x", "type": "quantitative"},
                    "y": {"field": "lower", "type": "quantitative"},
                    "y2": {"field": "upper"},
                },
                "transform": [
                    {"calculate": "datum.value - 2 * datum.stderr", "as": "lower"},
                    {"calculate": "datum.value + 2 * datum.stderr", "as": "upper"},
                ],
            },
            {
                "mark": "line",
                "encoding": {
                    "x": {"field": "x", "type": "quantitative"},
                    "y": {"field": "value", "type": "quantitative", "title": "E[f(L) | X = x]"},
                },
            },
        ],
    }


def _point_columns(prefix: str, dim: int):
    return [prefix] if dim == 1 else [f"{prefix}{i}" for i in range(dim)]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_curve(cfg: ScenarioConfig, out: Path, quick: bool, threads) -> int:
    sc = build_scenario(cfg)
    tasks = build_tasks(cfg, sc)
    n = _scaled(cfg.samples.curve or DEFAULT_CURVE_N[cfg.scenario], cfg, quick)
    manifest = RunManifest("curve", cfg.digest(), cfg.seed)
    with manifest.timed("curves"):
        result = curves(sc.factorization, tasks, sc.grid, n, as_seed(cfg.seed), threads)
    xs = sc.path_coords()
    summary = {"scenario": sc.name, "n": n, "tasks": {}}
    for task in tasks:
        pts = result[task.name]
        name = f"curve_{slug(task.name)}"
        path = write_csv(
            out / f"{name}.csv",
            ["x", "value", "stderr", "n"],
            ([x, p.value, p.stderr, p.n] for x, p in zip(xs, pts)),
        )
        manifest.record(f"{name}.csv", path)
        side = write_json(out / f"{name}.vl.json", _vega_sidecar(path.name, f"{sc.name}: {task.name}"))
        manifest.record(f"{name}.vl.json", side)
        rep = modulus_and_jumps(
            xs, [p.value for p in pts], [p.stderr for p in pts], cfg.jumps.threshold, cfg.jumps.z
        )
        summary["tasks"][task.name] = {
            "csv": path.name,
            "max_modulus": rep.max_modulus,
            "jumps": [
                {"between": [xs[j.index], xs[j.index + 1]], "size": j.size, "left": j.left, "right": j.right}
                for j in rep.jumps
            ],
        }
        print(f"{task.name}: {len(pts)} points, {len(rep.jumps)} jump(s) flagged")
        for j in rep.jumps:
            print(f"  jump between x={xs[j.index]!r} and x={xs[j.index + 1]!r}: "
                  f"{j.left:.4f} -> {j.right:.4f} (size {j.size:.4f})")
    spath = write_json(out / "curve_summary.json", summary)
    manifest.record("curve_summary.json", spath)
    manifest.write(out)
    return EXIT_OK


def cmd_certify(cfg: ScenarioConfig, out: Path, quick: bool, threads) -> int:
    sc = build_scenario(cfg)
    tasks = build_tasks(cfg, sc)
    rcfg = regularity_config(cfg, sc, quick)
    n = _scaled(cfg.samples.certify_curve or DEFAULT_CERTIFY_N, cfg, quick)
    manifest = RunManifest("certify", cfg.digest(), cfg.seed)
    with manifest.timed("certificate"):
        cert = continuity_certificate(
            sc.factorization,
            tasks,
            rcfg,
            sc.grid,
            n,
            cfg.seed,
            scenario=sc.name,
            path_axis=sc.path_axis,
            jump_threshold=cfg.jumps.threshold,
            z=cfg.jumps.z,
            tv_bins=cfg.probe.bins,
            threads=threads,
        )
    path = write_json(out / "certificate.json", cert.to_dict())
    manifest.record("certificate.json", path)
    manifest.write(out)
    status = "PASS" if cert.passed else "FAIL"
    print(f"{sc.name}: regularity {cert.regularity.verdict}; "
          f"{sum(len(j) for j in cert.jumps.values())} jump(s); certificate {status}")
    for reason in cert.regularity.reasons:
        print(f"  {reason}")
    return EXIT_OK if cert.passed else EXIT_FAIL


def cmd_probe(cfg: ScenarioConfig, out: Path, quick: bool, threads) -> int:
    sc = build_scenario(cfg)
    fact = sc.factorization
    rcfg = regularity_config(cfg, sc, quick)
    n = _scaled(cfg.samples.probe or DEFAULT_PROBE_N, cfg, quick)
    seed = as_seed(cfg.seed)
    manifest = RunManifest("probe", cfg.digest(), cfg.seed)
    dim = fact.input_dim
    with manifest.timed("tv"):
        table = tv_limit_probe(fact, rcfg.x0, cfg.probe.radii, n, seed.split(0), cfg.probe.bins,
                               rcfg.n_random_directions)
    path = write_csv(
        out / "tv.csv",
        ["radius", "binned_tv"] + _point_columns("worst_x", dim),
        ([row.radius, row.tv, *row.worst_point] for row in table.rows),
    )
    manifest.record("tv.csv", path)
    print("radius,binned_tv")
    for row in table.rows:
        print(f"{row.radius!r},{row.tv:.4f}")
    with manifest.timed("regularity"):
        rep = regularity_probe(fact, rcfg, seed.split(1))
    if rep.kind == "discrete":
        rows = rep.tables["mismatch"]
        path = write_csv(
            out / "regularity.csv",
            ["radius", "mismatch", "stderr"] + _point_columns("worst_x", dim),
            ([r["radius"], r["mismatch"], r["stderr"], *r["worst_point"]] for r in rows),
        )
    else:
        rows = rep.tables["exceedance"]
        path = write_csv(
            out / "regularity.csv",
            ["radius", "tau", "exceedance", "stderr"] + _point_columns("worst_x", dim),
            ([r["radius"], r["tau"], r["exceedance"], r["stderr"], *r["worst_point"]] for r in rows),
        )
        dens = rep.tables["density"]
        dpath = write_csv(
            out / "density.csv",
            _point_columns("x", dim) + ["estimate", "growth_1", "growth_2"],
            ([*d["x"], d["estimate"], *d["growth"]] for d in dens),
        )
        manifest.record("density.csv", dpath)
    manifest.record("regularity.csv", path)
    summary = write_json(out / "probe_summary.json", {
        "scenario": sc.name,
        "x0": list(rcfg.x0),
        "tv": table.to_records(),
        "tv_metadata": table.metadata,
        "regularity": {"kind": rep.kind, "verdict": rep.verdict, "reasons": rep.reasons,
                       "density": rep.density},
    })
    manifest.record("probe_summary.json", summary)
    manifest.write(out)
    print(f"regularity ({rep.kind}): {rep.verdict}")
    return EXIT_OK


def cmd_matching_probe(cfg: ScenarioConfig, out: Path, quick: bool, threads) -> int:
    spec = market_spec(cfg)
    x0 = cfg.regularity.x0 if cfg.regularity.x0 is not None else [0.0] * spec.feature_dim
    trials = _scaled(cfg.matching.trials, cfg, quick)
    manifest = RunManifest("matching-probe", cfg.digest(), cfg.seed)
    with manifest.timed("probe"):
        table = matching_regularity_probe(
            spec, x0, cfg.matching.radii, trials, cfg.seed,
            threshold=cfg.regularity.threshold,
            n_random_directions=cfg.regularity.n_random_directions,
        )
    path = write_csv(
        out / "matching_probe.csv",
        ["radius", "change_fraction", "stderr", "directions"],
        ([r["radius"], r["change_fraction"], r["stderr"], r["directions"]] for r in table.rows),
    )
    manifest.record("matching_probe.csv", path)
    spath = write_json(out / "matching_probe.json", {"spec": spec.preference, **table.to_dict()})
    manifest.record("matching_probe.json", spath)
    manifest.write(out)
    print("radius,change_fraction")
    for r in table.rows:
        print(f"{r['radius']!r},{r['change_fraction']:.4f}")
    print(f"matching probe ({spec.preference} preferences): {'PASS' if table.passed else 'FAIL'}")
    return EXIT_OK if table.passed else EXIT_FAIL


GENERATORS = {"shifted": shifted_noise, "white": white_noise, "coupled": coupled_noise}


def _whiten_data(cfg: ScenarioConfig, quick: bool):
    """``(x_fit, r_fit, x_test, r_test, generator-or-None)``."""
    w = cfg.whiten
    seed = as_seed(cfg.seed)
    if w.source == "generated":
        gen = GENERATORS[w.generator]()
        n_fit = max(_scaled(w.n_fit, cfg, quick), 1000)
        n_test = _scaled(w.n_test, cfg, quick)
        xf, rf = gen.joint(n_fit, seed.split(0))
        xt, rt = gen.joint(n_test, seed.split(1))
        return xf, rf, xt, rt, gen
    x, r = read_xr_csv(w.csv, w.x_columns, w.r_columns)
    perm = seed.split(0).generator().permutation(x.shape[0])
    n_test = int(round(w.holdout_fraction * x.shape[0]))
    test, fit = perm[:n_test], perm[n_test:]
    if w.mode == "fit" and fit.size < 1000:
        raise ConfigError("whiten.csv", f"need at least 1000 fitting rows, have {fit.size}")
    return x[fit], r[fit], x[test], r[test], None


def cmd_whiten(cfg: ScenarioConfig, out: Path, quick: bool, threads) -> int:
    w = cfg.whiten
    manifest = RunManifest("whiten", cfg.digest(), cfg.seed)
    xf, rf, xt, rt, gen = _whiten_data(cfg, quick)
    k = rt.shape[1]
    with manifest.timed("chain"):
        if w.mode == "fit":
            chain = fit_chain(xf, rf, k, BinningConfig(w.bins.x_bins, w.bins.r_bins, w.bins.min_leaf))
        elif w.mode == "replay":
            path = Path(w.chain)
            if not path.exists():
                raise ConfigError("whiten.chain", f"{path} does not exist")
            chain = ConditionalCdfChain.load(path)
            if chain.k != k or chain.input_dim != xt.shape[1]:
                raise ConfigError("whiten.chain", "chain shape does not match the data columns")
        else:
            chain = ConditionalCdfChain.identity_chain(k, xt.shape[1])
    if w.mode == "fit":
        cpath = chain.save(out / "chain.npz")
        manifest.record("chain.npz", cpath)
    with manifest.timed("verify"):
        report = verify_whiteness(chain, xt, rt, w.ks_threshold, w.corr_threshold)
    result = {"mode": w.mode, "source": w.source, "k": k, "whiteness": report.to_dict()}
    if gen is not None:
        c, flags = chain.whiten(xt, rt, with_flags=True)
        keep = ~flags
        if keep.any():
            wf = WhitenedFactorization(gen, chain)
            err = np.abs(wf.t_prime(xt[keep], c[keep]) - gen.t_map(xt[keep], rt[keep]))
            result["composition_max_error"] = float(err.max())
        result["composition_rows"] = int(keep.sum())
    rpath = write_json(out / "whiteness.json", result)
    manifest.record("whiteness.json", rpath)
    manifest.write(out)
    ks = ", ".join(f"{v:.4f}" for v in report.ks)
    print(f"whiteness ({w.mode}): KS [{ks}], max |rank corr| {report.max_abs_corr:.4f}, "
          f"clamped {report.clamped_fraction:.4f}: {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_FAIL


COMMANDS = {
    "curve": cmd_curve,
    "certify": cmd_certify,
    "whiten": cmd_whiten,
    "probe": cmd_probe,
    "matching-probe": cmd_matching_probe,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regulab",
        description="Simulate factored data-generating processes and check regularity/continuity.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "curve": "estimate E[f(L) | X = x] on a grid and scan for jumps",
        "certify": "regularity probe + TV probe + jump scan; exit 3 on fail",
        "whiten": "fit, replay or identity-check a whitening chain",
        "probe": "TV-limit and regularity tables at x0",
        "matching-probe": "match-change fractions under shrinking perturbations",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", type=Path, help="YAML run configuration")
        p.add_argument("--scenario", choices=["frac_l1", "frac_l2", "matching", "custom"],
                       help="override the configured scenario")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", type=Path, help="output directory (overrides config)")
        p.add_argument("--quick", action="store_true", help="reduced sample counts")
        p.add_argument("--threads", type=int, help="worker cap (REGULAB_THREADS also applies)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> ScenarioConfig:
    cfg = load(args.config) if args.config else validate({})
    changes = {}
    if args.scenario:
        changes["scenario"] = args.scenario
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = str(args.out)
    if args.threads is not None:
        changes["threads"] = args.threads
    return cfg.updated(**changes) if changes else cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args.quick, cfg.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RegulabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - the exit-code contract covers every failure
        log.debug("unhandled", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
