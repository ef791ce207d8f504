"""Randomized one-to-one matching markets solved by deferred acceptance.

Every agent has a feature vector and a continuous preference function over
the other side's features; agent ``i`` prefers ``j`` to ``k`` when
``P_i(X_j) > P_i(X_k)``. The focal man's features are the input ``x``; all
other features and every preference parameter form the noise, encoded as a
block of U[0,1] variates and decoded through quantile maps. The latent value
is the focal man's partner's feature vector under men-proposing deferred
acceptance, which is the man-optimal stable matching.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtri

from regulab import kernels
from regulab.dgp import Box, Factorization, LatentSpace, evaluate_common
from regulab.errors import ConfigError, DegenerateDrawError
from regulab.metrics import probe_directions, probe_points
from regulab.sampling import DistributionSpec, as_seed, draw, gaussian, uniform
from regulab.scenarios.base import Scenario, line_grid

PREFERENCE_KINDS = ("linear", "bump", "step", "custom")


@dataclass(frozen=True)
class MarketSpec:
    """How random markets are generated.

    ``step`` is a deliberately discontinuous family (a fixed jump of height
    ``step_height`` where the first feature crosses 0) kept as a negative
    control. ``custom`` takes ``custom_preference(params, features)`` with
    ``custom_params`` U[0,1] parameters per agent and requires
    ``unchecked=True``: nothing verifies its continuity or strictness.
    """

    n_agents: int = 3
    feature_dim: int = 2
    feature_dist: Optional[DistributionSpec] = None
    preference: str = "linear"
    focal: int = 0
    identical_women: bool = False
    bump_amplitude: tuple = (0.0, 2.0)
    bump_scale: tuple = (0.5, 1.5)
    step_height: float = 5.0
    domain_half_width: float = 3.0
    custom_preference: Optional[Callable] = field(default=None, compare=False)
    custom_params: int = 0
    unchecked: bool = False

    def __post_init__(self):
        if self.n_agents < 1:
            raise ConfigError("matching.n_agents", "must be at least 1")
        if self.feature_dim < 1:
            raise ConfigError("matching.feature_dim", "must be at least 1")
        if not 0 <= self.focal < self.n_agents:
            raise ConfigError("matching.focal", "must index one of the men")
        if self.preference not in PREFERENCE_KINDS:
            raise ConfigError("matching.preference", f"choose from {PREFERENCE_KINDS}")
        if self.feature_dist is None:
            object.__setattr__(self, "feature_dist", gaussian(0.0, 1.0, self.feature_dim))
        fd = self.feature_dist
        if not fd.is_continuous:
            raise ConfigError(
                "matching.feature_dist",
                "feature laws must be absolutely continuous w.r.t. Lebesgue measure",
            )
        if fd.dimension != self.feature_dim:
            raise ConfigError("matching.feature_dist", "dimension must equal feature_dim")
        if self.preference == "custom":
            if not self.unchecked:
                raise ConfigError(
                    "matching.unchecked",
                    "custom preference functions are not verified; set unchecked=True",
                )
            if self.custom_preference is None or self.custom_params < 0:
                raise ConfigError("matching.custom_preference", "custom preference needs a callable")

    @property
    def params_per_agent(self) -> int:
        d = self.feature_dim
        if self.preference == "bump":
            return 2 * d + 2
        if self.preference == "custom":
            return self.custom_params
        return d

    @property
    def n_women_features(self) -> int:
        return 1 if self.identical_women else self.n_agents

    @property
    def noise_dim(self) -> int:
        n, d = self.n_agents, self.feature_dim
        return (n - 1) * d + self.n_women_features * d + 2 * n * self.params_per_agent


@dataclass(frozen=True)
class Preference:
    """One agent's preference function over feature vectors."""

    kind: str
    weights: np.ndarray
    center: Optional[np.ndarray] = None
    scale: float = 1.0
    amplitude: float = 0.0
    step_height: float = 0.0
    custom: Optional[Callable] = field(default=None, compare=False)
    params: Optional[np.ndarray] = None

    def __call__(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=float))
        return _score(
            self.kind,
            x[None, None],
            self.weights[None, None],
            None if self.center is None else self.center[None, None],
            np.array([[self.scale]]),
            np.array([[self.amplitude]]),
            self.step_height,
            self.custom,
            None if self.params is None else self.params[None, None],
        )[0, 0]


def _score(kind, feats, w, center, scale, amp, step_height, custom, params):
    """Scores ``P_i(X_j)``: ``feats`` is (M, 1, n, d); params are (M, n, d)-shaped.

    Returns an (M, n_agents, n_candidates) array.
    """
    if kind == "custom":
        return np.asarray(custom(params[:, :, None, :], feats), dtype=float)
    s = np.einsum("mid,mjd->mij", w, feats[:, 0])
    if kind == "bump":
        diff = feats - center[:, :, None, :]
        sq = np.sum(diff * diff, axis=-1)
        s = s + amp[:, :, None] * np.exp(-sq / (2.0 * scale[:, :, None] ** 2))
    elif kind == "step":
        s = s + step_height * (feats[..., 0] >= 0.0)
    return s


@dataclass
class _Batch:
    men_features: np.ndarray  # (M, n, d)
    women_features: np.ndarray  # (M, n, d)
    men_params: dict
    women_params: dict


def _decode_params(spec: MarketSpec, u: np.ndarray) -> dict:
    """U[0,1] block of shape (M, n, p) -> preference parameters."""
    d = spec.feature_dim
    if spec.preference == "custom":
        return {"params": u}
    out = {"w": ndtri(u[..., :d])}
    if spec.preference == "bump":
        lo, hi = spec.bump_amplitude
        slo, shi = spec.bump_scale
        out["center"] = ndtri(u[..., d : 2 * d])
        out["scale"] = slo + u[..., 2 * d] * (shi - slo)
        out["amp"] = lo + u[..., 2 * d + 1] * (hi - lo)
    return out


def _decode(spec: MarketSpec, x_rows: np.ndarray, r: np.ndarray) -> _Batch:
    M = r.shape[0]
    n, d, p = spec.n_agents, spec.feature_dim, spec.params_per_agent
    fd = spec.feature_dist
    pos = 0

    def take(size):
        nonlocal pos
        block = r[:, pos : pos + size]
        pos += size
        return block

    others = fd.quantile(take((n - 1) * d).reshape(M * (n - 1), d)).reshape(M, n - 1, d)
    men = np.insert(others, spec.focal, x_rows, axis=1) if n > 1 else x_rows[:, None, :].copy()
    wf = fd.quantile(take(spec.n_women_features * d).reshape(-1, d)).reshape(M, -1, d)
    women = np.repeat(wf, n, axis=1) if spec.identical_women else wf
    men_params = _decode_params(spec, take(n * p).reshape(M, n, p))
    women_params = _decode_params(spec, take(n * p).reshape(M, n, p))
    return _Batch(men, women, men_params, women_params)


def _scores_from(spec, params, feats):
    return _score(
        spec.preference,
        feats[:, None],
        params.get("w"),
        params.get("center"),
        params.get("scale"),
        params.get("amp"),
        spec.step_height,
        spec.custom_preference,
        params.get("params"),
    )


def _order(scores: np.ndarray, cand_feats: np.ndarray):
    """Best-first preference lists plus rows holding a genuine tie.

    Ties between candidates with identical feature vectors are broken by
    index: the latent value (a feature vector) does not depend on the choice.
    """
    order = np.argsort(-scores, axis=2, kind="stable")
    ranked = np.take_along_axis(scores, order, axis=2)
    tied = ranked[..., 1:] == ranked[..., :-1]
    if not tied.any():
        return order, np.zeros(scores.shape[0], dtype=bool)
    m, i, k = np.nonzero(tied)
    a = order[m, i, k]
    b = order[m, i, k + 1]
    same = np.all(cand_feats[m, a] == cand_feats[m, b], axis=-1)
    bad = np.zeros(scores.shape[0], dtype=bool)
    bad[m[~same]] = True
    return order, bad


def _solve(spec: MarketSpec, batch: _Batch) -> np.ndarray:
    """Wife index of every man in every market, shape (M, n)."""
    men_scores = _scores_from(spec, batch.men_params, batch.women_features)
    women_scores = _scores_from(spec, batch.women_params, batch.men_features)
    men_pref, bad_m = _order(men_scores, batch.women_features)
    women_order, bad_w = _order(women_scores, batch.men_features)
    bad = bad_m | bad_w
    if bad.any():
        raise DegenerateDrawError(np.flatnonzero(bad))
    women_rank = np.argsort(women_order, axis=2, kind="stable")
    return kernels.deferred_acceptance_batch(
        np.ascontiguousarray(men_pref, dtype=np.int64),
        np.ascontiguousarray(women_rank, dtype=np.int64),
    )


def _partner_map(spec: MarketSpec):
    def t_map(x_rows, r):
        batch = _decode(spec, np.asarray(x_rows, dtype=float), r)
        return _solve(spec, batch)[:, spec.focal]

    return t_map


def _partner_features_map(spec: MarketSpec):
    def t_map(x_rows, r):
        batch = _decode(spec, np.asarray(x_rows, dtype=float), r)
        wife = _solve(spec, batch)[:, spec.focal]
        return batch.women_features[np.arange(r.shape[0]), wife]

    return t_map


def _domain(spec: MarketSpec) -> Box:
    h = spec.domain_half_width
    return Box([-h] * spec.feature_dim, [h] * spec.feature_dim)


def matching_factorization(spec: MarketSpec = MarketSpec()) -> Factorization:
    """Focal man's partner's features as a function of his own features and the noise.

    Matches are compared by identity for regularity purposes, so the latent
    space is continuous with exact-equality semantics.
    """
    return Factorization(
        _domain(spec),
        uniform(0.0, 1.0, spec.noise_dim),
        _partner_features_map(spec),
        LatentSpace.continuous(spec.feature_dim, exact_equality=True),
        name=f"matching-{spec.preference}",
    )


def matching_label_factorization(spec: MarketSpec = MarketSpec()) -> Factorization:
    """Same process, latent value = index of the focal man's partner."""
    return Factorization(
        _domain(spec),
        uniform(0.0, 1.0, spec.noise_dim),
        _partner_map(spec),
        LatentSpace.discrete(range(spec.n_agents)),
        name=f"matching-{spec.preference}-labels",
    )


def matching_scenario(spec: MarketSpec = MarketSpec(), points: int = 41, half_width: float = 2.0) -> Scenario:
    x0 = tuple([0.0] * spec.feature_dim)
    return Scenario(
        "matching",
        matching_factorization(spec),
        uniform(-1.0, 1.0, spec.feature_dim),
        x0,
        line_grid(-half_width, half_width, points, base=x0, axis=0),
        0,
        (-2.5, 2.5),
    )


# ---------------------------------------------------------------------------
# explicit single markets
# ---------------------------------------------------------------------------


@dataclass
class MatchingMarket:
    men_features: np.ndarray
    women_features: np.ndarray
    men_prefs: list
    women_prefs: list
    focal: int = 0

    @property
    def n(self) -> int:
        return self.men_features.shape[0]

    def men_scores(self) -> np.ndarray:
        """``[i, j] = P_{man i}(X_{woman j})``."""
        return np.stack([p(self.women_features) for p in self.men_prefs])

    def women_scores(self) -> np.ndarray:
        return np.stack([p(self.men_features) for p in self.women_prefs])


@dataclass
class MatchOutcome:
    wife: np.ndarray
    focal_partner_features: np.ndarray

    @property
    def husband(self) -> np.ndarray:
        h = np.empty_like(self.wife)
        h[self.wife] = np.arange(self.wife.size)
        return h


def _preferences(spec: MarketSpec, params: dict, n: int) -> list:
    prefs = []
    for i in range(n):
        if spec.preference == "custom":
            prefs.append(Preference("custom", np.zeros(0), custom=spec.custom_preference,
                                    params=params["params"][0, i]))
        elif spec.preference == "bump":
            prefs.append(Preference("bump", params["w"][0, i], params["center"][0, i],
                                    float(params["scale"][0, i]), float(params["amp"][0, i])))
        else:
            prefs.append(Preference(spec.preference, params["w"][0, i],
                                    step_height=spec.step_height if spec.preference == "step" else 0.0))
    return prefs


def random_market(spec: MarketSpec, seed) -> MatchingMarket:
    """One market with every feature and preference drawn at random."""
    seed = as_seed(seed)
    x = draw(spec.feature_dist, seed.split(0), 1)
    r = draw(uniform(0.0, 1.0, spec.noise_dim), seed.split(1), 1)
    b = _decode(spec, x, r)
    return MatchingMarket(
        b.men_features[0],
        b.women_features[0],
        _preferences(spec, b.men_params, spec.n_agents),
        _preferences(spec, b.women_params, spec.n_agents),
        spec.focal,
    )


def deferred_acceptance(market: MatchingMarket) -> MatchOutcome:
    """Men-proposing deferred acceptance on one market.

    Raises:
        DegenerateDrawError: two candidates with different features tie.
    """
    ms = market.men_scores()[None]
    ws = market.women_scores()[None]
    men_pref, bad_m = _order(ms, market.women_features[None])
    women_order, bad_w = _order(ws, market.men_features[None])
    if bad_m[0] or bad_w[0]:
        raise DegenerateDrawError([0])
    women_rank = np.argsort(women_order, axis=2, kind="stable")
    wife = kernels.deferred_acceptance_batch(
        np.ascontiguousarray(men_pref, dtype=np.int64), np.ascontiguousarray(women_rank, dtype=np.int64)
    )[0]
    return MatchOutcome(wife, market.women_features[wife[market.focal]].copy())


def blocking_pairs(market: MatchingMarket, outcome: MatchOutcome) -> list:
    """Every ``(man, woman)`` pair who strictly prefer each other to their partners."""
    ms = market.men_scores()
    ws = market.women_scores()
    wife = outcome.wife
    husband = outcome.husband
    pairs = []
    for m in range(market.n):
        for w in range(market.n):
            if wife[m] == w:
                continue
            if ms[m, w] > ms[m, wife[m]] and ws[w, m] > ws[w, husband[w]]:
                pairs.append((m, w))
    return pairs


# ---------------------------------------------------------------------------
# perturbation probe
# ---------------------------------------------------------------------------


@dataclass
class MatchingProbeTable:
    rows: list
    trials: int
    threshold: float
    sigma: float
    resampled: int

    @property
    def fractions(self):
        return [row["change_fraction"] for row in self.rows]

    @property
    def strictly_decreasing(self) -> bool:
        f = self.fractions
        return all(b < a for a, b in zip(f, f[1:]))

    @property
    def monotone_within_noise(self) -> bool:
        return all(
            b["change_fraction"]
            <= a["change_fraction"] + self.sigma * float(np.hypot(a["stderr"], b["stderr"]))
            for a, b in zip(self.rows, self.rows[1:])
        )

    @property
    def final_fraction(self) -> float:
        """Change fraction at the smallest strictly positive radius."""
        positive = [row for row in self.rows if row["radius"] > 0]
        return positive[-1]["change_fraction"] if positive else 0.0

    @property
    def passed(self) -> bool:
        return self.monotone_within_noise and self.final_fraction < self.threshold

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "trials": self.trials,
            "threshold": self.threshold,
            "resampled": self.resampled,
            "strictly_decreasing": self.strictly_decreasing,
            "final_fraction": self.final_fraction,
            "passed": self.passed,
        }


def matching_regularity_probe(
    spec: MarketSpec,
    x0,
    radii,
    trials: int,
    seed,
    threshold: float = 0.05,
    sigma: float = 2.0,
    n_random_directions: Optional[int] = None,
) -> MatchingProbeTable:
    """Fraction of trials whose focal match changes when ``x0`` moves by each radius.

    Each trial's noise is shared across ``x0`` and every perturbed input.
    The fraction reported per radius is the maximum over probe directions.
    """
    seed = as_seed(seed)
    fact = matching_label_factorization(spec)
    x0 = fact.point(x0)
    dirs = probe_directions(fact.input_dim, seed.split(1), n_random_directions)
    radii = [float(r) for r in radii]
    if any(r < 0 for r in radii) or any(b > a for a, b in zip(radii, radii[1:])):
        raise ConfigError("radii", "must be non-negative and decreasing")
    groups = [probe_points(fact, x0, r, dirs) if r > 0 else x0[None, :] for r in radii]
    points = [x0] + [p for g in groups for p in g]
    _, labels, resampled = evaluate_common(fact, points, int(trials), seed.split(0))
    base = labels[0]
    rows = []
    k = 1
    for r, g in zip(radii, groups):
        fr = [float(np.mean(lab != base)) for lab in labels[k : k + len(g)]]
        k += len(g)
        p = max(fr)
        rows.append({
            "radius": r,
            "change_fraction": p,
            "stderr": float(np.sqrt(p * (1 - p) / trials)),
            "directions": len(g),
        })
    return MatchingProbeTable(rows, int(trials), threshold, sigma, resampled)
