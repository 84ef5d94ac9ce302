"""Configuration proposal: random search, grid search, and TPE.

TPE splits the ok trials into a good set G (top ceil(gamma * n) by objective)
and a bad set B, fits one density per dimension to each set on the encoded
coordinates, draws candidates from the good densities, and returns the
candidate maximizing sum_dims [ln l(z) - ln g(z)]. Everything runs on the
[0, 1] encodings, so one kernel form covers linear, log, and integer kinds;
categorical dimensions use add-one smoothed category frequencies.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import ndtr, ndtri

from .hpspace import Configuration
from .trials import RoundHistory, Trial

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class GridExhausted(Exception):
    """Every lattice point has been proposed; the caller stops the round."""


class InsufficientHistoryError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerSpec:
    kind: str  # random | grid | tpe
    gamma_fraction: float = 0.25
    n_candidates: int = 24
    bandwidth_floor: float = 1e-3
    points_per_dim: Optional[int] = None
    n_startup: int = 10

    def __post_init__(self):
        if self.kind not in ("random", "grid", "tpe"):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if not (0.0 < self.gamma_fraction < 1.0):
            raise ValueError("gamma_fraction must be in (0, 1)")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if self.bandwidth_floor <= 0:
            raise ValueError("bandwidth_floor must be positive")
        if self.kind == "grid":
            if self.points_per_dim is None or self.points_per_dim < 2:
                raise ValueError("grid needs points_per_dim >= 2")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "gamma_fraction": self.gamma_fraction,
            "n_candidates": self.n_candidates,
            "bandwidth_floor": self.bandwidth_floor,
            "points_per_dim": self.points_per_dim,
            "n_startup": self.n_startup,
        }

    @staticmethod
    def from_json(d: dict) -> "SamplerSpec":
        return SamplerSpec(
            kind=d["kind"],
            gamma_fraction=d.get("gamma_fraction", 0.25),
            n_candidates=d.get("n_candidates", 24),
            bandwidth_floor=d.get("bandwidth_floor", 1e-3),
            points_per_dim=d.get("points_per_dim"),
            n_startup=d.get("n_startup", 10),
        )


def tpe_split(
    history: RoundHistory, gamma_fraction: float
) -> Tuple[List[Trial], List[Trial]]:
    """Split ok trials into (good, bad) at the ceil(gamma * n)-th best.

    Ties at the cut resolve by smaller trial_id into the good set. Raises
    InsufficientHistoryError below 2 ok trials.
    """
    ok = history.ok_trials()
    if len(ok) < 2:
        raise InsufficientHistoryError("tpe_split needs at least 2 ok trials")
    n_good = math.ceil(gamma_fraction * len(ok))
    ranked = sorted(ok, key=lambda t: (-t.objective, t.trial_id))
    return ranked[:n_good], ranked[n_good:]


class _NumericKDE:
    """Gaussian mixture on [0, 1], truncated and renormalized per component,
    mixed with one uniform pseudo-component (the domain prior).

    Bandwidth follows Scott's rule max(n^(-1/5) * sigma, floor). sigma is the
    per-dimension spread of the whole round's ok trials, not of the fitted
    subset alone: a concentrated good set would otherwise drive its own
    bandwidth to the floor and freeze the proposals.
    """

    def __init__(self, centers: np.ndarray, floor: float, sigma: float):
        self.centers = np.asarray(centers, dtype=float)
        n = len(self.centers)
        self.bandwidth = max(n ** (-0.2) * sigma, floor) if n else floor
        if n:
            b = self.bandwidth
            self._flo = ndtr((0.0 - self.centers) / b)
            self._fhi = ndtr((1.0 - self.centers) / b)

    def pdf(self, z: float) -> float:
        n = len(self.centers)
        if n == 0:
            return 1.0
        b = self.bandwidth
        t = (z - self.centers) / b
        comp = np.exp(-0.5 * t * t) / (_SQRT_2PI * b)
        comp = comp / (self._fhi - self._flo)
        # Uniform prior enters as one extra component of density 1.
        return float((np.sum(comp) + 1.0) / (n + 1))

    def sample(self, rng: np.random.Generator) -> float:
        n = len(self.centers)
        if n == 0:
            return float(rng.random())
        i = int(rng.integers(0, n + 1))
        if i == n:  # prior component
            return float(rng.random())
        u = float(rng.random())
        lo, hi = self._flo[i], self._fhi[i]
        z = self.centers[i] + self.bandwidth * float(ndtri(lo + u * (hi - lo)))
        return min(max(z, 0.0), 1.0)


class _CategoricalPMF:
    """Add-one smoothed category frequencies on the midpoint encoding."""

    def __init__(self, encoded: np.ndarray, n_choices: int):
        counts = np.zeros(n_choices)
        for z in encoded:
            counts[min(int(z * n_choices), n_choices - 1)] += 1
        self.probs = (counts + 1.0) / (counts.sum() + n_choices)
        self.n_choices = n_choices

    def pdf(self, z: float) -> float:
        idx = min(int(z * self.n_choices), self.n_choices - 1)
        return float(self.probs[idx])

    def sample(self, rng: np.random.Generator) -> float:
        idx = int(rng.choice(self.n_choices, p=self.probs))
        return (idx + 0.5) / self.n_choices


def _fit_densities(specs, X: np.ndarray, floor: float, sigmas: np.ndarray):
    out = []
    for i, p in enumerate(specs):
        col = X[:, i] if len(X) else np.empty(0)
        if p.kind == "categorical":
            out.append(_CategoricalPMF(col, len(p.choices)))
        else:
            out.append(_NumericKDE(col, floor, float(sigmas[i])))
    return out


def _grid_values(p, points_per_dim: int):
    if p.kind == "categorical":
        return list(p.choices)
    zs = [j / (points_per_dim - 1) for j in range(points_per_dim)]
    values = []
    for z in zs:
        v = p.decode(z)
        if v not in values:  # integer grids can collide
            values.append(v)
    return values


def _ask_grid(spec: SamplerSpec, domain, history: RoundHistory) -> Configuration:
    specs = domain.active_specs()
    axes = [_grid_values(p, spec.points_per_dim) for p in specs]
    visited = {
        tuple(t.config.values[p.name] for p in specs) for t in history.trials
    }
    for point in itertools.product(*axes):
        if point not in visited:
            return domain.complete({p.name: v for p, v in zip(specs, point)})
    raise GridExhausted(f"all {math.prod(len(a) for a in axes)} lattice points proposed")


def _ask_tpe(
    spec: SamplerSpec, domain, history: RoundHistory, rng: np.random.Generator
) -> Configuration:
    ok = history.ok_trials()
    if len(ok) < max(spec.n_startup, 2):
        return domain.sample_uniform(rng)
    good, bad = tpe_split(history, spec.gamma_fraction)
    specs = domain.active_specs()
    Xg = np.array([domain.encode_active(t.config) for t in good])
    Xb = (
        np.array([domain.encode_active(t.config) for t in bad])
        if bad
        else np.empty((0, len(specs)))
    )
    X_all = np.vstack([Xg, Xb])
    sigmas = np.std(X_all, axis=0, ddof=1)
    l_fits = _fit_densities(specs, Xg, spec.bandwidth_floor, sigmas)
    g_fits = _fit_densities(specs, Xb, spec.bandwidth_floor, sigmas)

    best_score = -math.inf
    best_z = None
    for _ in range(spec.n_candidates):
        z = np.array([l_fits[i].sample(rng) for i in range(len(specs))])
        score = sum(
            math.log(l_fits[i].pdf(z[i])) - math.log(g_fits[i].pdf(z[i]))
            for i in range(len(specs))
        )
        if score > best_score:
            best_score, best_z = score, z
    return domain.complete(
        {p.name: p.decode(best_z[i]) for i, p in enumerate(specs)}
    )


def ask(
    spec: SamplerSpec, domain, history: RoundHistory, rng: np.random.Generator
) -> Configuration:
    """Propose the next configuration for this round.

    random: uniform draw on the (sub)space.
    grid: next unvisited lattice point in row-major order over encoded dims;
        raises GridExhausted once every point has been proposed.
    tpe: uniform until n_startup ok trials exist, then the density-ratio
        argmax over n_candidates draws from the good-set densities.
    """
    if spec.kind == "random":
        return domain.sample_uniform(rng)
    if spec.kind == "grid":
        return _ask_grid(spec, domain, history)
    return _ask_tpe(spec, domain, history, rng)
