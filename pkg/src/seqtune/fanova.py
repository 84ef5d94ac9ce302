"""Hyperparameter importance via functional ANOVA on a regression forest.

A regression tree fit on encoded configurations predicts the objective as a
piecewise-constant function over a partition of [0, 1]^d into hyperrectangle
cells. Under the uniform measure, every marginal of such a function is exact:

    marginal(U, x_U) = sum over leaves consistent with x_U of
                       leaf_mean * volume(cell restricted to dims not in U)

The variance decomposition follows the classical ANOVA expansion. With
f0 = marginal(all dims marginalized) the grand mean,

    unary component     f_i(x_i)       = marginal({i}, x_i) - f0
    pairwise component  f_ij(x_i, x_j) = marginal({i, j}, .) - f_i - f_j - f0

component variances integrate the squared components over the cell partition
(also exact: components are piecewise constant on the segment grid induced
by the leaf boundaries), and importances are the variance fractions V_U / V.
Forest importances average the per-tree fractions.

importance_bruteforce computes the same decomposition by direct summation
over a complete factorial table and serves as the ground-truth oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import rng as rngmod
from .hpspace import ConfigSpace
from .trials import RoundHistory


class InsufficientDataError(RuntimeError):
    pass


class MissingCellError(ValueError):
    pass


@dataclass
class ImportanceReport:
    """Variance fractions per hyperparameter and per unordered pair.

    degenerate is set when the fitted predictor has zero variance; all
    fractions are 0 in that case.
    """

    unary: Dict[str, float]
    pairwise: Dict[Tuple[str, str], float]
    total_variance: float
    degenerate: bool = False

    def to_json(self) -> dict:
        return {
            "unary": dict(self.unary),
            "pairwise": {f"{a}|{b}": v for (a, b), v in self.pairwise.items()},
            "total_variance": self.total_variance,
            "degenerate": self.degenerate,
        }

    @staticmethod
    def from_json(d: dict) -> "ImportanceReport":
        pairwise = {}
        for key, v in d.get("pairwise", {}).items():
            a, b = key.split("|")
            pairwise[(a, b)] = v
        return ImportanceReport(
            unary=dict(d["unary"]),
            pairwise=pairwise,
            total_variance=d["total_variance"],
            degenerate=d.get("degenerate", False),
        )


class RegressionTree:
    """Binary regression tree over [0, 1]^d with exact leaf cells.

    Splits minimize the summed within-child squared error; candidate
    thresholds are midpoints between sorted distinct coordinates; leaves
    have minimum size 1 and depth is unlimited, so a factorial design with
    distinct cell values is fit exactly.
    """

    def __init__(self, n_dims: int):
        self.n_dims = n_dims
        # Flat node arrays; index 0 is the root.
        self.feature: List[int] = []  # -1 for leaves
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.value: List[float] = []
        # Leaf cell arrays, filled by fit.
        self.leaf_lo: Optional[np.ndarray] = None
        self.leaf_hi: Optional[np.ndarray] = None
        self.leaf_mean: Optional[np.ndarray] = None

    def _add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RegressionTree":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        # Splits are chosen on standardized objectives so the structure does
        # not depend on the objective's scale or offset; leaf means are taken
        # from the raw values.
        sd = float(np.std(y))
        yn = (y - float(np.mean(y))) / sd if sd > 0.0 else np.zeros_like(y)
        lo = np.zeros(self.n_dims)
        hi = np.ones(self.n_dims)
        leaves: List[Tuple[np.ndarray, np.ndarray, float]] = []
        self._build(X, yn, y, lo, hi, leaves)
        self.leaf_lo = np.array([c[0] for c in leaves])
        self.leaf_hi = np.array([c[1] for c in leaves])
        self.leaf_mean = np.array([c[2] for c in leaves])
        return self

    def _build(self, X, yn, y, lo, hi, leaves) -> int:
        node = self._add_node()
        self.value[node] = float(np.mean(y))
        split = self._best_split(X, yn)
        if split is None:
            leaves.append((lo.copy(), hi.copy(), float(np.mean(y))))
            return node
        dim, thr = split
        mask = X[:, dim] < thr
        self.feature[node] = dim
        self.threshold[node] = thr
        left_hi = hi.copy()
        left_hi[dim] = thr
        right_lo = lo.copy()
        right_lo[dim] = thr
        self.left[node] = self._build(
            X[mask], yn[mask], y[mask], lo, left_hi, leaves
        )
        self.right[node] = self._build(
            X[~mask], yn[~mask], y[~mask], right_lo, hi, leaves
        )
        return node

    def _best_split(self, X, y):
        n = len(y)
        if n < 2 or np.ptp(y) == 0.0:
            return None
        best = None
        best_sse = math.inf
        # Center at the node: the shortcut q - s^2/n cancels catastrophically
        # off-center, and corrupted low bits would make tie-breaks erratic.
        yc = y - np.mean(y)
        total_sq_all = float(np.sum(yc * yc))
        band = 1e-9 * total_sq_all  # relative tie band, first candidate wins
        for dim in range(self.n_dims):
            order = np.argsort(X[:, dim], kind="stable")
            xs = X[order, dim]
            ys = yc[order]
            distinct = np.nonzero(np.diff(xs) > 0)[0]  # split after these positions
            if len(distinct) == 0:
                continue
            csum = np.cumsum(ys)
            csq = np.cumsum(ys * ys)
            total_sum, total_sq = csum[-1], csq[-1]
            for pos in distinct:
                nl = pos + 1
                nr = n - nl
                sl, ql = csum[pos], csq[pos]
                sr, qr = total_sum - sl, total_sq - ql
                sse = (ql - sl * sl / nl) + (qr - sr * sr / nr)
                if sse < best_sse - band:
                    best_sse = sse
                    best = (dim, 0.5 * (xs[pos] + xs[pos + 1]))
        return best

    def predict_one(self, x: np.ndarray) -> float:
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] < self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return self.value[node]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(x) for x in np.asarray(X, dtype=float)])

    def _consistent(self, dim: int, x: float) -> np.ndarray:
        lo = self.leaf_lo[:, dim]
        hi = self.leaf_hi[:, dim]
        # Cells are [lo, hi) except the topmost, which closes at 1.
        return (x >= lo) & ((x < hi) | ((hi == 1.0) & (x <= 1.0)))

    def marginal(self, U: Sequence[int], x_U: Sequence[float]) -> float:
        """Exact mean prediction over the complement of U under the uniform measure."""
        U = list(U)
        if not U:
            raise ValueError("U must be nonempty")
        widths = self.leaf_hi - self.leaf_lo
        volume = np.prod(widths, axis=1)
        keep = np.ones(len(self.leaf_mean), dtype=bool)
        for dim, x in zip(U, x_U):
            keep &= self._consistent(dim, float(x))
            volume = volume / widths[:, dim]
        return float(np.sum(self.leaf_mean[keep] * volume[keep]))


@dataclass
class Forest:
    trees: List[RegressionTree]
    n_trees: int
    seeds: List[int] = field(default_factory=list)


def _collect_ok(histories) -> List:
    if isinstance(histories, RoundHistory):
        histories = [histories]
    trials = []
    for h in histories:
        trials.extend(h.ok_trials())
    return trials


def fit_forest(
    histories,
    space: ConfigSpace,
    n_trees: int = 16,
    rng: Optional[np.random.Generator] = None,
    bootstrap: bool = True,
) -> Forest:
    """Fit n_trees regression trees on bootstrap resamples of the ok trials.

    Args:
        histories: one RoundHistory or an iterable of them (merged).
        space: the full ConfigSpace the trial configs live in.
        bootstrap: resample with replacement (same size) per tree; disable
            for the single-tree exact-fit oracle comparisons.

    Raises:
        InsufficientDataError: fewer than 2 ok trials.
    """
    trials = _collect_ok(histories)
    if len(trials) < 2:
        raise InsufficientDataError(
            f"forest fit needs >= 2 ok trials, got {len(trials)}"
        )
    if rng is None:
        rng = np.random.default_rng(0)
    X = np.array([space.encode(t.config) for t in trials])
    y = np.array([t.objective for t in trials])
    trees = []
    seeds = []
    for _ in range(n_trees):
        seed = int(rng.integers(0, 2**63 - 1))
        seeds.append(seed)
        if bootstrap:
            idx = np.random.Generator(np.random.Philox(seed)).integers(
                0, len(y), len(y)
            )
            Xi, yi = X[idx], y[idx]
        else:
            Xi, yi = X, y
        trees.append(RegressionTree(space.dim).fit(Xi, yi))
    return Forest(trees=trees, n_trees=n_trees, seeds=seeds)


def _segments(tree: RegressionTree, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """Breakpoint segments of one dim: (midpoints, widths). Leaf membership is
    constant within each segment because breakpoints include every cell edge."""
    edges = np.unique(
        np.concatenate(
            ([0.0, 1.0], tree.leaf_lo[:, dim], tree.leaf_hi[:, dim])
        )
    )
    widths = np.diff(edges)
    keep = widths > 0
    mids = (edges[:-1] + edges[1:]) / 2.0
    return mids[keep], widths[keep]


def _tree_decomposition(tree: RegressionTree, dims: int, max_order: int):
    """Exact component variances of one tree: (V_total, V_unary, V_pairwise)."""
    widths_all = tree.leaf_hi - tree.leaf_lo
    volume = np.prod(widths_all, axis=1)
    mean = tree.leaf_mean
    f0 = float(np.sum(mean * volume))
    v_total = float(np.sum(volume * (mean - f0) ** 2))

    unary = np.zeros(dims)
    pairwise: Dict[Tuple[int, int], float] = {}
    if v_total <= 0.0:
        return 0.0, unary, pairwise

    mids, widths, masks, g = {}, {}, {}, {}
    for i in range(dims):
        mids[i], widths[i] = _segments(tree, i)
        # Consistency matrix: segment s of dim i vs leaf l.
        lo = tree.leaf_lo[:, i][None, :]
        hi = tree.leaf_hi[:, i][None, :]
        masks[i] = (mids[i][:, None] >= lo) & (mids[i][:, None] < hi)
        weight_i = mean * volume / widths_all[:, i]
        m_i = masks[i] @ weight_i
        g[i] = m_i - f0
        unary[i] = float(np.sum(widths[i] * g[i] ** 2))

    if max_order >= 2:
        for i in range(dims):
            for j in range(i + 1, dims):
                weight_ij = mean * volume / (widths_all[:, i] * widths_all[:, j])
                m_ij = (masks[i] * weight_ij[None, :]) @ masks[j].T
                comp = m_ij - g[i][:, None] - g[j][None, :] - f0
                pairwise[(i, j)] = float(
                    widths[i] @ (comp**2) @ widths[j]
                )
    return v_total, unary, pairwise


def variance_decomposition(
    forest: Forest, space: ConfigSpace, max_order: int = 2
) -> ImportanceReport:
    """Average the per-tree variance fractions into an ImportanceReport.

    A zero-variance tree contributes zero fractions; the report is flagged
    degenerate only when every tree has zero variance.
    """
    names = space.names
    d = space.dim
    unary_acc = np.zeros(d)
    pair_acc: Dict[Tuple[int, int], float] = {
        (i, j): 0.0 for i in range(d) for j in range(i + 1, d)
    }
    total_var = 0.0
    live = 0
    for tree in forest.trees:
        v, unary, pairwise = _tree_decomposition(tree, d, max_order)
        total_var += v
        if v > 0.0:
            live += 1
            unary_acc += unary / v
            for key, val in pairwise.items():
                pair_acc[key] += val / v
    n = len(forest.trees)
    report_pairs = {}
    if max_order >= 2:
        report_pairs = {
            (names[i], names[j]): pair_acc[(i, j)] / n for (i, j) in pair_acc
        }
    return ImportanceReport(
        unary={names[i]: float(unary_acc[i] / n) for i in range(d)},
        pairwise=report_pairs,
        total_variance=total_var / n,
        degenerate=(live == 0),
    )


def importance_bruteforce(
    table, names: Optional[Sequence[str]] = None
) -> ImportanceReport:
    """Exact ANOVA of a complete factorial table by direct summation.

    Args:
        table: array of objective values, one axis per dim (<= 6 dims,
            <= 8 levels each); NaN marks a missing cell and is an error.
        names: per-dim parameter names (defaults to x0, x1, ...).
    """
    f = np.asarray(table, dtype=float)
    if f.ndim < 1 or f.ndim > 6:
        raise ValueError("table must have 1..6 dims")
    if any(l > 8 for l in f.shape):
        raise ValueError("at most 8 levels per dim")
    if np.isnan(f).any():
        raise MissingCellError("factorial table has missing cells")
    d = f.ndim
    if names is None:
        names = [f"x{i}" for i in range(d)]
    mu = float(f.mean())
    v_total = float(((f - mu) ** 2).mean())
    if v_total == 0.0:
        return ImportanceReport(
            unary={n: 0.0 for n in names},
            pairwise={(names[i], names[j]): 0.0 for i in range(d) for j in range(i + 1, d)},
            total_variance=0.0,
            degenerate=True,
        )
    axes = tuple(range(d))
    g_unary = {}
    unary = {}
    for i in range(d):
        m_i = f.mean(axis=tuple(a for a in axes if a != i))
        g_unary[i] = m_i - mu
        unary[names[i]] = float((g_unary[i] ** 2).mean()) / v_total
    pairwise = {}
    for i in range(d):
        for j in range(i + 1, d):
            m_ij = f.mean(axis=tuple(a for a in axes if a not in (i, j)))
            comp = m_ij - g_unary[i][:, None] - g_unary[j][None, :] - mu
            pairwise[(names[i], names[j])] = float((comp**2).mean()) / v_total
    return ImportanceReport(
        unary=unary,
        pairwise=pairwise,
        total_variance=v_total,
        degenerate=False,
    )


def aggregate_importance(
    reports: Sequence[ImportanceReport], weights: Sequence[float]
) -> ImportanceReport:
    """Weighted mean of unary fractions across round reports.

    Degenerate reports carry no variance information and are skipped; if all
    are degenerate the result is the all-zero map with the degenerate flag.
    """
    if len(reports) != len(weights) or not reports:
        raise ValueError("need one weight per report")
    names = list(reports[0].unary)
    live = [(r, w) for r, w in zip(reports, weights) if not r.degenerate and w > 0]
    if not live:
        return ImportanceReport(
            unary={n: 0.0 for n in names}, pairwise={}, total_variance=0.0,
            degenerate=True,
        )
    total_w = sum(w for _, w in live)
    unary = {
        n: sum(r.unary[n] * w for r, w in live) / total_w for n in names
    }
    total_variance = sum(r.total_variance * w for r, w in live) / total_w
    return ImportanceReport(
        unary=unary, pairwise={}, total_variance=total_variance, degenerate=False
    )


def get_param_imp(
    histories: Sequence[RoundHistory],
    space: ConfigSpace,
    n_trees: int = 16,
    seed: int = 0,
) -> ImportanceReport:
    """Per-round forests, unary fractions averaged weighted by ok-trial counts.

    The returned map is keyed by every parameter of the full space.
    """
    if not histories:
        raise InsufficientDataError("get_param_imp needs at least one round")
    reports = []
    weights = []
    zero = ImportanceReport(
        unary={n: 0.0 for n in space.names}, pairwise={}, total_variance=0.0,
        degenerate=True,
    )
    for idx, history in enumerate(histories):
        try:
            forest = fit_forest(
                history, space, n_trees=n_trees, rng=rngmod.derive(seed, "round", idx)
            )
        except InsufficientDataError:
            # A round gutted by failures carries no information; skip it.
            reports.append(zero)
            weights.append(0)
            continue
        reports.append(variance_decomposition(forest, space, max_order=1))
        weights.append(len(history.ok_trials()))
    return aggregate_importance(reports, weights)
