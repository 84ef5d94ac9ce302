"""Accuracy bookkeeping over task sequences and plot-data CSV emitters.

Everything here is a pure function over finished results; figure rendering
lives in the CLI report path, not in this module.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple


class ComparabilityError(ValueError):
    """Results cover different task content and cannot be aggregated."""


class AccuracyMatrix:
    """Lower-triangular R[i][j]: test accuracy on task j after training
    through task i. Rows fill in task order; row i has exactly i+1 entries."""

    def __init__(self, n_tasks: int):
        if n_tasks < 1:
            raise ValueError("matrix needs at least one task")
        self.n_tasks = n_tasks
        self._rows: List[List[float]] = []

    def set_row(self, i: int, values: Sequence[float]) -> None:
        if i != len(self._rows):
            raise ValueError(f"row {i} out of order; expected {len(self._rows)}")
        if i >= self.n_tasks:
            raise ValueError(f"row {i} beyond declared {self.n_tasks} tasks")
        if len(values) != i + 1:
            raise ValueError(f"row {i} needs {i + 1} entries, got {len(values)}")
        row = [float(v) for v in values]
        for v in row:
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"accuracy {v} outside [0, 1]")
        self._rows.append(row)

    def row(self, i: int) -> List[float]:
        if i >= len(self._rows):
            raise ValueError(f"row {i} not populated yet")
        return list(self._rows[i])

    def value(self, i: int, j: int) -> float:
        if j > i:
            raise ValueError("matrix is defined for j <= i only")
        return self.row(i)[j]

    @property
    def populated_rows(self) -> int:
        return len(self._rows)

    def to_json(self) -> List[List[float]]:
        return [list(r) for r in self._rows]

    @staticmethod
    def from_json(rows: Sequence[Sequence[float]], n_tasks=None) -> "AccuracyMatrix":
        m = AccuracyMatrix(n_tasks if n_tasks is not None else max(len(rows), 1))
        for i, r in enumerate(rows):
            m.set_row(i, r)
        return m


def stream_accuracy(matrix, i: int) -> float:
    """Mean accuracy over tasks 0..i after training through task i."""
    row = matrix.row(i) if hasattr(matrix, "row") else list(matrix[i])
    if len(row) != i + 1:
        raise ValueError(f"row {i} needs {i + 1} entries, got {len(row)}")
    return float(sum(row)) / len(row)


def _field(result, name):
    if isinstance(result, dict):
        if name not in result:
            raise KeyError(f"result is missing '{name}'")
        return result[name]
    return getattr(result, name)


def order_robustness(results) -> List[Tuple[int, float, float]]:
    """Per-step stream-accuracy mean and sample std across order permutations.

    Args:
        results: sequence results (objects or dicts) that expose sa_curve and
            stream_fingerprint; all must describe the same task content.

    Returns:
        rows (step, mean, std), one per task position.
    """
    results = list(results)
    if len(results) < 2:
        raise ValueError("order robustness needs at least 2 permutations")
    curves = [list(_field(r, "sa_curve")) for r in results]
    prints = [_field(r, "stream_fingerprint") for r in results]
    for p in prints[1:]:
        if p != prints[0]:
            raise ComparabilityError(
                "permutation results come from different streams"
            )
    n = len(curves[0])
    if any(len(c) != n for c in curves):
        raise ComparabilityError("permutation results cover different step counts")
    rows = []
    for step in range(n):
        xs = [c[step] for c in curves]
        mean = sum(xs) / len(xs)
        if max(xs) == min(xs):
            std = 0.0  # coinciding curves must report exactly zero spread
        else:
            std = math.sqrt(sum((x - mean) ** 2 for x in xs) / (len(xs) - 1))
        rows.append((step, float(mean), float(std)))
    return rows


def time_demand(result) -> Dict[str, object]:
    """Observed cost and trial counts next to the policy's closed-form budget."""
    histories = _field(result, "histories")
    per_task = [sum(t.cost_seconds for t in h.trials) for h in histories]
    counts = [len(h) for h in histories]
    from .adaptive import predicted_budget  # deferred: adaptive imports this module

    policy = _field(result, "policy")
    n_tasks = _field(result, "matrix").n_tasks
    return {
        "total_cost_seconds": float(sum(per_task)),
        "per_task_cost_seconds": per_task,
        "trial_counts": counts,
        "total_trials": int(sum(counts)),
        "predicted_trials": predicted_budget(policy, n_tasks),
    }


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row {row!r} does not match header {header}")
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_sa_curve_csv(path, rows: Iterable[Sequence]) -> None:
    """rows: (task, SA, policy, seed)."""
    _write_csv(path, ["task", "SA", "policy", "seed"], rows)


def write_robustness_csv(path, rows: Iterable[Sequence]) -> None:
    """rows: (step, mean, std, policy)."""
    _write_csv(path, ["step", "mean", "std", "policy"], rows)


def write_importance_csv(path, rows: Iterable[Sequence]) -> None:
    """rows: (task, param, importance)."""
    _write_csv(path, ["task", "param", "importance"], rows)
