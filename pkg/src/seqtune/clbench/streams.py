"""Synthetic task streams for sequential training experiments.

Three generators, all deterministic in their seed:

rotated_moons (domain-incremental) — the two-moons binary problem; task t is
    the base dataset rotated by t * (180 / n_tasks) degrees, so the input
    distribution drifts while the label set stays fixed.
split_gaussians (class-incremental) — each task introduces 2 fresh Gaussian
    blob classes in a 16-dimensional space; class means are drawn once per
    stream.
drifting_function — no datasets at all; tasks are placeholders for an
    analytic objective whose optimum moves with the task index (used for
    fast sampler and policy tests).

Each task's samples split into test (10% of the total) and a selection part,
of which 15% becomes validation and the rest training.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .. import rng as rngmod

STREAM_KINDS = ("rotated_moons", "split_gaussians", "drifting_function")

GAUSS_DIM = 16
CLASSES_PER_TASK = 2


@dataclass(frozen=True)
class Task:
    task_index: int
    scenario: str  # class_incremental | domain_incremental
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    # Position in generation order; survives reordering, so anything defined
    # per generated task (a drift phase, a rotation angle) travels with it.
    source_index: int = -1

    def __post_init__(self):
        if self.source_index < 0:
            object.__setattr__(self, "source_index", self.task_index)

    def n_total(self) -> int:
        return len(self.y_train) + len(self.y_val) + len(self.y_test)


@dataclass(frozen=True)
class TaskStream:
    kind: str
    seed: int
    n_classes: int
    input_dim: int
    tasks: Tuple[Task, ...] = field(repr=False)

    def __len__(self) -> int:
        return len(self.tasks)

    def fingerprint(self) -> dict:
        """Identity of the generated content, independent of task order."""
        return {
            "kind": self.kind,
            "seed": self.seed,
            "n_tasks": len(self.tasks),
            "n_per_task": self.tasks[0].n_total() if self.tasks else 0,
        }

    def reordered(self, order: List[int]) -> "TaskStream":
        """Same tasks presented in a different sequence.

        task_index fields are reassigned to positions so downstream code sees
        a normal 0..T-1 stream; the underlying datasets are the originals.
        """
        if sorted(order) != list(range(len(self.tasks))):
            raise ValueError(f"order must be a permutation of 0..{len(self.tasks) - 1}")
        tasks = []
        for pos, src in enumerate(order):
            t = self.tasks[src]
            tasks.append(
                Task(pos, t.scenario, t.X_train, t.y_train, t.X_val, t.y_val,
                     t.X_test, t.y_test, source_index=t.source_index)
            )
        return TaskStream(self.kind, self.seed, self.n_classes, self.input_dim,
                          tuple(tasks))


def _split(X, y, g):
    """test = 10% of total, val = 15% of the remaining selection split."""
    n = len(y)
    perm = g.permutation(n)
    X, y = X[perm], y[perm]
    n_test = int(round(0.10 * n))
    n_val = int(round(0.15 * (n - n_test)))
    X_test, y_test = X[:n_test], y[:n_test]
    X_val, y_val = X[n_test:n_test + n_val], y[n_test:n_test + n_val]
    X_train, y_train = X[n_test + n_val:], y[n_test + n_val:]
    return X_train, y_train, X_val, y_val, X_test, y_test


def _two_moons(n, noise, g):
    n_a = n // 2
    n_b = n - n_a
    ta = g.random(n_a) * np.pi
    tb = g.random(n_b) * np.pi
    Xa = np.stack([np.cos(ta), np.sin(ta)], axis=1)
    Xb = np.stack([1.0 - np.cos(tb), 0.5 - np.sin(tb)], axis=1)
    X = np.concatenate([Xa, Xb]) + noise * g.normal(size=(n, 2))
    y = np.concatenate([np.zeros(n_a, dtype=int), np.ones(n_b, dtype=int)])
    return X, y


def rotation_degrees(t: int, n_tasks: int) -> float:
    """Input rotation applied to task t of a rotated_moons stream."""
    return t * (180.0 / n_tasks)


def _rotated_moons(n_tasks, n_per_task, seed, noise=0.12):
    tasks = []
    for t in range(n_tasks):
        g = rngmod.derive(seed, "moons", t)
        X, y = _two_moons(n_per_task, noise, g)
        angle = np.deg2rad(rotation_degrees(t, n_tasks))
        rot = np.array([[np.cos(angle), -np.sin(angle)],
                        [np.sin(angle), np.cos(angle)]])
        X = (X - X.mean(axis=0)) @ rot.T
        tasks.append(Task(t, "domain_incremental", *_split(X, y, g)))
    return TaskStream("rotated_moons", seed, 2, 2, tuple(tasks))


def _split_gaussians(n_tasks, n_per_task, seed):
    n_classes = CLASSES_PER_TASK * n_tasks
    means = rngmod.derive(seed, "means").normal(size=(n_classes, GAUSS_DIM)) * 2.0
    tasks = []
    for t in range(n_tasks):
        g = rngmod.derive(seed, "gauss", t)
        labels = [CLASSES_PER_TASK * t + c for c in range(CLASSES_PER_TASK)]
        per_class = [n_per_task // CLASSES_PER_TASK] * CLASSES_PER_TASK
        per_class[-1] += n_per_task - sum(per_class)
        xs, ys = [], []
        for label, m in zip(labels, per_class):
            xs.append(means[label] + g.normal(size=(m, GAUSS_DIM)))
            ys.append(np.full(m, label, dtype=int))
        X = np.concatenate(xs)
        y = np.concatenate(ys)
        tasks.append(Task(t, "class_incremental", *_split(X, y, g)))
    return TaskStream("split_gaussians", seed, n_classes, GAUSS_DIM, tuple(tasks))


def _drifting(n_tasks, seed):
    empty = np.empty((0, 1))
    none = np.empty(0, dtype=int)
    tasks = tuple(
        Task(t, "domain_incremental", empty, none, empty, none, empty, none)
        for t in range(n_tasks)
    )
    return TaskStream("drifting_function", seed, 0, 1, tasks)


# Scenario-suffixed aliases, accepted anywhere a kind string is.
_KIND_ALIASES = {
    "rotated_moons_DIL": "rotated_moons",
    "split_gaussians_CIL": "split_gaussians",
}


def make_stream(kind: str, n_tasks: int, n_per_task: int, seed: int) -> TaskStream:
    """Generate a task stream; identical arguments give identical streams."""
    if n_tasks < 2:
        raise ValueError("a stream needs at least 2 tasks")
    kind = _KIND_ALIASES.get(kind, kind)
    if kind == "rotated_moons":
        return _rotated_moons(n_tasks, n_per_task, seed)
    if kind == "split_gaussians":
        return _split_gaussians(n_tasks, n_per_task, seed)
    if kind == "drifting_function":
        return _drifting(n_tasks, seed)
    raise ValueError(f"unknown stream kind '{kind}' (expected one of {STREAM_KINDS})")


def dump_csv(stream: TaskStream, path) -> None:
    """Write every sample as feature columns + label + task_index + split."""
    with open(path, "w") as f:
        cols = [f"x{i}" for i in range(stream.input_dim)]
        f.write(",".join(cols + ["label", "task_index", "split"]) + "\n")
        for task in stream.tasks:
            for split, X, y in (("train", task.X_train, task.y_train),
                                ("val", task.X_val, task.y_val),
                                ("test", task.X_test, task.y_test)):
                for row, label in zip(X, y):
                    vals = [repr(float(v)) for v in row]
                    f.write(",".join(vals + [str(int(label)), str(task.task_index), split]) + "\n")
