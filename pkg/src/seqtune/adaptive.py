"""Sequence-level tuning: per-task HPO rounds under four budget policies.

The adaptive policy runs full-space rounds on the first m tasks, ranks
hyperparameters by variance importance aggregated over those rounds, then
searches only the top-k subspace for the remaining tasks, anchored and
warm-started at the previous task's best configuration. The three baselines
(one random configuration, tune-once-then-freeze, tune-every-task) share the
same round machinery so trial accounting is comparable across policies.

Every trial trains a clone of the persistent learner state, so trials within
a round are independent and may evaluate in any order. The round's winner is
committed by adopting the clone that trial already trained; training is a
pure function of (state, task, config, seed), so this equals retraining the
winning configuration once.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import rng as rngmod
from .clbench import (DEFAULT_BATCH_SIZE, STRATEGY_KINDS, MLPModel,
                      StrategyConfig, TrainingDiverged, build_space,
                      drifting_space, eval_accuracy, make_buffer,
                      strategy_config, train_task)
from .clbench.spaces import apply_overrides
from .fanova import ImportanceReport, get_param_imp
from .hpspace import Configuration, DomainError, Subspace, restrict
from .metrics import AccuracyMatrix, stream_accuracy
from .samplers import GridExhausted, SamplerSpec, ask
from .trials import EmptyRoundError, RoundHistory, Trial, save_history

POLICY_KINDS = ("fixed_random", "fixed_first_hpo", "per_task_hpo", "adaptive_hpo")

N_IMPORTANCE_TREES = 16


@dataclass(frozen=True)
class TunerPolicy:
    """Which rounds run where, and how many trials each gets."""

    kind: str
    m: int = 2
    k: int = 2
    budget_full: int = 30
    budget_restricted: int = 12

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise DomainError(f"unknown policy kind {self.kind!r}")
        if self.m < 1:
            raise DomainError("warm-up length m must be >= 1")
        if self.k < 1:
            raise DomainError("k must be >= 1")
        if self.budget_full < 1 or self.budget_restricted < 1:
            raise DomainError("budgets must be >= 1")
        # Only adaptive runs restricted rounds; the field is inert elsewhere.
        if self.kind == "adaptive_hpo" and self.budget_restricted > self.budget_full:
            raise DomainError("budget_restricted must not exceed budget_full")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "m": self.m,
            "k": self.k,
            "budget_full": self.budget_full,
            "budget_restricted": self.budget_restricted,
        }

    @staticmethod
    def from_json(d: dict) -> "TunerPolicy":
        return TunerPolicy(
            kind=d["kind"],
            m=d.get("m", 2),
            k=d.get("k", 2),
            budget_full=d.get("budget_full", 30),
            budget_restricted=d.get("budget_restricted", 12),
        )


@dataclass(frozen=True)
class StrategySpec:
    """What a trial trains: a continual strategy, or the analytic objective
    ("none") used with drifting_function streams."""

    kind: str
    batch_size: int = DEFAULT_BATCH_SIZE
    n_dims: int = 3  # drifting_function search dimensionality
    space_overrides: Optional[dict] = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS + ("none",):
            raise DomainError(f"unknown strategy kind {self.kind!r}")
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")
        if self.n_dims < 1:
            raise DomainError("n_dims must be >= 1")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "batch_size": self.batch_size,
            "n_dims": self.n_dims,
            "space_overrides": self.space_overrides,
        }

    @staticmethod
    def from_json(d: dict) -> "StrategySpec":
        return StrategySpec(
            kind=d["kind"],
            batch_size=d.get("batch_size", DEFAULT_BATCH_SIZE),
            n_dims=d.get("n_dims", 3),
            space_overrides=d.get("space_overrides"),
        )


@dataclass
class _LearnerState:
    model: MLPModel
    buffer: object  # ReplayBuffer, GDumbBuffer, or None


class CLObjective:
    """Trial evaluator for dataset streams: train the chosen strategy on the
    current task from the given state, score on the union of validation
    splits seen so far (the current task's plus the retained earlier ones)."""

    def __init__(self, stream, spec: StrategySpec):
        if spec.kind == "none":
            raise DomainError("dataset streams need a continual strategy")
        if stream.kind == "drifting_function":
            raise DomainError("drifting_function streams carry no datasets")
        self.stream = stream
        self.spec = spec
        space = build_space(spec.kind)
        if spec.space_overrides:
            space = apply_overrides(space, spec.space_overrides)
        self.space = space
        self._pools: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}

    def initial_state(self, master_seed: int) -> _LearnerState:
        model = MLPModel(
            self.stream.input_dim,
            self.stream.n_classes,
            rng=rngmod.derive(master_seed, "init"),
        )
        buffer = make_buffer(StrategyConfig(kind=self.spec.kind, lr=0.01))
        return _LearnerState(model, buffer)

    def _val_pool(self, t: int) -> Tuple[np.ndarray, np.ndarray]:
        if t not in self._pools:
            tasks = self.stream.tasks[: t + 1]
            X = np.vstack([task.X_val for task in tasks])
            y = np.concatenate([task.y_val for task in tasks])
            self._pools[t] = (X, y)
        return self._pools[t]

    def evaluate_trial(
        self, state: _LearnerState, t: int, config: Configuration, seed: int
    ) -> Tuple[float, _LearnerState]:
        cfg = strategy_config(self.spec.kind, config, batch_size=self.spec.batch_size)
        teacher = state.model if t > 0 else None
        model, buffer, _ = train_task(
            state.model, state.buffer, teacher, cfg,
            self.stream.tasks[t], rngmod.derive(seed, "train"),
        )
        X, y = self._val_pool(t)
        return eval_accuracy(model, X, y), _LearnerState(model, buffer)

    def matrix_row(self, state: _LearnerState, t: int) -> List[float]:
        return [
            eval_accuracy(state.model, task.X_test, task.y_test)
            for task in self.stream.tasks[: t + 1]
        ]


class DriftingObjective:
    """Analytic objective whose optimum moves along the task axis; the
    "state" committed per task is simply the chosen configuration.

    f_t(h) = -||z(h) - c_t||^2 on unit-encoded coordinates, with the
    optimum c_{t,d} = 0.5 + 0.35 sin(2*pi*t/T + phase_d) staying inside
    the box for every task. Pseudo-accuracy for the matrix is 1 + f
    clipped to [0, 1], so a configuration tuned for task i scores lower
    on tasks whose optimum has drifted away.
    """

    def __init__(self, stream, spec: StrategySpec):
        if spec.kind != "none":
            raise DomainError("drifting_function streams take strategy kind 'none'")
        if stream.kind != "drifting_function":
            raise DomainError(f"stream kind {stream.kind!r} carries datasets")
        self.stream = stream
        self.spec = spec
        space = drifting_space(spec.n_dims)
        if spec.space_overrides:
            space = apply_overrides(space, spec.space_overrides)
        self.space = space
        self.n_tasks = len(stream.tasks)

    def initial_state(self, master_seed: int):
        return None

    def optimum(self, t: int) -> np.ndarray:
        # Phase follows the task's generation index, so reordering the
        # stream genuinely reorders the optima.
        source = self.stream.tasks[t].source_index
        d = self.space.dim
        phase = 2.0 * np.pi * np.arange(d) / d
        return 0.5 + 0.35 * np.sin(2.0 * np.pi * source / self.n_tasks + phase)

    def value(self, t: int, config: Configuration) -> float:
        z = self.space.encode(config)
        return float(-np.sum((z - self.optimum(t)) ** 2))

    def evaluate_trial(self, state, t, config, seed):
        return self.value(t, config), config

    def matrix_row(self, state: Configuration, t: int) -> List[float]:
        return [
            float(np.clip(1.0 + self.value(j, state), 0.0, 1.0))
            for j in range(t + 1)
        ]


def make_objective(stream, spec: StrategySpec):
    if stream.kind == "drifting_function":
        return DriftingObjective(stream, spec)
    return CLObjective(stream, spec)


@dataclass
class SequenceResult:
    """Everything a finished (or aborted) sequence run produced."""

    policy: TunerPolicy
    sampler: SamplerSpec
    strategy: StrategySpec
    master_seed: int
    stream_fingerprint: dict
    best_configs: List[Configuration]
    best_objectives: List[float]
    sa_curve: List[float]
    matrix: AccuracyMatrix
    total_trials: int
    total_cost_seconds: float
    histories: List[RoundHistory]
    importance: Dict[int, ImportanceReport] = field(default_factory=dict)
    importance_seeds: Dict[int, int] = field(default_factory=dict)
    restricted_free: Optional[List[str]] = None
    warnings: List[str] = field(default_factory=list)
    partial: bool = False

    @property
    def final_stream_accuracy(self) -> float:
        return self.sa_curve[-1] if self.sa_curve else float("nan")

    def to_json(self) -> dict:
        """Deterministic content only; wall-clock cost lives in timing.json."""
        return {
            "schema": 1,
            "policy": self.policy.to_json(),
            "sampler": self.sampler.to_json(),
            "strategy": self.strategy.to_json(),
            "master_seed": self.master_seed,
            "stream": self.stream_fingerprint,
            "best_configs": [dict(c.values) for c in self.best_configs],
            "best_objectives": list(self.best_objectives),
            "sa_curve": list(self.sa_curve),
            "final_stream_accuracy": self.final_stream_accuracy,
            "accuracy_matrix": self.matrix.to_json(),
            "total_trials": self.total_trials,
            "trial_counts": [len(h) for h in self.histories],
            "importance": {str(t): r.to_json() for t, r in self.importance.items()},
            "importance_seeds": {str(t): s for t, s in self.importance_seeds.items()},
            "restricted_free": self.restricted_free,
            "warnings": list(self.warnings),
            "partial": self.partial,
        }


class _Stash:
    """Keep the trained state of the best ok trial seen so far; strict
    improvement only, so ties resolve to the earliest trial exactly like
    RoundHistory.best."""

    def __init__(self):
        self.objective = -math.inf
        self.payload = None

    def offer(self, objective: float, payload) -> None:
        if math.isfinite(objective) and objective > self.objective:
            self.objective = objective
            self.payload = payload


def hpo_round(
    task_index: int,
    domain,
    sampler_spec: SamplerSpec,
    budget: int,
    evaluate: Callable[[Configuration, int], float],
    warm_start: Optional[Sequence[Configuration]] = None,
    rng: Optional[np.random.Generator] = None,
    seed_for: Optional[Callable[[int], int]] = None,
    clock: Callable[[], float] = time.perf_counter,
) -> Tuple[RoundHistory, Trial]:
    """Run one HPO round over a space or subspace.

    Warm-start configurations are evaluated first, in order, and consume
    budget; the sampler proposes the rest from the accumulated history. A
    trial whose evaluator raises TrainingDiverged (or returns a non-finite
    objective) is recorded as failed and the round continues. Grid
    exhaustion ends the round early.

    Args:
        evaluate: (config, seed) -> objective to maximize.
        seed_for: trial_id -> recorded integer seed (defaults to trial_id).

    Raises:
        EmptyRoundError: no trial finished ok; the partial history is
            attached to the exception as .history.
    """
    if budget < 1:
        raise DomainError("budget must be >= 1")
    if rng is None:
        rng = rngmod.derive(0, "round", task_index)
    if seed_for is None:
        seed_for = lambda trial_id: trial_id
    warm = list(warm_start or [])
    full = domain.full_space()
    for config in warm:
        full.validate(config)
        if isinstance(domain, Subspace) and not domain.contains(config):
            raise DomainError(
                "warm-start config disagrees with the subspace anchor on a pinned parameter"
            )
    history = RoundHistory(task_index, domain)
    for trial_id in range(budget):
        if trial_id < len(warm):
            config = warm[trial_id]
        else:
            try:
                config = ask(sampler_spec, domain, history, rng)
            except GridExhausted:
                break
        seed = seed_for(trial_id)
        started = clock()
        try:
            objective = float(evaluate(config, seed))
            status_ok = math.isfinite(objective)
        except TrainingDiverged:
            objective = float("nan")
            status_ok = False
        cost = clock() - started
        history.append(
            Trial(
                trial_id=trial_id,
                task_index=task_index,
                config=config,
                objective=objective if status_ok else float("nan"),
                cost_seconds=cost,
                seed=seed,
                status="ok" if status_ok else "failed",
            )
        )
    try:
        best = history.best()
    except EmptyRoundError as exc:
        exc.history = history
        raise
    return history, best


def predicted_budget(policy: TunerPolicy, n_tasks: int) -> int:
    """Closed-form trial count for a clean run (no failures, no grid stop)."""
    if n_tasks < 2:
        raise DomainError("a sequence has at least 2 tasks")
    if policy.kind == "fixed_random":
        return n_tasks
    if policy.kind == "fixed_first_hpo":
        return policy.budget_full + (n_tasks - 1)
    if policy.kind == "per_task_hpo":
        return policy.budget_full * n_tasks
    if policy.kind == "adaptive_hpo":
        return policy.m * policy.budget_full + (n_tasks - policy.m) * policy.budget_restricted
    raise DomainError(f"unknown policy kind {policy.kind!r}")


def run_sequence(
    stream,
    strategy_spec: StrategySpec,
    policy: TunerPolicy,
    sampler_spec: SamplerSpec,
    master_seed: int,
) -> SequenceResult:
    """Tune and train through the whole stream under one policy.

    The result is a pure function of the arguments: sampler draws, trial
    seeds, forest seeds, and the initial model all derive from master_seed
    through fixed purpose tags, and trials never share mutable state.

    An empty round (every trial failed) aborts the sequence; the result
    returned so far is flagged partial via the raised error's .result.
    """
    tasks = stream.tasks
    n_tasks = len(tasks)
    if policy.kind == "adaptive_hpo" and policy.m >= n_tasks:
        raise DomainError(
            f"warm-up m={policy.m} must be smaller than the {n_tasks}-task stream"
        )
    objective = make_objective(stream, strategy_spec)
    space = objective.space
    state = objective.initial_state(master_seed)

    histories: List[RoundHistory] = []
    best_configs: List[Configuration] = []
    best_objectives: List[float] = []
    sa_curve: List[float] = []
    importance: Dict[int, ImportanceReport] = {}
    importance_seeds: Dict[int, int] = {}
    warnings_: List[str] = []
    matrix = AccuracyMatrix(n_tasks)
    free_names: Optional[List[str]] = None
    partial = False

    fixed_config = None
    if policy.kind == "fixed_random":
        fixed_config = space.sample_uniform(rngmod.derive(master_seed, "fixed-random"))

    for t in range(n_tasks):
        if policy.kind == "fixed_random":
            domain, budget, warm = space, 1, [fixed_config]
        elif policy.kind == "fixed_first_hpo":
            if t == 0:
                domain, budget, warm = space, policy.budget_full, []
            else:
                domain, budget, warm = space, 1, [best_configs[0]]
        elif policy.kind == "per_task_hpo":
            domain, budget = space, policy.budget_full
            warm = [best_configs[-1]] if t > 0 else []
        else:  # adaptive_hpo
            if t < policy.m:
                domain, budget, warm = space, policy.budget_full, []
            else:
                anchor = best_configs[-1]
                domain = Subspace(space, set(free_names), anchor)
                budget = policy.budget_restricted
                warm = [anchor]

        stash = _Stash()

        def evaluate(config, seed, _t=t, _stash=stash):
            obj, payload = objective.evaluate_trial(state, _t, config, seed)
            _stash.offer(obj, payload)
            return obj

        try:
            history, best = hpo_round(
                t,
                domain,
                sampler_spec,
                budget,
                evaluate,
                warm_start=warm,
                rng=rngmod.derive(master_seed, "sampler", t),
                seed_for=lambda trial_id, _t=t: rngmod.derive_seed(
                    master_seed, "trial", _t, trial_id
                ),
            )
        except EmptyRoundError as exc:
            histories.append(exc.history)
            warnings_.append(f"task {t}: {exc}")
            partial = True
            break

        histories.append(history)
        best_configs.append(best.config)
        best_objectives.append(best.objective)
        state = stash.payload
        matrix.set_row(t, objective.matrix_row(state, t))
        sa_curve.append(stream_accuracy(matrix, t))

        if policy.kind == "adaptive_hpo" and t < policy.m:
            imp_seed = rngmod.derive_seed(master_seed, "importance", t)
            report = get_param_imp(
                histories, space, n_trees=N_IMPORTANCE_TREES, seed=imp_seed
            )
            importance[t] = report
            importance_seeds[t] = imp_seed
            if t == policy.m - 1:
                sub = restrict(
                    space, report, policy.k, best.config, warning_sink=warnings_
                )
                free_names = [n for n in space.names if n in sub.free]

    return SequenceResult(
        policy=policy,
        sampler=sampler_spec,
        strategy=strategy_spec,
        master_seed=master_seed,
        stream_fingerprint=stream.fingerprint(),
        best_configs=best_configs,
        best_objectives=best_objectives,
        sa_curve=sa_curve,
        matrix=matrix,
        total_trials=sum(len(h) for h in histories),
        total_cost_seconds=sum(
            tr.cost_seconds for h in histories for tr in h.trials
        ),
        histories=histories,
        importance=importance,
        importance_seeds=importance_seeds,
        restricted_free=free_names,
        warnings=warnings_,
        partial=partial,
    )


def save_sequence_result(result: SequenceResult, outdir) -> None:
    """Artifact layout: task_<t>/round.csv (+ space sidecar), result.json,
    importance_task_<t>.json, timing.json. result.json holds only
    deterministic content so identical runs write identical bytes."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for history in result.histories:
        task_dir = outdir / f"task_{history.task_index}"
        task_dir.mkdir(exist_ok=True)
        save_history(history, task_dir / "round.csv")
    for t, report in result.importance.items():
        payload = {
            "task": t,
            "tasks_used": list(range(t + 1)),
            "seed": result.importance_seeds[t],
            "n_trees": N_IMPORTANCE_TREES,
            "report": report.to_json(),
        }
        (outdir / f"importance_task_{t}.json").write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n"
        )
    (outdir / "result.json").write_text(
        json.dumps(result.to_json(), sort_keys=True, indent=2) + "\n"
    )
    timing = {
        "total_cost_seconds": result.total_cost_seconds,
        "per_task_cost_seconds": [
            sum(tr.cost_seconds for tr in h.trials) for h in result.histories
        ],
    }
    (outdir / "timing.json").write_text(
        json.dumps(timing, sort_keys=True, indent=2) + "\n"
    )
