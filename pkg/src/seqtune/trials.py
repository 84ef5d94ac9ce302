"""Trial records, round histories, and their CSV + JSON persistence.

Objectives always maximize (the validation metric is an accuracy); anything
loss-like must be negated before it enters a Trial. Failed trials stay in the
history so budget accounting sees them, but they are excluded from sampler
models and importance fits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

from .hpspace import ConfigSpace, Configuration, DomainError, subspace_from_descriptor

STATUS_OK = "ok"
STATUS_FAILED = "failed"

# Reserved CSV columns; hyperparameter columns follow, one per param in
# declaration order of the round's full space.
_FIXED_COLUMNS = ["trial_id", "task_index", "objective", "cost_seconds", "seed", "status"]


class EmptyRoundError(RuntimeError):
    """A round finished without a single ok trial."""


class HistoryParseError(ValueError):
    def __init__(self, path, line_number, message):
        super().__init__(f"{path}:{line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class Trial:
    trial_id: int
    task_index: int
    config: Configuration
    objective: float
    cost_seconds: float
    seed: int
    status: str = STATUS_OK

    def __post_init__(self):
        if self.status not in (STATUS_OK, STATUS_FAILED):
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == STATUS_OK and not math.isfinite(self.objective):
            raise ValueError("ok trials need a finite objective")
        if self.cost_seconds < 0:
            raise ValueError("cost_seconds must be nonnegative")

    def same_as(self, other: "Trial") -> bool:
        """Field-for-field equality that treats NaN objectives as equal."""
        objectives_match = (
            self.objective == other.objective
            or (math.isnan(self.objective) and math.isnan(other.objective))
        )
        return (
            self.trial_id == other.trial_id
            and self.task_index == other.task_index
            and self.config == other.config
            and objectives_match
            and self.cost_seconds == other.cost_seconds
            and self.seed == other.seed
            and self.status == other.status
        )


class RoundHistory:
    """Ordered trial log of one HPO round over one (sub)space."""

    def __init__(self, task_index: int, domain):
        self.task_index = task_index
        self.domain = domain  # ConfigSpace or Subspace
        self.trials: List[Trial] = []

    def append(self, trial: Trial) -> None:
        if trial.trial_id != len(self.trials):
            raise ValueError(
                f"trial_id {trial.trial_id} out of order; expected {len(self.trials)}"
            )
        self.domain.full_space().validate(trial.config)
        self.trials.append(trial)

    def ok_trials(self) -> List[Trial]:
        return [t for t in self.trials if t.status == STATUS_OK]

    def __len__(self):
        return len(self.trials)

    def best(self) -> Trial:
        """The ok trial with maximal objective; ties go to the smallest trial_id."""
        ok = self.ok_trials()
        if not ok:
            raise EmptyRoundError(
                f"round for task {self.task_index} has no ok trials"
            )
        return max(ok, key=lambda t: (t.objective, -t.trial_id))

    def same_as(self, other: "RoundHistory") -> bool:
        return (
            self.task_index == other.task_index
            and len(self.trials) == len(other.trials)
            and all(a.same_as(b) for a, b in zip(self.trials, other.trials))
        )


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)  # shortest decimal that round-trips binary64 exactly
    return str(v)


def _parse_param(spec, text: str):
    if spec.kind == "categorical":
        for c in spec.choices:
            if str(c) == text:
                return c
        raise ValueError(f"{text!r} not among choices of '{spec.name}'")
    if spec.kind == "integer":
        return int(text)
    return float(text)


def save_history(history: RoundHistory, csv_path, sidecar_path=None) -> None:
    """Write the round as CSV plus a JSON sidecar holding the space descriptor.

    CSV header: trial_id,task_index,objective,cost_seconds,seed,status,<params>.
    Floats use the shortest representation that round-trips exactly.
    """
    csv_path = Path(csv_path)
    if sidecar_path is None:
        sidecar_path = csv_path.with_suffix(".json")
    space = history.domain.full_space()
    header = _FIXED_COLUMNS + space.names
    lines = [",".join(header)]
    for t in history.trials:
        row = [
            str(t.trial_id),
            str(t.task_index),
            _format_value(t.objective),
            _format_value(t.cost_seconds),
            str(t.seed),
            t.status,
        ]
        row += [_format_value(t.config.values[n]) for n in space.names]
        lines.append(",".join(row))
    csv_path.write_text("\n".join(lines) + "\n")
    Path(sidecar_path).write_text(
        json.dumps(
            {"task_index": history.task_index, "space": history.domain.descriptor()},
            sort_keys=True,
            indent=2,
        )
        + "\n"
    )


def _peek_task_index(csv_path) -> int:
    for line in Path(csv_path).read_text().splitlines()[1:]:
        if line.strip():
            return int(line.split(",")[1])
    return 0


def load_history(csv_path, sidecar_path=None, *, domain=None) -> RoundHistory:
    """Rebuild a round from its CSV; the domain comes from the JSON sidecar
    unless the caller supplies one (offline analysis against its own space).
    """
    csv_path = Path(csv_path)
    if domain is None:
        if sidecar_path is None:
            sidecar_path = csv_path.with_suffix(".json")
        meta = json.loads(Path(sidecar_path).read_text())
        domain = subspace_from_descriptor(meta["space"])
        task_index = int(meta["task_index"])
    else:
        task_index = _peek_task_index(csv_path)
    space = domain.full_space()
    history = RoundHistory(task_index, domain)
    lines = csv_path.read_text().splitlines()
    if not lines:
        raise HistoryParseError(csv_path, 1, "missing header")
    expected_header = ",".join(_FIXED_COLUMNS + space.names)
    if lines[0] != expected_header:
        raise HistoryParseError(csv_path, 1, f"header mismatch: {lines[0]!r}")
    for line_number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(_FIXED_COLUMNS) + space.dim:
            raise HistoryParseError(
                csv_path, line_number, f"expected {len(_FIXED_COLUMNS) + space.dim} fields, got {len(parts)}"
            )
        try:
            values = {
                n: _parse_param(space[n], parts[len(_FIXED_COLUMNS) + i])
                for i, n in enumerate(space.names)
            }
            trial = Trial(
                trial_id=int(parts[0]),
                task_index=int(parts[1]),
                config=Configuration(values),
                objective=float(parts[2]),
                cost_seconds=float(parts[3]),
                seed=int(parts[4]),
                status=parts[5],
            )
            history.append(trial)
        except (ValueError, DomainError) as exc:
            if isinstance(exc, HistoryParseError):
                raise
            raise HistoryParseError(csv_path, line_number, str(exc)) from exc
    return history
