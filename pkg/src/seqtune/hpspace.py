"""Hyperparameter spaces, configurations, unit-cube encodings, and
importance-driven subspace restriction.

Every parameter kind maps to a coordinate in [0, 1]:

    continuous-linear   z = (v - lo) / (hi - lo)
    continuous-log      z = (ln v - ln lo) / (ln hi - ln lo)
    integer             z = (v - lo + 0.5) / (hi - lo + 1)     (bin midpoint)
    categorical         z = (index + 0.5) / n_choices          (bin midpoint)

Samplers and the importance forest both operate on these encoded coordinates,
so decode() is defined as the exact inverse of the bin formulas.
"""

from __future__ import annotations

import json
import math
import warnings as _warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

KINDS = ("continuous-linear", "continuous-log", "integer", "categorical")


class DomainError(ValueError):
    """A value or spec field falls outside its declared domain."""


@dataclass(frozen=True)
class ParamSpec:
    """One hyperparameter: its name, kind, and domain.

    Args:
        name: nonempty identifier, unique within a space.
        kind: one of continuous-linear, continuous-log, integer, categorical.
        lower/upper: bounds for continuous and integer kinds (upper > lower;
            log kind requires lower > 0).
        choices: ordered labels for the categorical kind (at least 2).
        default: value inside the domain; auto-filled with the domain midpoint
            (geometric midpoint for log, first choice for categorical) if omitted.
    """

    name: str
    kind: str
    lower: Optional[float] = None
    upper: Optional[float] = None
    choices: Optional[tuple] = None
    default: Any = None

    def __post_init__(self):
        if not self.name or not str(self.name).strip():
            raise DomainError("parameter name must be nonempty")
        if self.kind not in KINDS:
            raise DomainError(f"parameter '{self.name}': unknown kind '{self.kind}'")
        if self.kind == "categorical":
            if self.choices is None or len(self.choices) < 2:
                raise DomainError(
                    f"parameter '{self.name}': categorical needs >= 2 choices"
                )
            object.__setattr__(self, "choices", tuple(self.choices))
            if len(set(self.choices)) != len(self.choices):
                raise DomainError(f"parameter '{self.name}': duplicate choices")
        else:
            if self.lower is None or self.upper is None:
                raise DomainError(f"parameter '{self.name}': bounds required")
            # Integer domains may be a single point; continuous ranges may not.
            if self.kind == "integer":
                if self.upper < self.lower:
                    raise DomainError(
                        f"parameter '{self.name}': upper must not precede lower"
                    )
            elif not (self.upper > self.lower):
                raise DomainError(
                    f"parameter '{self.name}': upper must exceed lower"
                )
            if self.kind == "continuous-log" and self.lower <= 0:
                raise DomainError(
                    f"parameter '{self.name}': log kind requires lower > 0"
                )
            if self.kind == "integer":
                if self.lower != int(self.lower) or self.upper != int(self.upper):
                    raise DomainError(
                        f"parameter '{self.name}': integer bounds must be whole"
                    )
                object.__setattr__(self, "lower", int(self.lower))
                object.__setattr__(self, "upper", int(self.upper))
            else:
                object.__setattr__(self, "lower", float(self.lower))
                object.__setattr__(self, "upper", float(self.upper))
        if self.default is None:
            object.__setattr__(self, "default", self._auto_default())
        self.check_value(self.default)

    def _auto_default(self):
        if self.kind == "continuous-linear":
            return 0.5 * (self.lower + self.upper)
        if self.kind == "continuous-log":
            return math.exp(0.5 * (math.log(self.lower) + math.log(self.upper)))
        if self.kind == "integer":
            return int((self.lower + self.upper) // 2)
        return self.choices[0]

    def check_value(self, v) -> None:
        """Raise DomainError if v is outside this parameter's domain."""
        if self.kind == "categorical":
            if v not in self.choices:
                raise DomainError(
                    f"parameter '{self.name}': {v!r} not among choices"
                )
            return
        if self.kind == "integer":
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                if isinstance(v, float) and v == int(v):
                    v = int(v)
                else:
                    raise DomainError(
                        f"parameter '{self.name}': {v!r} is not a whole number"
                    )
        if not (self.lower <= v <= self.upper):
            raise DomainError(
                f"parameter '{self.name}': {v!r} outside [{self.lower}, {self.upper}]"
            )

    def encode(self, v) -> float:
        self.check_value(v)
        if self.kind == "continuous-linear":
            return (float(v) - self.lower) / (self.upper - self.lower)
        if self.kind == "continuous-log":
            return (math.log(v) - math.log(self.lower)) / (
                math.log(self.upper) - math.log(self.lower)
            )
        if self.kind == "integer":
            return (int(v) - self.lower + 0.5) / (self.upper - self.lower + 1)
        return (self.choices.index(v) + 0.5) / len(self.choices)

    def decode(self, z: float):
        z = min(max(float(z), 0.0), 1.0)
        if self.kind == "continuous-linear":
            return self.lower + z * (self.upper - self.lower)
        if self.kind == "continuous-log":
            return math.exp(
                math.log(self.lower)
                + z * (math.log(self.upper) - math.log(self.lower))
            )
        if self.kind == "integer":
            n_bins = self.upper - self.lower + 1
            return int(min(self.lower + int(z * n_bins), self.upper))
        n = len(self.choices)
        return self.choices[min(int(z * n), n - 1)]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "lower": self.lower,
            "upper": self.upper,
            "choices": list(self.choices) if self.choices is not None else None,
            "default": self.default,
        }

    @staticmethod
    def from_json(d: dict) -> "ParamSpec":
        choices = d.get("choices")
        return ParamSpec(
            name=d["name"],
            kind=d["kind"],
            lower=d.get("lower"),
            upper=d.get("upper"),
            choices=tuple(choices) if choices is not None else None,
            default=d.get("default"),
        )


@dataclass(frozen=True)
class Configuration:
    """A concrete assignment: one value per parameter of its space."""

    values: Dict[str, Any]

    def __getitem__(self, name: str):
        return self.values[name]

    def __eq__(self, other) -> bool:
        return isinstance(other, Configuration) and self.values == other.values

    def __hash__(self):
        return hash(tuple(sorted((k, repr(v)) for k, v in self.values.items())))


class ConfigSpace:
    """Ordered collection of ParamSpec; the full search domain H."""

    def __init__(self, params: Sequence[ParamSpec]):
        params = list(params)
        if len(params) < 1:
            raise DomainError("a space needs at least one parameter")
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise DomainError("parameter names must be pairwise distinct")
        self.params: List[ParamSpec] = params
        self._index = {p.name: i for i, p in enumerate(params)}

    @property
    def names(self) -> List[str]:
        return [p.name for p in self.params]

    @property
    def dim(self) -> int:
        return len(self.params)

    def __getitem__(self, name: str) -> ParamSpec:
        return self.params[self._index[name]]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def validate(self, config: Configuration) -> None:
        """Raise DomainError unless config has exactly one in-domain value per param."""
        extra = set(config.values) - set(self._index)
        if extra:
            raise DomainError(f"unknown parameters: {sorted(extra)}")
        for p in self.params:
            if p.name not in config.values:
                raise DomainError(f"parameter '{p.name}': missing value")
            p.check_value(config.values[p.name])

    def encode(self, config: Configuration) -> np.ndarray:
        self.validate(config)
        return np.array(
            [p.encode(config.values[p.name]) for p in self.params], dtype=float
        )

    def decode(self, z: np.ndarray) -> Configuration:
        if len(z) != self.dim:
            raise DomainError(f"expected {self.dim} coordinates, got {len(z)}")
        return Configuration(
            {p.name: p.decode(z[i]) for i, p in enumerate(self.params)}
        )

    # Search-domain interface shared with Subspace.

    def active_specs(self) -> List[ParamSpec]:
        return list(self.params)

    def full_space(self) -> "ConfigSpace":
        return self

    def complete(self, active_values: Dict[str, Any]) -> Configuration:
        config = Configuration(dict(active_values))
        self.validate(config)
        return config

    def encode_active(self, config: Configuration) -> np.ndarray:
        return self.encode(config)

    def sample_uniform(self, rng: np.random.Generator) -> Configuration:
        z = rng.random(self.dim)
        return self.decode(z)

    def descriptor(self) -> dict:
        return {"params": [p.to_json() for p in self.params]}

    def to_json(self) -> str:
        return json.dumps(self.descriptor(), sort_keys=True)

    @staticmethod
    def from_descriptor(d: dict) -> "ConfigSpace":
        return ConfigSpace([ParamSpec.from_json(p) for p in d["params"]])

    @staticmethod
    def from_json(s: str) -> "ConfigSpace":
        return ConfigSpace.from_descriptor(json.loads(s))

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfigSpace) and self.params == other.params


class Subspace:
    """H^k: the base space with only `free` parameters searchable; the rest
    are pinned to the anchor configuration's values."""

    def __init__(self, base: ConfigSpace, free, anchor: Configuration):
        free = set(free)
        unknown = free - set(base.names)
        if unknown:
            raise DomainError(f"free names not in base space: {sorted(unknown)}")
        if len(free) < 1:
            raise DomainError("subspace needs at least one free parameter")
        base.validate(anchor)
        self.base = base
        self.free = free
        self.anchor = anchor

    @property
    def dim(self) -> int:
        return len(self.free)

    def active_specs(self) -> List[ParamSpec]:
        # Declaration order of the base space, filtered to the free set.
        return [p for p in self.base.params if p.name in self.free]

    def full_space(self) -> ConfigSpace:
        return self.base

    def complete(self, active_values: Dict[str, Any]) -> Configuration:
        values = dict(self.anchor.values)
        for name, v in active_values.items():
            if name not in self.free:
                raise DomainError(f"parameter '{name}' is not free in this subspace")
            values[name] = v
        config = Configuration(values)
        self.base.validate(config)
        return config

    def encode_active(self, config: Configuration) -> np.ndarray:
        self.base.validate(config)
        return np.array(
            [p.encode(config.values[p.name]) for p in self.active_specs()],
            dtype=float,
        )

    def contains(self, config: Configuration) -> bool:
        """True when config agrees with the anchor on every pinned parameter."""
        self.base.validate(config)
        return all(
            config.values[p.name] == self.anchor.values[p.name]
            for p in self.base.params
            if p.name not in self.free
        )

    def sample_uniform(self, rng: np.random.Generator) -> Configuration:
        specs = self.active_specs()
        z = rng.random(len(specs))
        return self.complete({p.name: p.decode(z[i]) for i, p in enumerate(specs)})

    def descriptor(self) -> dict:
        return {
            "params": [p.to_json() for p in self.base.params],
            "free": [p.name for p in self.active_specs()],
            "anchor": dict(self.anchor.values),
        }


def subspace_from_descriptor(d: dict):
    """Rebuild a ConfigSpace or Subspace from a descriptor dict."""
    base = ConfigSpace.from_descriptor(d)
    if "free" in d and d.get("free"):
        return Subspace(base, set(d["free"]), Configuration(dict(d["anchor"])))
    return base


@dataclass
class RestrictionWarning:
    message: str


def restrict(
    space: ConfigSpace,
    report,
    k: int,
    anchor: Configuration,
    warning_sink: Optional[list] = None,
) -> Subspace:
    """Keep the k parameters with the largest unary importance free, pin the
    rest to the anchor.

    Args:
        report: mapping from param name to unary importance, or any object
            with a `.unary` mapping attribute.
        k: number of free parameters (k > dim clamps to dim with a warning
            record appended to warning_sink or emitted via warnings.warn).
        anchor: configuration supplying values for the pinned parameters.

    Ties in importance break by declaration order in the space, so the result
    is invariant under any positive rescaling of the importance values.
    """
    unary = getattr(report, "unary", report)
    if k < 1:
        raise DomainError("k must be >= 1")
    missing = [n for n in space.names if n not in unary]
    if missing:
        raise DomainError(f"importance report missing parameters: {missing}")
    space.validate(anchor)
    if k > space.dim:
        record = RestrictionWarning(
            f"k={k} exceeds space dimension {space.dim}; clamped to {space.dim}"
        )
        if warning_sink is not None:
            warning_sink.append(record.message)
        else:
            _warnings.warn(record.message)
        k = space.dim
    order = sorted(
        range(space.dim), key=lambda i: (-float(unary[space.names[i]]), i)
    )
    free = {space.names[i] for i in order[:k]}
    return Subspace(space, free, anchor)
