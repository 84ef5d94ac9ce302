"""Search spaces and the typed config each continual strategy trains from.

All spaces are flat (no conditional parameters). Every strategy shares the
general knobs lr / weight_decay / dropout / epochs; batch_size is held fixed
at 16 by default to keep desk-scale rounds cheap, but any parameter can be
replaced through space overrides.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

from ..hpspace import ConfigSpace, Configuration, ParamSpec

STRATEGY_KINDS = ("naive", "ER", "GDumb", "DER", "LwF", "SI")

DEFAULT_BATCH_SIZE = 16


@dataclass(frozen=True)
class StrategyConfig:
    kind: str
    lr: float
    weight_decay: float = 0.0
    epochs: int = 5
    batch_size: int = DEFAULT_BATCH_SIZE
    dropout: float = 0.0
    mem_size: int = 200
    alpha: float = 0.0       # DER logit-matching weight; LwF distillation weight
    beta: float = 0.0        # DER buffer-label CE weight (0 = plain DER)
    temperature: float = 2.0  # LwF softmax temperature
    si_lambda: float = 0.0
    si_eps: float = 1e-3

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind '{self.kind}'")
        if self.lr < 0 or self.weight_decay < 0 or self.beta < 0:
            raise ValueError("lr, weight_decay and beta must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.mem_size < 0:
            raise ValueError("mem_size must be >= 0 (0 keeps no memories)")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


def _common_params():
    # Ranges span configurations that genuinely fail (lr at either extreme,
    # near-total dropout, a single epoch): a tuner has to earn its keep, and
    # an untuned draw pays for landing badly.
    return [
        ParamSpec("lr", "continuous-log", 1e-5, 0.5),
        ParamSpec("weight_decay", "continuous-log", 1e-6, 1e-2),
        ParamSpec("dropout", "continuous-linear", 0.0, 0.8),
        ParamSpec("epochs", "integer", 1, 20),
    ]


def build_space(kind: str) -> ConfigSpace:
    """Default search space for one strategy kind."""
    params = _common_params()
    if kind in ("ER", "GDumb", "DER"):
        params.append(ParamSpec("mem_size", "integer", 10, 800))
    if kind == "DER":
        params.append(ParamSpec("alpha", "continuous-linear", 0.0, 1.0))
        params.append(ParamSpec("beta", "continuous-linear", 0.0, 1.0))
    if kind == "LwF":
        params.append(ParamSpec("alpha", "continuous-linear", 0.0, 2.0))
        params.append(ParamSpec("temperature", "continuous-linear", 0.5, 4.0))
    if kind == "SI":
        params.append(ParamSpec("lambda", "continuous-linear", 0.0, 5.0))
        params.append(ParamSpec("eps", "continuous-log", 1e-4, 1e-1))
    if kind not in STRATEGY_KINDS:
        raise ValueError(f"unknown strategy kind '{kind}'")
    return ConfigSpace(params)


def drifting_space(n_dims: int = 3) -> ConfigSpace:
    """Unit-cube space for the analytic drifting objective."""
    if n_dims < 1:
        raise ValueError("n_dims must be >= 1")
    return ConfigSpace(
        [ParamSpec(f"x{i}", "continuous-linear", 0.0, 1.0) for i in range(n_dims)]
    )


def apply_overrides(space: ConfigSpace, overrides: Optional[Dict[str, Optional[dict]]]
                    ) -> ConfigSpace:
    """Replace, add, or (with null) remove parameters of a space.

    Overrides map param name -> ParamSpec JSON dict, or -> None to drop the
    parameter. Declaration order: surviving originals first, added ones after.
    """
    if not overrides:
        return space
    kept = []
    for p in space.params:
        if p.name in overrides:
            if overrides[p.name] is not None:
                kept.append(ParamSpec.from_json(overrides[p.name]))
        else:
            kept.append(p)
    for name, body in overrides.items():
        if name not in space and body is not None:
            kept.append(ParamSpec.from_json(body))
    if not kept:
        raise ValueError("overrides removed every parameter")
    return ConfigSpace(kept)


def strategy_config(kind: str, config: Configuration,
                    batch_size: int = DEFAULT_BATCH_SIZE) -> StrategyConfig:
    """Bind a sampled configuration to a StrategyConfig for training."""
    v = config.values
    fields = dict(
        kind=kind,
        lr=float(v["lr"]),
        weight_decay=float(v.get("weight_decay", 0.0)),
        dropout=float(v.get("dropout", 0.0)),
        epochs=int(v.get("epochs", 5)),
        batch_size=batch_size,
    )
    if "mem_size" in v:
        fields["mem_size"] = int(v["mem_size"])
    if kind == "DER":
        fields["alpha"] = float(v.get("alpha", 0.0))
        fields["beta"] = float(v.get("beta", 0.0))
    if kind == "LwF":
        fields["alpha"] = float(v.get("alpha", 0.0))
        fields["temperature"] = float(v.get("temperature", 2.0))
    if kind == "SI":
        fields["si_lambda"] = float(v.get("lambda", 0.0))
        fields["si_eps"] = float(v.get("eps", 1e-3))
    return StrategyConfig(**fields)
