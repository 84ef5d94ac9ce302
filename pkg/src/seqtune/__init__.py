"""Hyperparameter tuning for learners trained over a sequence of tasks.

The pieces compose bottom-up: `hpspace` declares search domains, `samplers`
propose configurations round by round, `trials` record what happened,
`fanova` turns finished rounds into importance estimates, and `adaptive`
runs the whole sequence, shrinking the search space once the important
parameters are known. `clbench` supplies small continual-learning workloads
to tune against, `metrics` the accuracy bookkeeping, and `cli` a runner.
"""

from .hpspace import (
    ConfigSpace,
    Configuration,
    DomainError,
    ParamSpec,
    Subspace,
    restrict,
    subspace_from_descriptor,
)
from .trials import EmptyRoundError, RoundHistory, Trial, load_history, save_history
from .samplers import GridExhausted, SamplerSpec, ask
from .fanova import (
    ImportanceReport,
    fit_forest,
    get_param_imp,
    importance_bruteforce,
    variance_decomposition,
)
from .adaptive import (
    SequenceResult,
    StrategySpec,
    TunerPolicy,
    hpo_round,
    make_objective,
    predicted_budget,
    run_sequence,
    save_sequence_result,
)
from .clbench import STRATEGY_KINDS, build_space, make_stream
from .metrics import (
    AccuracyMatrix,
    ComparabilityError,
    order_robustness,
    stream_accuracy,
    time_demand,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyMatrix",
    "ComparabilityError",
    "ConfigSpace",
    "Configuration",
    "DomainError",
    "EmptyRoundError",
    "GridExhausted",
    "ImportanceReport",
    "ParamSpec",
    "RoundHistory",
    "SamplerSpec",
    "SequenceResult",
    "StrategySpec",
    "Subspace",
    "Trial",
    "TunerPolicy",
    "STRATEGY_KINDS",
    "ask",
    "build_space",
    "fit_forest",
    "get_param_imp",
    "hpo_round",
    "importance_bruteforce",
    "load_history",
    "make_objective",
    "make_stream",
    "order_robustness",
    "predicted_budget",
    "restrict",
    "run_sequence",
    "save_history",
    "save_sequence_result",
    "stream_accuracy",
    "subspace_from_descriptor",
    "time_demand",
    "variance_decomposition",
    "__version__",
]
