from .buffers import GDumbBuffer, ReplayBuffer
from .model import MLPModel
from .spaces import (DEFAULT_BATCH_SIZE, STRATEGY_KINDS, StrategyConfig,
                     apply_overrides, build_space, drifting_space,
                     strategy_config)
from .streams import Task, TaskStream, dump_csv, make_stream, rotation_degrees
from .strategies import (TrainingDiverged, eval_accuracy, grad_check,
                         loss_and_grads, make_buffer, train_task)

__all__ = [
    "DEFAULT_BATCH_SIZE", "STRATEGY_KINDS",
    "GDumbBuffer", "ReplayBuffer", "MLPModel", "StrategyConfig",
    "apply_overrides", "build_space", "drifting_space", "strategy_config",
    "Task", "TaskStream", "dump_csv", "make_stream", "rotation_degrees",
    "TrainingDiverged",
    "eval_accuracy", "grad_check", "loss_and_grads", "make_buffer",
    "train_task",
]
