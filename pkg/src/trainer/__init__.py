"""Optimizer, checkpoints, the training loop, the gradient suite and the CLI."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .gradsuite import build_cases, format_table, run_gradient_suite
from .loop import MetricsWriter, Trainer, evaluate, evaluate_sharded, predict
from .optim import Adam, adam_step, lr_schedule

__all__ = [
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "build_cases",
    "format_table",
    "run_gradient_suite",
    "MetricsWriter",
    "Trainer",
    "evaluate",
    "evaluate_sharded",
    "predict",
    "Adam",
    "adam_step",
    "lr_schedule",
]
