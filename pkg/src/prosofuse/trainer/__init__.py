"""Training loops, schedules, baselines, evaluation and checkpoints."""

from .config import TASKS, TrainConfig, learning_rate, lr_schedule
from .data import BatchSchedule, epoch_plan, ffnn_targets, log_durations, model_config_for, record_example
from .evaluate import (
    EvalReport,
    evaluate_ffnn,
    evaluate_ped,
    evaluate_tts,
    mean_baseline,
    sequence_mean_mse,
)
from .loop import TrainHistory, Trainer, build_model, checkpoint_hash, load_checkpoint, save_checkpoint, train

__all__ = [
    "BatchSchedule",
    "EvalReport",
    "TASKS",
    "TrainConfig",
    "TrainHistory",
    "Trainer",
    "build_model",
    "checkpoint_hash",
    "epoch_plan",
    "evaluate_ffnn",
    "evaluate_ped",
    "evaluate_tts",
    "ffnn_targets",
    "learning_rate",
    "load_checkpoint",
    "log_durations",
    "lr_schedule",
    "mean_baseline",
    "model_config_for",
    "record_example",
    "save_checkpoint",
    "sequence_mean_mse",
    "train",
]
