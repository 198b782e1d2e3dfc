from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

from ..errors import ConfigError, UsageError

TASKS = ("ffnn", "ped", "tts")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings. ``lr_scale`` multiplies the noam curve; 1.0 is the plain schedule."""

    batch_size: int = 32
    max_steps: int = 1000
    seed: int = 0
    lr_mode: str = "noam"
    fixed_lr: float = 1e-5
    warmup: int = 4000
    lr_scale: float = 1.0
    eval_every: int = 0
    eval_split: str = "val"
    checkpoint_path: str | None = None
    checkpoint_every: int = 0
    log_path: str | None = None
    log_timestamps: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be at least 1")
        if self.lr_mode not in ("noam", "fixed"):
            raise ConfigError(f"lr_mode must be 'noam' or 'fixed', got {self.lr_mode!r}")
        if self.warmup < 1 or self.fixed_lr <= 0 or self.lr_scale <= 0:
            raise ConfigError("warmup, fixed_lr and lr_scale must be positive")
        if self.eval_every < 0 or self.checkpoint_every < 0:
            raise ConfigError("eval_every and checkpoint_every must be nonnegative")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        unknown = set(obj) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train config keys {sorted(unknown)}")
        return cls(**obj)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def lr_schedule(step: int, d_model: int, warmup: int = 4000) -> float:
    """Inverse square-root decay after a linear warmup; peaks at step == warmup."""
    if step < 1:
        raise UsageError(f"learning-rate step must be >= 1, got {step}")
    if d_model < 1 or warmup < 1:
        raise ConfigError("d_model and warmup must be positive")
    return d_model**-0.5 * min(step**-0.5, step * warmup**-1.5)


def learning_rate(cfg: TrainConfig, step: int, d_model: int) -> float:
    if cfg.lr_mode == "fixed":
        if step < 1:
            raise UsageError(f"learning-rate step must be >= 1, got {step}")
        return cfg.fixed_lr
    return cfg.lr_scale * lr_schedule(step, d_model, cfg.warmup)

