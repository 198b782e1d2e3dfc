from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DimensionError
from .layers import Param


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.step < 0:
            raise ConfigError("Adam step must be nonnegative")


def adam_step(params: dict[str, Param], state: AdamState) -> AdamState:
    """Apply one bias-corrected Adam update in place, then zero the grads.

    ``state.lr`` is read at call time, so schedulers set it before each step.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for name, p in params.items():
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.value)
            state.v[name] = np.zeros_like(p.value)
        m, v = state.m[name], state.v[name]
        if m.shape != p.value.shape:
            raise DimensionError(f"optimizer state for {name} has shape {m.shape}, param {p.value.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / corr1
        v_hat = v / corr2
        p.value -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        p.zero_grad()
    return state
