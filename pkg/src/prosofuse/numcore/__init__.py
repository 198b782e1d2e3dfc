"""Minimal numerical engine: matrices, layers with explicit backward, Adam, gradient checking."""

from .gradcheck import grad_check
from .layers import Conv1d, Dropout, Embedding, LayerNorm, Linear, Module, Param, ReLU, rng_from_seed
from .matrix import (
    as_matrix,
    checked_mode,
    default_dtype,
    matmul,
    precision,
    set_checked_mode,
    set_default_dtype,
    softmax_rows,
)
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "Conv1d",
    "Dropout",
    "Embedding",
    "LayerNorm",
    "Linear",
    "Module",
    "Param",
    "ReLU",
    "adam_step",
    "as_matrix",
    "checked_mode",
    "default_dtype",
    "grad_check",
    "matmul",
    "precision",
    "rng_from_seed",
    "set_checked_mode",
    "set_default_dtype",
    "softmax_rows",
]
