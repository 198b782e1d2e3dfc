"""Dense matrices as numpy arrays, with a process-wide precision switch.

Training runs default to float32. Gradient checks switch to float64 with
``precision(np.float64)``. Parameters pick up the dtype that is active when
they are created, so the switch has to wrap model construction.
"""

from __future__ import annotations

import contextlib
from typing import Iterator

import numpy as np

from ..errors import DimensionError, NonFiniteError

_STATE = {"dtype": np.dtype(np.float32), "checked": True}


def default_dtype() -> np.dtype:
    return _STATE["dtype"]


def set_default_dtype(dtype) -> None:
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported precision {dtype}")
    _STATE["dtype"] = dtype


@contextlib.contextmanager
def precision(dtype) -> Iterator[np.dtype]:
    """Temporarily switch the default floating dtype."""
    previous = _STATE["dtype"]
    set_default_dtype(dtype)
    try:
        yield _STATE["dtype"]
    finally:
        _STATE["dtype"] = previous


def checked_mode() -> bool:
    return _STATE["checked"]


def set_checked_mode(flag: bool) -> None:
    _STATE["checked"] = bool(flag)


def _require_finite(m: np.ndarray, what: str) -> None:
    if _STATE["checked"] and not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{what} contains NaN or Inf")


def as_matrix(data, dtype=None) -> np.ndarray:
    """Coerce ``data`` to a 2-D float array in the active precision."""
    m = np.asarray(data, dtype=dtype or _STATE["dtype"])
    if m.ndim == 1:
        m = m[np.newaxis, :]
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    _require_finite(m, "matrix")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    _require_finite(out, "matmul output")
    return out


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, stabilized by subtracting the row max."""
    shifted = m - np.max(m, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)
