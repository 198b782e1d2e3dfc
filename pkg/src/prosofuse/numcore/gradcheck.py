from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import NonFiniteError


def grad_check(
    f: Callable[[], float],
    arrays: Sequence[np.ndarray],
    analytic: Sequence[np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Max element-wise relative error between ``analytic`` and central differences.

    ``f`` must read ``arrays`` on every call; each element is perturbed in
    place by +/-eps and restored. The relative error of one element is
    |a - n| / max(|a|, |n|, 1e-8). Run this in float64.
    """
    worst = 0.0
    for arr, grad in zip(arrays, analytic):
        if arr.shape != grad.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match input {arr.shape}")
        flat = arr.reshape(-1)
        if not np.shares_memory(flat, arr):
            raise ValueError("grad_check needs contiguous arrays it can perturb in place")
        g = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f()
            flat[i] = orig - eps
            lo = f()
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NonFiniteError(f"f is not finite near element {i}")
            num = (hi - lo) / (2.0 * eps)
            a = float(g[i])
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst = max(worst, err)
    return worst
