from __future__ import annotations

import numpy as np

from ..errors import AlignmentError, UsageError


def expand_by_durations(values, durations) -> np.ndarray:
    """Repeat each phone-level value for its frame count."""
    return np.repeat(np.asarray(values, dtype=np.float64), np.asarray(durations, dtype=np.int64))


def phone_average(contour, durations, voiced_only: bool = False) -> np.ndarray:
    """Mean of ``contour`` over each phone span.

    With ``voiced_only`` (pitch), zero frames are excluded and a span that
    is entirely unvoiced averages to 0.
    """
    c = np.asarray(contour, dtype=np.float64)
    d = np.asarray(durations, dtype=np.int64)
    if np.any(d < 0) or int(d.sum()) != c.size:
        raise AlignmentError(f"durations sum to {int(d.sum())} but contour has {c.size} frames")
    starts = np.concatenate([[0], np.cumsum(d)[:-1]])
    out = np.zeros(d.size)
    for k, (s, n) in enumerate(zip(starts, d)):
        span = c[s : s + n]
        if voiced_only:
            span = span[span > 0]
        out[k] = span.mean() if span.size else 0.0
    return out


def chunk_sizes(t: int, n: int) -> np.ndarray:
    """Sizes of n contiguous chunks covering t items; longer chunks first."""
    if n < 1 or n > t:
        raise UsageError(f"need 1 <= n <= t, got n={n}, t={t}")
    base, extra = divmod(t, n)
    return np.array([base + 1] * extra + [base] * (n - extra), dtype=np.int64)


def downsample_average(p, n: int) -> np.ndarray:
    """Average a length-t sequence down to n values, one per contiguous chunk."""
    p = np.asarray(p, dtype=np.float64)
    sizes = chunk_sizes(p.shape[0], n)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    return np.add.reduceat(p, starts, axis=0) / (sizes if p.ndim == 1 else sizes[:, None])
