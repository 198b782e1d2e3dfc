from __future__ import annotations

import math

import numpy as np

from ..errors import UsageError
from ..numcore import rng_from_seed
from .manifest import SPLITS, Manifest


def split_sizes(n: int, ratios: tuple[float, float, float]) -> list[int]:
    """Floor each share, then hand leftovers to the largest fractional parts (ties: earlier split)."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise UsageError(f"split ratios must be 3 nonnegative values summing to 1, got {ratios}")
    exact = [round(r * n, 9) for r in ratios]
    sizes = [math.floor(x) for x in exact]
    order = sorted(range(3), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split_manifest(m: Manifest, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> Manifest:
    if len(m) == 0:
        raise UsageError("cannot split an empty manifest")
    sizes = split_sizes(len(m), tuple(ratios))
    perm = rng_from_seed(seed).permutation(len(m))
    labels = np.empty(len(m), dtype=object)
    start = 0
    for name, size in zip(SPLITS, sizes):
        labels[perm[start : start + size]] = name
        start += size
    out = m.copy()
    for r, label in zip(out.records, labels):
        r.split = label
    return out
