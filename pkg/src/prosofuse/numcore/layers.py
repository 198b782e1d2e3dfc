"""Differentiable building blocks with hand-written backward passes.

Every layer caches what its backward needs during ``forward`` and
accumulates parameter gradients into ``Param.grad`` during ``backward``.
A layer instance therefore supports one outstanding forward at a time.
Inputs may carry any number of leading axes: ``(d,)``-last layers treat
``(L, d)`` and ``(B, L, d)`` alike, and sequence layers (``Conv1d``) run
along axis -2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..errors import ConfigError, DimensionError
from .matrix import default_dtype


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise DimensionError("param grad shape differs from value shape")

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def rng_from_seed(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator keyed by ``seed`` and optional sub-stream integers.

    Identical keys always give identical streams; distinct keys are
    statistically independent via numpy's SeedSequence mixing.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


class Module:
    """Container that discovers Params and sub-Modules from its attributes."""

    def named_params(self, prefix: str = "") -> Iterator[tuple[str, Param]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            full = f"{prefix}{name}"
            if isinstance(value, Param):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_params(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_params(f"{full}.{i}.")

    def params(self) -> dict[str, Param]:
        out = {}
        for name, p in self.named_params():
            if name in out:
                raise ValueError(f"duplicate parameter name {name}")
            out[name] = p
        return out

    def zero_grad(self) -> None:
        for _, p in self.named_params():
            p.zero_grad()


def _uniform(rng: np.random.Generator, shape, limit: float) -> np.ndarray:
    return rng.uniform(-limit, limit, size=shape).astype(default_dtype())


class Linear(Module):
    """y = x W^T + b with W of shape (out, in)."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        limit = np.sqrt(6.0 / (d_in + d_out))
        self.w = Param(_uniform(rng, (d_out, d_in), limit))
        self.b = Param(np.zeros((d_out,), dtype=default_dtype())) if bias else None
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.w.value.shape[1]:
            raise DimensionError(f"linear expects last dim {self.w.value.shape[1]}, got {x.shape[-1]}")
        self._x = x
        y = x @ self.w.value.T
        if self.b is not None:
            y = y + self.b.value
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        d_in, d_out = x.shape[-1], dy.shape[-1]
        x2 = x.reshape(-1, d_in)
        dy2 = dy.reshape(-1, d_out)
        self.w.grad += dy2.T @ x2
        if self.b is not None:
            self.b.grad += dy2.sum(axis=0)
        return dy @ self.w.value


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        if eps <= 0:
            raise ConfigError("layer norm eps must be positive")
        self.gamma = Param(np.ones((d,), dtype=default_dtype()))
        self.beta = Param(np.zeros((d,), dtype=default_dtype()))
        self.eps = eps
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        centered = x - x.mean(axis=-1, keepdims=True)
        # exact zero for constant rows; the mean of equal values can be off by an ulp
        centered = np.where(np.ptp(x, axis=-1, keepdims=True) == 0, 0.0, centered).astype(x.dtype, copy=False)
        inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + self.eps)
        xhat = centered * inv_std
        self._cache = (xhat, inv_std)
        return xhat * self.gamma.value + self.beta.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv_std = self._cache
        d = xhat.shape[-1]
        self.gamma.grad += (dy * xhat).reshape(-1, d).sum(axis=0)
        self.beta.grad += dy.reshape(-1, d).sum(axis=0)
        dxhat = dy * self.gamma.value
        return inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )


class Dropout(Module):
    """Inverted dropout: kept entries are scaled by 1/(1-rate)."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self._mask = None

    def forward(self, x: np.ndarray, training: bool, rng: np.random.Generator | None) -> np.ndarray:
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ConfigError("training-mode dropout needs an rng")
        keep = rng.random(x.shape) >= self.rate
        self._mask = keep.astype(x.dtype) / x.dtype.type(1.0 - self.rate)
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy if self._mask is None else dy * self._mask


class ReLU(Module):
    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0).astype(x.dtype, copy=False)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.where(self._mask, dy, 0.0).astype(dy.dtype, copy=False)


class Conv1d(Module):
    """Same-length 1-D convolution over axis -2 (time), channels last.

    Zero padding of (k-1)//2 on each side; k must be odd. Callers zero
    padded time steps beforehand so batched and single-sequence results
    agree.
    """

    def __init__(self, d_in: int, d_out: int, kernel: int, rng: np.random.Generator):
        if kernel < 1 or kernel % 2 == 0:
            raise ConfigError(f"conv kernel must be odd and positive, got {kernel}")
        limit = np.sqrt(6.0 / (d_in * kernel + d_out))
        self.w = Param(_uniform(rng, (d_out, kernel * d_in), limit))
        self.b = Param(np.zeros((d_out,), dtype=default_dtype()))
        self.kernel = kernel
        self.d_in = d_in
        self._cols = None

    def _im2col(self, x: np.ndarray) -> np.ndarray:
        k, pad = self.kernel, (self.kernel - 1) // 2
        if k == 1:
            return x
        width = [(0, 0)] * x.ndim
        width[-2] = (pad, pad)
        xp = np.pad(x, width)
        length = x.shape[-2]
        return np.concatenate([xp[..., j : j + length, :] for j in range(k)], axis=-1)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.d_in:
            raise DimensionError(f"conv expects {self.d_in} channels, got {x.shape[-1]}")
        cols = self._im2col(x)
        self._cols = cols
        return cols @ self.w.value.T + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        cols = self._cols
        d_out = dy.shape[-1]
        self.w.grad += dy.reshape(-1, d_out).T @ cols.reshape(-1, cols.shape[-1])
        self.b.grad += dy.reshape(-1, d_out).sum(axis=0)
        dcols = dy @ self.w.value
        k, pad = self.kernel, (self.kernel - 1) // 2
        if k == 1:
            return dcols
        length = dy.shape[-2]
        shape = list(dy.shape[:-1]) + [self.d_in]
        shape[-2] = length + 2 * pad
        dxp = np.zeros(shape, dtype=dcols.dtype)
        for j in range(k):
            dxp[..., j : j + length, :] += dcols[..., j * self.d_in : (j + 1) * self.d_in]
        return dxp[..., pad : pad + length, :]


class Embedding(Module):
    def __init__(self, count: int, d: int, rng: np.random.Generator, scale: float = 1.0):
        self.table = Param((rng.standard_normal((count, d)) * scale / np.sqrt(d)).astype(default_dtype()))
        self._ids = None

    def forward(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids)
        self._ids = ids
        return self.table.value[ids]

    def backward(self, dy: np.ndarray) -> None:
        np.add.at(self.table.grad, self._ids.reshape(-1), dy.reshape(-1, dy.shape[-1]))
