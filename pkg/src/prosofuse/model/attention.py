from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DimensionError
from ..numcore import Dropout, Linear, Module, softmax_rows


def plain_attention(t: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """softmax(t v^T / sqrt(d)) v with no learned projections."""
    t = np.asarray(t)
    v = np.asarray(v)
    if t.ndim != 2 or v.ndim != 2 or t.shape[1] != v.shape[1]:
        raise DimensionError(f"plain_attention needs (L, d) and (n, d), got {t.shape} and {v.shape}")
    if v.shape[0] == 0:
        raise DimensionError("plain_attention needs at least one key")
    weights = softmax_rows(t @ v.T / np.sqrt(t.shape[1]))
    return weights @ v, weights


class MultiHeadAttention(Module):
    """Scaled dot-product attention with per-head Q/K/V and an output projection.

    Queries come from ``xq`` and keys/values from ``xkv`` (the same array for
    self-attention). ``key_mask`` (..., n) marks valid keys. K has no bias:
    a key bias shifts every score in a row equally and has zero gradient.
    """

    def __init__(self, d_model: int, heads: int, rng: np.random.Generator, dropout: float = 0.0, d_kv: int | None = None):
        if heads < 1 or d_model % heads:
            raise ConfigError(f"d_model {d_model} is not divisible by {heads} heads")
        d_kv = d_model if d_kv is None else d_kv
        self.heads = heads
        self.wq = Linear(d_model, d_model, rng)
        self.wk = Linear(d_kv, d_model, rng, bias=False)
        self.wv = Linear(d_kv, d_model, rng)
        self.wo = Linear(d_model, d_model, rng)
        self.drop = Dropout(dropout)
        self.weights = None
        self._cache = None

    def _split(self, x: np.ndarray) -> np.ndarray:
        *lead, length, d = x.shape
        return x.reshape(*lead, length, self.heads, d // self.heads).swapaxes(-2, -3)

    @staticmethod
    def _merge(x: np.ndarray) -> np.ndarray:
        x = x.swapaxes(-2, -3)
        return x.reshape(*x.shape[:-2], x.shape[-2] * x.shape[-1])

    def forward(self, xq, xkv, key_mask=None, training: bool = False, rng=None) -> np.ndarray:
        qh = self._split(self.wq.forward(xq))
        kh = self._split(self.wk.forward(xkv))
        vh = self._split(self.wv.forward(xkv))
        scale = 1.0 / np.sqrt(qh.shape[-1])
        scores = (qh @ kh.swapaxes(-1, -2)) * scale
        if key_mask is not None:
            scores = np.where(np.asarray(key_mask)[..., None, None, :], scores, -np.inf)
        a = softmax_rows(scores)
        self.weights = a
        self._cache = (qh, kh, vh, a, scale)
        out = self.wo.forward(self._merge(a @ vh))
        return self.drop.forward(out, training, rng)

    def backward(self, dy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        qh, kh, vh, a, scale = self._cache
        dctx = self._split(self.wo.backward(self.drop.backward(dy)))
        da = dctx @ vh.swapaxes(-1, -2)
        dvh = a.swapaxes(-1, -2) @ dctx
        ds = a * (da - (da * a).sum(axis=-1, keepdims=True))
        dqh = (ds @ kh) * scale
        dkh = (ds.swapaxes(-1, -2) @ qh) * scale
        dxq = self.wq.backward(self._merge(dqh))
        dxkv = self.wk.backward(self._merge(dkh)) + self.wv.backward(self._merge(dvh))
        return dxq, dxkv


def _mean_rows(v: np.ndarray, v_mask) -> tuple[np.ndarray, np.ndarray]:
    if v_mask is None:
        w = np.full(v.shape[:-1], 1.0 / v.shape[-2], dtype=v.dtype)
    else:
        m = np.asarray(v_mask, dtype=v.dtype)
        w = m / m.sum(axis=-1, keepdims=True)
    return (w[..., None] * v).sum(axis=-2, keepdims=True), w


def pool_fuse(t: np.ndarray, v: np.ndarray, v_mask=None) -> np.ndarray:
    """Add the mean of the valid visual rows to every text row."""
    if t.shape[-1] != v.shape[-1]:
        raise DimensionError(f"pool_fuse needs equal widths, got {t.shape[-1]} and {v.shape[-1]}")
    return t + _mean_rows(v, v_mask)[0]


def pool_fuse_backward(dy: np.ndarray, v: np.ndarray, v_mask=None) -> tuple[np.ndarray, np.ndarray]:
    w = _mean_rows(v, v_mask)[1]
    return dy, w[..., None] * dy.sum(axis=-2, keepdims=True)
