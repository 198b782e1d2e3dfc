"""Transformer blocks shared by the encoders, the fusion module and the decoder.

Sequence tensors are (B, L, d) with a boolean mask (B, L). Padded rows are
zeroed after every sublayer and before every convolution, so a padded batch
gives the same values at valid positions as running each sequence alone.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, VocabError
from ..numcore import Conv1d, Dropout, Embedding, LayerNorm, Linear, Module, ReLU, default_dtype
from .attention import MultiHeadAttention


def sinusoidal_pe(length: int, d: int) -> np.ndarray:
    if d % 2:
        raise ConfigError(f"sinusoidal positions need an even width, got {d}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    rates = 10000.0 ** (np.arange(0, d, 2, dtype=np.float64) / d)
    pe = np.zeros((length, d))
    pe[:, 0::2] = np.sin(pos / rates)
    pe[:, 1::2] = np.cos(pos / rates)
    return pe


def _mask_f(mask: np.ndarray) -> np.ndarray:
    return np.asarray(mask, dtype=default_dtype())[..., None]


class FFTBlock(Module):
    """Self-attention and a two-conv feed-forward, each with residual and post-norm."""

    def __init__(self, d: int, heads: int, ffn_hidden: int, kernel: int, dropout: float, rng):
        self.attn = MultiHeadAttention(d, heads, rng, dropout)
        self.ln1 = LayerNorm(d)
        self.conv1 = Conv1d(d, ffn_hidden, kernel, rng)
        self.relu = ReLU()
        self.conv2 = Conv1d(ffn_hidden, d, 1, rng)
        self.drop = Dropout(dropout)
        self.ln2 = LayerNorm(d)
        self._m = None

    def forward(self, x, mask, training=False, rng=None):
        m = _mask_f(mask)
        self._m = m
        a = self.attn.forward(x, x, mask, training, rng)
        h = self.ln1.forward(x + a) * m
        f = self.conv2.forward(self.relu.forward(self.conv1.forward(h)) * m)
        f = self.drop.forward(f, training, rng)
        return self.ln2.forward(h + f) * m

    def backward(self, dy):
        m = self._m
        dz = self.ln2.backward(dy * m)
        dr = self.conv2.backward(self.drop.backward(dz)) * m
        dh = (dz + self.conv1.backward(self.relu.backward(dr))) * m
        du = self.ln1.backward(dh)
        dxq, dxkv = self.attn.backward(du)
        return du + dxq + dxkv


class BlockStack(Module):
    def __init__(self, n: int, d: int, heads: int, ffn_hidden: int, kernel: int, dropout: float, rng):
        self.blocks = [FFTBlock(d, heads, ffn_hidden, kernel, dropout, rng) for _ in range(n)]

    def forward(self, x, mask, training=False, rng=None):
        m = _mask_f(mask)
        x = (x + sinusoidal_pe(x.shape[-2], x.shape[-1]).astype(x.dtype)) * m
        for b in self.blocks:
            x = b.forward(x, mask, training, rng)
        return x

    def backward(self, dy):
        for b in reversed(self.blocks):
            dy = b.backward(dy)
        return dy


class TextEncoder(Module):
    def __init__(self, vocab: int, d: int, layers: int, heads: int, ffn_hidden: int, kernel: int, dropout: float, rng):
        self.embed = Embedding(vocab, d, rng, scale=np.sqrt(d))
        self.stack = BlockStack(layers, d, heads, ffn_hidden, kernel, dropout, rng)
        self.vocab = vocab
        self._m = None

    def forward(self, ids, mask, training=False, rng=None):
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab):
            raise VocabError(f"phone id outside vocabulary of size {self.vocab}")
        self._m = _mask_f(mask)
        return self.stack.forward(self.embed.forward(ids) * self._m, mask, training, rng)

    def backward(self, dy):
        self.embed.backward(self.stack.backward(dy) * self._m)


class VisualEncoder(Module):
    def __init__(self, d_f: int, d: int, layers: int, heads: int, ffn_hidden: int, kernel: int, dropout: float, rng):
        self.proj = Linear(d_f, d, rng)
        self.stack = BlockStack(layers, d, heads, ffn_hidden, kernel, dropout, rng)
        self.d_f = d_f
        self._m = None

    def forward(self, f, mask, training=False, rng=None):
        if f.shape[-1] != self.d_f:
            raise ConfigError(f"visual features have width {f.shape[-1]}, model expects {self.d_f}")
        self._m = _mask_f(mask)
        return self.stack.forward(self.proj.forward(f) * self._m, mask, training, rng)

    def backward(self, dy):
        self.proj.backward(self.stack.backward(dy) * self._m)


class CrossAttnFusion(Module):
    """Text queries attend over visual keys/values; output keeps the text length."""

    def __init__(self, d: int, heads: int, ffn_hidden: int, dropout: float, rng):
        self.attn = MultiHeadAttention(d, heads, rng, dropout)
        self.ln1 = LayerNorm(d)
        self.fc1 = Linear(d, ffn_hidden, rng)
        self.relu = ReLU()
        self.fc2 = Linear(ffn_hidden, d, rng)
        self.drop = Dropout(dropout)
        self.ln2 = LayerNorm(d)
        self.first = None
        self._m = None

    def forward(self, t, t_mask, v, v_mask, training=False, rng=None):
        m = _mask_f(t_mask)
        self._m = m
        a = self.attn.forward(t, v, v_mask, training, rng)
        h = self.ln1.forward(t + a) * m
        self.first = h
        f = self.drop.forward(self.fc2.forward(self.relu.forward(self.fc1.forward(h))), training, rng)
        return self.ln2.forward(h + f) * m

    def backward(self, dy):
        m = self._m
        dz = self.ln2.backward(dy * m)
        dh = (dz + self.fc1.backward(self.relu.backward(self.fc2.backward(self.drop.backward(dz))))) * m
        du = self.ln1.backward(dh)
        dq, dkv = self.attn.backward(du)
        return du + dq, dkv


class VariancePredictor(Module):
    """[conv -> ReLU -> LayerNorm -> dropout] x2 -> linear to one value per position."""

    def __init__(self, d: int, hidden: int, kernel: int, dropout: float, rng):
        self.conv1 = Conv1d(d, hidden, kernel, rng)
        self.relu1 = ReLU()
        self.ln1 = LayerNorm(hidden)
        self.drop1 = Dropout(dropout)
        self.conv2 = Conv1d(hidden, hidden, kernel, rng)
        self.relu2 = ReLU()
        self.ln2 = LayerNorm(hidden)
        self.drop2 = Dropout(dropout)
        self.out = Linear(hidden, 1, rng)
        self._m = None

    def forward(self, x, mask, training=False, rng=None):
        m = _mask_f(mask)
        self._m = m
        h = self.drop1.forward(self.ln1.forward(self.relu1.forward(self.conv1.forward(x * m))), training, rng)
        h = self.drop2.forward(self.ln2.forward(self.relu2.forward(self.conv2.forward(h * m))), training, rng)
        return self.out.forward(h)[..., 0] * m[..., 0]

    def backward(self, dy):
        m = self._m
        dh = self.out.backward(dy[..., None] * m)
        dh = self.conv2.backward(self.relu2.backward(self.ln2.backward(self.drop2.backward(dh)))) * m
        return self.conv1.backward(self.relu1.backward(self.ln1.backward(self.drop1.backward(dh)))) * m
